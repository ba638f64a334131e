/**
 * @file anonymize.cpp
 * @brief Keyed anonymized patient references
 */

#include "mica/error.hpp"
#include "mica/summary.hpp"
#include "text_util.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <array>

namespace mica::summary {

namespace {

std::string hmac_token(std::span<const unsigned char> secret, std::string_view message) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    const unsigned char* ok =
        HMAC(EVP_sha256(), secret.data(), static_cast<int>(secret.size()),
             reinterpret_cast<const unsigned char*>(message.data()), message.size(),
             digest.data(), &len);
    if (!ok || len < anon_ref_length / 2) throw mica_error("CryptoFailure", "HMAC computation failed");

    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(anon_ref_length);
    for (std::size_t i = 0; i < anon_ref_length / 2; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0x0f];
    }
    return out;
}

bool shares_run(std::string_view token, const std::string& lowered_id) {
    for (std::size_t i = 0; i + 4 <= lowered_id.size(); ++i) {
        if (token.find(std::string_view(lowered_id).substr(i, 4)) != std::string_view::npos) {
            return true;
        }
    }
    return false;
}

} // namespace

std::string anonymize_patient(std::string_view raw_id, std::span<const unsigned char> secret) {
    if (raw_id.empty()) throw mica_error("EmptyId", "patient id is empty");
    if (secret.size() < min_secret_bytes) {
        throw mica_error("WeakSecret", "anonymization secret must be at least " +
                                           std::to_string(min_secret_bytes) + " bytes");
    }
    const std::string lowered = detail::ascii_lower(raw_id);
    std::string message(raw_id);
    std::string token = hmac_token(secret, message);
    for (std::uint32_t counter = 1; shares_run(token, lowered); ++counter) {
        if (counter > (1u << 20)) {
            throw mica_error("AnonymizationFailed", "no token free of raw-id fragments");
        }
        message = std::string(raw_id);
        message += '\0';
        message += std::to_string(counter);
        token = hmac_token(secret, message);
    }
    return token;
}

std::string anonymize_patient(std::string_view raw_id, std::string_view secret) {
    return anonymize_patient(raw_id, std::span<const unsigned char>(
                                         reinterpret_cast<const unsigned char*>(secret.data()),
                                         secret.size()));
}

} // namespace mica::summary
