/**
 * @file summary.hpp
 * @brief Doctor-facing summary, prescription draft and patient anonymization
 */

#pragma once

#include "mica/clinical.hpp"
#include "mica/engine.hpp"
#include "mica/script.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mica::summary {

/// Length of an anonymized patient reference (lowercase hex).
inline constexpr std::size_t anon_ref_length = 32;
inline constexpr std::size_t min_secret_bytes = 16;

/**
 * @brief Keyed one-way token for a raw patient id.
 *
 * HMAC-SHA-256 of the id under `secret`, truncated to 128 bits and hex
 * encoded. If the token happens to contain any 4-character run of the raw id
 * (case-insensitive), a counter is appended to the message and the hash is
 * recomputed, so the result stays deterministic.
 *
 * Throws mica_error("EmptyId") or mica_error("WeakSecret").
 */
[[nodiscard]] std::string anonymize_patient(std::string_view raw_id,
                                            std::span<const unsigned char> secret);
[[nodiscard]] std::string anonymize_patient(std::string_view raw_id, std::string_view secret);

struct answer_line {
    std::string node_id;
    std::string prompt;
    std::string answer;

    bool operator==(const answer_line&) const = default;
};

struct section_answers {
    std::string section;
    std::vector<answer_line> answers;

    bool operator==(const section_answers&) const = default;
};

struct doctor_summary {
    std::string anon_ref;
    std::string script_name;
    std::int64_t script_version = 0;
    std::vector<clinical::red_flag> red_flags;
    std::string profile;
    std::optional<clinical::motivation> motivation;
    std::vector<clinical::activity_score> scores;
    clinical::risk_assessment risk;
    clinical::motif_list motifs;
    std::vector<section_answers> answers_by_section;
    std::int64_t interview_duration_ms = 0;
    std::int64_t generated_at = 0;

    bool operator==(const doctor_summary&) const = default;
};

/// Throws mica_error("SessionIncomplete"). generated_at is the session's last event time.
[[nodiscard]] doctor_summary generate_summary(const script::dialog_script& script,
                                              const engine::session_state& session,
                                              const clinical::assessment& clinical);

enum class summary_format { plain, structured };

/**
 * Plain text has the fixed block order RED FLAGS, PROFILE, MOTIVATION,
 * SCORES, RISK FACTORS, COMPLAINTS, ANSWERS, TIMING. Structured output is
 * the JSON object served by the HTTP API, `red_flags` first.
 */
[[nodiscard]] std::string render_summary(const doctor_summary& summary, summary_format format);

/// Inverse of the structured rendering.
[[nodiscard]] doctor_summary parse_structured_summary(std::string_view json_text);

struct prescription_draft {
    std::string anon_ref;
    std::string template_id;
    std::string text;
    std::map<std::string, std::string> filled;
    std::vector<std::string> missing;
    bool complete = true;
    std::string status = "draft";  ///< never anything else

    bool operator==(const prescription_draft&) const = default;
};

/// Fills `{anon_ref}`, `{profile}`, `{activity_band}`, `{motivation}` and
/// `{date}` (UTC, YYYY-MM-DD). Unknown or unavailable slots stay in the text
/// and are listed in `missing`.
[[nodiscard]] prescription_draft prepare_prescription(const doctor_summary& summary,
                                                      std::string_view tmpl,
                                                      std::string template_id = "activity");

} // namespace mica::summary
