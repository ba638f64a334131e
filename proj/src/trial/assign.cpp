/**
 * @file assign.cpp
 * @brief Seeded randomness and balanced group assignment
 */

#include "mica/trial.hpp"

#include "mica/error.hpp"
#include "text_util.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <set>

namespace mica::trial {

rng::rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t rng::below(std::uint64_t bound) {
    if (bound == 0) throw mica_error("BadBound", "bound must be positive");
    // Reject the top partial block so every residue is equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

std::int64_t rng::between(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw mica_error("BadBound", "empty range");
    const auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
    if (span == std::numeric_limits<std::uint64_t>::max()) return static_cast<std::int64_t>(engine_());
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + below(span + 1));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string_view to_string(group g) noexcept {
    return g == group::mica ? "P_Mica" : "P_Direct";
}

std::optional<group> parse_group(std::string_view s) noexcept {
    if (s == "P_Mica") return group::mica;
    if (s == "P_Direct") return group::direct;
    return std::nullopt;
}

std::size_t assignment::count(group g) const {
    std::size_t n = 0;
    for (const auto& [id, gg] : groups) n += gg == g ? 1 : 0;
    return n;
}

std::vector<std::string> parse_roster(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = detail::trim(text.substr(pos, end - pos));
        if (!line.empty() && line.front() != '#') out.emplace_back(line);
        pos = end + 1;
    }
    return out;
}

assignment assign_groups(const std::vector<std::string>& roster, std::uint64_t seed) {
    if (roster.empty()) throw mica_error("EmptyRoster", "roster has no ids");
    std::set<std::string, std::less<>> seen;
    for (const auto& id : roster) {
        if (id.empty()) throw mica_error("EmptyRoster", "roster contains an empty id");
        if (!seen.insert(id).second) throw mica_error("DuplicateRosterId", "duplicate roster id '" + id + "'");
    }

    std::vector<std::string> order = roster;
    rng r(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(r.below(i + 1));
        std::swap(order[i], order[j]);
    }

    assignment a;
    a.seed = seed;
    a.roster = roster;
    const std::size_t mica_count = (order.size() + 1) / 2;
    for (std::size_t i = 0; i < order.size(); ++i) {
        a.groups[order[i]] = i < mica_count ? group::mica : group::direct;
    }
    return a;
}

std::string assignment_to_json(const assignment& a) {
    nlohmann::ordered_json j;
    j["seed"] = a.seed;
    j["counts"] = {{"P_Mica", a.count(group::mica)}, {"P_Direct", a.count(group::direct)}};
    auto& list = j["assignments"] = nlohmann::ordered_json::array();
    for (const auto& id : a.roster) {
        list.push_back({{"id", id}, {"group", to_string(a.groups.at(id))}});
    }
    return j.dump(2) + "\n";
}

assignment assignment_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw mica_error("BadAssignment", e.what());
    }
    assignment a;
    try {
        a.seed = j.value("seed", std::uint64_t{0});
        for (const auto& item : j.at("assignments")) {
            const auto id = item.at("id").get<std::string>();
            const auto g = parse_group(item.at("group").get<std::string>());
            if (!g) throw mica_error("BadAssignment", "unknown group for '" + id + "'");
            if (!a.groups.emplace(id, *g).second) {
                throw mica_error("DuplicateRosterId", "duplicate roster id '" + id + "'");
            }
            a.roster.push_back(id);
        }
    } catch (const mica_error&) {
        throw;
    } catch (const std::exception& e) {
        throw mica_error("BadAssignment", e.what());
    }
    return a;
}

} // namespace mica::trial
