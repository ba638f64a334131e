/**
 * @file trial.hpp
 * @brief Study harness: group assignment, persona simulation, duration and
 *        satisfaction statistics
 *
 * All arithmetic over durations and 1-9 scores is done on integer sums with
 * a single final division, so results do not depend on accumulation order.
 */

#pragma once

#include "mica/engine.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mica::trial {

// =============================================================================
// Randomness
// =============================================================================

/// mt19937_64 with a portable bounded draw (std distributions differ across
/// standard libraries, which would break cross-platform reproducibility).
class rng {
public:
    explicit rng(std::uint64_t seed);
    /// Uniform integer in [0, bound); bound must be positive.
    std::uint64_t below(std::uint64_t bound);
    /// Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi);

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; derives independent per-item seeds.
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept;

// =============================================================================
// Group assignment
// =============================================================================

enum class group { mica, direct };

[[nodiscard]] std::string_view to_string(group g) noexcept;
[[nodiscard]] std::optional<group> parse_group(std::string_view s) noexcept;

struct assignment {
    std::uint64_t seed = 0;
    std::vector<std::string> roster;
    std::map<std::string, group> groups;

    [[nodiscard]] std::size_t count(group g) const;
    bool operator==(const assignment&) const = default;
};

/// One id per non-blank line, surrounding whitespace removed.
[[nodiscard]] std::vector<std::string> parse_roster(std::string_view text);

/**
 * @brief Seeded balanced split.
 *
 * Fisher-Yates permutation of the roster; the first ceil(n/2) ids go to
 * P_Mica, the rest to P_Direct. Throws mica_error("EmptyRoster") or
 * mica_error("DuplicateRosterId").
 */
[[nodiscard]] assignment assign_groups(const std::vector<std::string>& roster, std::uint64_t seed);

[[nodiscard]] std::string assignment_to_json(const assignment& a);
[[nodiscard]] assignment assignment_from_json(std::string_view text);

// =============================================================================
// Durations
// =============================================================================

struct trim_rule {
    enum class type { median_multiple, absolute_cap, none };

    type kind = type::median_multiple;
    std::int64_t factor = 3;  ///< median_multiple: drop values > factor × median
    std::int64_t cap_ms = 0;  ///< absolute_cap: drop values > cap_ms

    [[nodiscard]] std::string describe() const;
};

struct duration_stats {
    std::size_t n_used = 0;
    std::size_t n_trimmed = 0;
    double mean_ms = 0;
    std::int64_t min_ms = 0;
    std::int64_t max_ms = 0;
    std::string trim_rule;

    bool operator==(const duration_stats&) const = default;
};

/// Throws mica_error("EmptyInput") or mica_error("NegativeDuration").
[[nodiscard]] duration_stats compute_duration_stats(std::span<const std::int64_t> durations,
                                                    const trim_rule& rule = {});

/// `id,milliseconds` per line; blank lines and `#` comments skipped.
[[nodiscard]] std::vector<std::pair<std::string, std::int64_t>> parse_durations(std::string_view text);

// =============================================================================
// Satisfaction surveys
// =============================================================================

struct age_band {
    std::string name;
    std::optional<std::int64_t> lo;
    std::optional<std::int64_t> hi;

    [[nodiscard]] bool contains(std::int64_t age) const noexcept {
        return (!lo || age >= *lo) && (!hi || age <= *hi);
    }
    bool operator==(const age_band&) const = default;
};

/// Comma-separated `<n`, `a..b`, `>n` items, e.g. "<44,44..56,>56".
[[nodiscard]] std::vector<age_band> parse_age_bands(std::string_view spec);
[[nodiscard]] std::vector<age_band> default_age_bands();
/// Throws mica_error("MalformedBands") on overlap or gap between bands.
void check_age_bands(const std::vector<age_band>& bands);

struct survey_response {
    std::string participant;  ///< session id
    std::string anon_ref;     ///< from the session's started event, when known
    std::string role;
    std::map<std::string, std::int64_t> scores;
    std::optional<std::int64_t> respondent_age;

    bool operator==(const survey_response&) const = default;
};

/// True iff the dimension set matches the role exactly and every score is in 1..9.
[[nodiscard]] bool survey_is_valid(const survey_response& r);

struct survey_batch {
    std::vector<survey_response> responses;  ///< valid, latest submission per (participant, role)
    std::size_t invalid = 0;
};

/**
 * @brief Read surveys from JSONL text.
 *
 * Lines are either service event records (`survey` events are used, and
 * `started` events supply each session's anon_ref) or bare response objects
 * {session_id, role, scores, respondent_age?}. A later submission for the
 * same participant and role replaces the earlier one. Invalid responses are
 * counted and dropped.
 */
[[nodiscard]] survey_batch read_surveys(std::string_view text);

struct dimension_stats {
    std::int64_t count = 0;
    std::int64_t sum = 0;
    std::int64_t min = 0;
    std::int64_t max = 0;

    void add(std::int64_t v);
    [[nodiscard]] double mean() const noexcept {
        return count == 0 ? 0.0 : static_cast<double>(sum) / static_cast<double>(count);
    }
    bool operator==(const dimension_stats&) const = default;
};

using dimension_table = std::map<std::string, dimension_stats>;

struct satisfaction_report {
    /// group → role → dimension
    std::map<std::string, std::map<std::string, dimension_table>> by_group;
    /// age band → dimension (patient responses with an age inside a band)
    std::map<std::string, dimension_table> by_age_band;
    /// role → dimension → mean(P_Mica) − mean(P_Direct), where both exist
    std::map<std::string, std::map<std::string, double>> mica_minus_direct;
    std::int64_t valid_responses = 0;
    std::int64_t unbanded_patient_responses = 0;
};

/// Responses map to the roster by session id, falling back to anon_ref.
/// Throws mica_error("UnassignedSession") or mica_error("MalformedBands").
[[nodiscard]] satisfaction_report aggregate_surveys(const std::vector<survey_response>& responses,
                                                    const assignment& groups,
                                                    const std::vector<age_band>& bands);

struct trial_report {
    std::map<std::string, duration_stats> durations;  ///< per group
    std::optional<double> duration_reduction_ms;      ///< mean(P_Direct) − mean(P_Mica)
    satisfaction_report satisfaction;
    std::size_t invalid_surveys = 0;
};

[[nodiscard]] trial_report build_trial_report(
    const survey_batch& surveys, const assignment& groups,
    const std::vector<std::pair<std::string, std::int64_t>>& durations,
    const std::vector<age_band>& bands, const trim_rule& rule = {});

[[nodiscard]] std::string render_trial_report_text(const trial_report& r);
[[nodiscard]] std::string render_trial_report_json(const trial_report& r);

// =============================================================================
// Persona simulation
// =============================================================================

struct weighted_answer {
    std::string utterance;
    std::uint64_t weight = 1;
};

struct latency_range {
    std::int64_t min_ms = 1000;
    std::int64_t max_ms = 10000;
};

struct persona_node {
    std::vector<weighted_answer> answers;
    std::optional<latency_range> latency;
};

/**
 * @brief Per-node answer and latency distributions.
 *
 * JSON form:
 *
 *     {"default_latency_ms": {"min": 2000, "max": 9000},
 *      "max_attempts_per_node": 25,
 *      "nodes": {"q_age": {"answers": [{"utterance": "45", "weight": 3}, ...],
 *                          "latency_ms": {"min": 1000, "max": 4000}}}}
 *
 * Utterances that are not legal answers exercise rejection and
 * interruption paths.
 */
struct persona_spec {
    std::map<std::string, persona_node> nodes;
    latency_range default_latency;
    std::uint32_t max_attempts_per_node = 25;
};

[[nodiscard]] persona_spec parse_persona_spec(std::string_view json_text);

/// One seeded interview through the real engine, starting at `start_ms`.
/// Throws mica_error("PersonaSpecIncomplete") or mica_error("PersonaStuck").
[[nodiscard]] engine::session_state run_persona(const engine::dialog_engine& engine,
                                                const persona_spec& spec, std::uint64_t seed,
                                                std::int64_t start_ms = 0);

struct simulation_report {
    std::uint32_t n = 0;
    std::uint64_t seed = 0;
    std::size_t nodes_reachable = 0;
    std::size_t nodes_hit = 0;
    double coverage_pct = 0;
    std::vector<std::string> hit_nodes;
    std::map<std::int64_t, std::int64_t> question_count_histogram;
    std::int64_t duration_min_ms = 0;
    std::int64_t duration_max_ms = 0;
    double duration_mean_ms = 0;
    std::int64_t duration_p50_ms = 0;
    std::int64_t duration_p90_ms = 0;
    std::map<std::string, std::int64_t> flag_incidence;
    std::map<std::string, std::int64_t> profile_counts;
    std::int64_t rejections = 0;
    std::int64_t interruptions = 0;
};

/**
 * @brief Run n personas; persona i uses seed mix_seed(seed, i).
 *
 * Sessions may run on `threads` workers; results are merged in persona order
 * so the report is identical for any thread count. Throws
 * mica_error("PersonaSpecIncomplete") naming the first reachable node
 * without an answer distribution.
 */
[[nodiscard]] simulation_report simulate_personas(const engine::dialog_engine& engine,
                                                  const persona_spec& spec, std::uint32_t n,
                                                  std::uint64_t seed, unsigned threads = 1);

[[nodiscard]] std::string render_simulation_text(const simulation_report& r);
[[nodiscard]] std::string render_simulation_json(const simulation_report& r);

} // namespace mica::trial
