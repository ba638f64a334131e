/**
 * @file clinical.hpp
 * @brief Scores, risk factors, red flags, profile, motivation and motifs
 *
 * Every function here is a pure function of its arguments. Clinical content
 * (weights, thresholds, rules) comes from the script, never from code.
 */

#pragma once

#include "mica/engine.hpp"
#include "mica/error.hpp"
#include "mica/script.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mica::clinical {

using engine::patient_facts;

struct activity_score {
    std::string score_id;
    std::int64_t total = 0;
    std::string band;

    bool operator==(const activity_score&) const = default;
};

struct risk_assessment {
    std::int64_t count = 0;
    std::vector<std::string> contributing;
    int age_sex_contribution = 0;

    bool operator==(const risk_assessment&) const = default;
};

struct red_flag {
    std::string id;
    std::string triggered_by;  ///< rule expression in canonical text form

    bool operator==(const red_flag&) const = default;
};

inline constexpr std::string_view unclassified_profile = "unclassified";

struct motivation {
    script::motivation_level level = script::motivation_level::low;
    std::string source_score_id;

    bool operator==(const motivation&) const = default;
};

struct motif {
    std::string category;
    std::string text;
    std::string source;
    std::int64_t count = 1;

    bool operator==(const motif&) const = default;
};

using motif_list = std::vector<motif>;

/// Risk-factor fact keys (script order of their `riskfactor` questions) plus
/// the optional age/sex rule.
struct risk_config {
    std::vector<std::string> factor_keys;
    std::optional<script::demographics_config> demographics;
};

[[nodiscard]] risk_config risk_config_from(const script::dialog_script& script);

/// Thrown by compute_activity_score; lists the unanswered score questions.
class missing_answers_error : public mica_error {
public:
    explicit missing_answers_error(std::vector<std::string> nodes);
    [[nodiscard]] const std::vector<std::string>& nodes() const noexcept { return nodes_; }

private:
    std::vector<std::string> nodes_;
};

[[nodiscard]] activity_score compute_activity_score(const patient_facts& facts,
                                                    const script::score_rule& rule,
                                                    const script::dialog_script& script);

/// Throws mica_error("MissingDemographics") when the age/sex rule is
/// configured but either fact is absent.
[[nodiscard]] risk_assessment count_risk_factors(const patient_facts& facts,
                                                 const risk_config& config);

/// Everything a rule expression can observe.
struct rule_context {
    const patient_facts* facts = nullptr;
    std::int64_t riskcount = 0;
    const std::vector<activity_score>* scores = nullptr;
    std::optional<std::string> age_fact;
};

/// `fact(k)` holds iff scalar k is boolean true or list k is non-empty;
/// missing facts, scores and ages evaluate false.
[[nodiscard]] bool evaluate(const script::expr& e, const rule_context& ctx);

[[nodiscard]] std::vector<red_flag> evaluate_red_flags(const patient_facts& facts,
                                                       std::int64_t riskcount,
                                                       const std::vector<script::flag_rule>& flags);

/// Id of the first matching profile rule, or "unclassified".
[[nodiscard]] std::string classify_profile(const patient_facts& facts,
                                           const std::vector<activity_score>& scores,
                                           std::int64_t riskcount,
                                           const std::vector<script::profile_rule>& profiles,
                                           const std::optional<std::string>& age_fact = {});

/// Throws mica_error("UnknownScore") if the source score or its band mapping is missing.
[[nodiscard]] motivation motivation_level(const std::vector<activity_score>& scores,
                                          const script::motivation_config& config);

[[nodiscard]] motif_list extract_motifs(const patient_facts& facts);

/// All clinical outputs for one finished interview.
struct assessment {
    std::vector<activity_score> scores;
    risk_assessment risk;
    std::vector<red_flag> flags;
    std::string profile;
    std::optional<motivation> motivation_result;
    motif_list motifs;

    bool operator==(const assessment&) const = default;
};

/// Scores whose questions were not all answered are omitted; motivation is
/// empty when unconfigured or when its source score was omitted.
[[nodiscard]] assessment assess(const script::dialog_script& script, const patient_facts& facts);

} // namespace mica::clinical
