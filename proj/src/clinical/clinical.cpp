/**
 * @file clinical.cpp
 * @brief Clinical artifacts derived from collected facts
 */

#include "mica/clinical.hpp"

#include "mica/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <map>

namespace mica::clinical {

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += ", ";
        out += s;
    }
    return out;
}

} // namespace

missing_answers_error::missing_answers_error(std::vector<std::string> nodes)
    : mica_error("MissingAnswers", "unanswered score questions: " + join(nodes)),
      nodes_(std::move(nodes)) {}

risk_config risk_config_from(const script::dialog_script& script) {
    risk_config cfg;
    for (const auto& sec : script.sections) {
        for (const auto& q : sec.questions) {
            if (q.risk_factor && q.fact_name) cfg.factor_keys.push_back(*q.fact_name);
        }
    }
    cfg.demographics = script.demographics;
    return cfg;
}

activity_score compute_activity_score(const patient_facts& facts, const script::score_rule& rule,
                                      const script::dialog_script& script) {
    std::vector<std::string> missing;
    std::int64_t total = 0;
    for (const auto& qid : rule.question_ids) {
        const auto it = facts.answers.find(qid);
        if (it == facts.answers.end()) {
            missing.push_back(qid);
            continue;
        }
        const auto* node = script.find_question(qid);
        const auto* label = std::get_if<std::string>(&it->second);
        if (!node || !label) throw mica_error("BadScoreReference", "question '" + qid + "' is not scorable");
        const auto opt = std::find_if(node->options.begin(), node->options.end(),
                                      [&](const auto& o) { return o.label == *label; });
        if (opt == node->options.end() || !opt->weight) {
            throw mica_error("BadScoreReference",
                             "answer '" + *label + "' to '" + qid + "' carries no weight");
        }
        total += *opt->weight;
    }
    if (!missing.empty()) throw missing_answers_error(std::move(missing));

    for (const auto& band : rule.bands) {
        if (band.contains(total)) return {rule.id, total, band.name};
    }
    throw mica_error("BadBands",
                     "score '" + rule.id + "' has no band for total " + std::to_string(total));
}

risk_assessment count_risk_factors(const patient_facts& facts, const risk_config& config) {
    risk_assessment out;
    for (const auto& key : config.factor_keys) {
        const auto it = facts.scalars.find(key);
        if (it == facts.scalars.end()) continue;
        const auto* b = std::get_if<bool>(&it->second);
        if (b && *b) out.contributing.push_back(key);
    }

    if (config.demographics) {
        const auto& d = *config.demographics;
        const auto age_it = facts.scalars.find(d.age_fact);
        const auto sex_it = facts.scalars.find(d.sex_fact);
        const auto* age = age_it == facts.scalars.end() ? nullptr
                                                        : std::get_if<std::int64_t>(&age_it->second);
        const auto* sex = sex_it == facts.scalars.end() ? nullptr
                                                        : std::get_if<std::string>(&sex_it->second);
        if (!age || !sex) {
            throw mica_error("MissingDemographics", "age fact '" + d.age_fact + "' and sex fact '" +
                                                        d.sex_fact + "' are required");
        }
        const bool male = detail::iequals(*sex, "male");
        const bool female = detail::iequals(*sex, "female");
        if ((male && *age >= d.male_age) || (female && *age >= d.female_age)) {
            out.age_sex_contribution = 1;
        }
    }
    out.count = static_cast<std::int64_t>(out.contributing.size()) + out.age_sex_contribution;
    return out;
}

bool evaluate(const script::expr& e, const rule_context& ctx) {
    using op = script::expr::op;
    switch (e.kind) {
        case op::fact: {
            if (!ctx.facts) return false;
            const auto s = ctx.facts->scalars.find(e.name);
            if (s != ctx.facts->scalars.end()) {
                const auto* b = std::get_if<bool>(&s->second);
                return b && *b;
            }
            const auto l = ctx.facts->lists.find(e.name);
            return l != ctx.facts->lists.end() && !l->second.empty();
        }
        case op::riskcount_ge: return ctx.riskcount >= e.value;
        case op::scoreband:
            if (!ctx.scores) return false;
            return std::any_of(ctx.scores->begin(), ctx.scores->end(), [&](const auto& s) {
                return s.score_id == e.name && s.band == e.band;
            });
        case op::age_le:
        case op::age_ge: {
            if (!ctx.facts || !ctx.age_fact) return false;
            const auto it = ctx.facts->scalars.find(*ctx.age_fact);
            if (it == ctx.facts->scalars.end()) return false;
            const auto* age = std::get_if<std::int64_t>(&it->second);
            if (!age) return false;
            return e.kind == op::age_le ? *age <= e.value : *age >= e.value;
        }
        case op::negate: return !evaluate(e.operands.at(0), ctx);
        case op::all_of: return evaluate(e.operands.at(0), ctx) && evaluate(e.operands.at(1), ctx);
        case op::any_of: return evaluate(e.operands.at(0), ctx) || evaluate(e.operands.at(1), ctx);
    }
    return false;
}

std::vector<red_flag> evaluate_red_flags(const patient_facts& facts, std::int64_t riskcount,
                                         const std::vector<script::flag_rule>& flags) {
    rule_context ctx;
    ctx.facts = &facts;
    ctx.riskcount = riskcount;
    std::vector<red_flag> out;
    for (const auto& f : flags) {
        if (evaluate(f.condition, ctx)) out.push_back({f.id, script::render_expr(f.condition)});
    }
    return out;
}

std::string classify_profile(const patient_facts& facts, const std::vector<activity_score>& scores,
                             std::int64_t riskcount,
                             const std::vector<script::profile_rule>& profiles,
                             const std::optional<std::string>& age_fact) {
    rule_context ctx{&facts, riskcount, &scores, age_fact};
    for (const auto& p : profiles) {
        if (evaluate(p.condition, ctx)) return p.id;
    }
    return std::string(unclassified_profile);
}

motivation motivation_level(const std::vector<activity_score>& scores,
                            const script::motivation_config& config) {
    const auto score = std::find_if(scores.begin(), scores.end(),
                                    [&](const auto& s) { return s.score_id == config.score_id; });
    if (score == scores.end()) {
        throw mica_error("UnknownScore", "motivation source score '" + config.score_id +
                                             "' was not computed");
    }
    const auto entry = std::find_if(config.table.begin(), config.table.end(),
                                    [&](const auto& e) { return e.band == score->band; });
    if (entry == config.table.end()) {
        throw mica_error("UnknownScore", "band '" + score->band + "' of score '" +
                                             config.score_id + "' has no motivation level");
    }
    return {entry->level, config.score_id};
}

motif_list extract_motifs(const patient_facts& facts) {
    motif_list out;
    std::map<std::string, std::size_t> seen;
    for (const auto& c : facts.captures) {
        const auto it = seen.find(c.text);
        if (it != seen.end()) {
            ++out[it->second].count;
            continue;
        }
        seen.emplace(c.text, out.size());
        out.push_back({c.key, c.text, c.source, 1});
    }
    return out;
}

assessment assess(const script::dialog_script& script, const patient_facts& facts) {
    assessment a;
    for (const auto& rule : script.scores) {
        try {
            a.scores.push_back(compute_activity_score(facts, rule, script));
        } catch (const missing_answers_error&) {
            // The interview path skipped this score.
        }
    }
    a.risk = count_risk_factors(facts, risk_config_from(script));
    a.flags = evaluate_red_flags(facts, a.risk.count, script.flags);
    std::optional<std::string> age_fact;
    if (script.demographics) age_fact = script.demographics->age_fact;
    a.profile = classify_profile(facts, a.scores, a.risk.count, script.profiles, age_fact);
    if (script.motivation) {
        const auto& id = script.motivation->score_id;
        if (std::any_of(a.scores.begin(), a.scores.end(),
                        [&](const auto& s) { return s.score_id == id; })) {
            a.motivation_result = motivation_level(a.scores, *script.motivation);
        }
    }
    a.motifs = extract_motifs(facts);
    return a;
}

} // namespace mica::clinical
