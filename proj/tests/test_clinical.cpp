#include "mica/clinical.hpp"
#include "mica/engine.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <random>

using namespace mica;
using namespace mica::clinical;
using engine::answer_value;
using mica::test::load_engine;
using mica::test::sample_script;
using namespace mica::test;

// -----------------------------------------------------------------------------
// Scoring
// -----------------------------------------------------------------------------

TEST(Score, SumsOptionWeights) {
    const auto eng = engine_from_text(R"(
script "three" version 1 start a
section s {
  question a choice "A" help "h" option "x" weight 2 option "y" weight 5 goto b
  question b choice "B" help "h" option "x" weight 3 option "y" weight 0 goto c
  question c choice "C" help "h" option "x" weight 4 option "y" weight 1 goto end
}
score act { questions a b c thresholds { low when < 10 medium when 10..20 high when > 20 } }
)");
    const auto s = test::run_utterances(*eng, {"x", "x", "x"});
    const auto score = compute_activity_score(s.facts, eng->script().scores.front(), eng->script());
    EXPECT_EQ(score.total, 9);
    EXPECT_EQ(score.band, "low");

    const auto partial = test::run_utterances(*eng, {"x"});
    try {
        (void)compute_activity_score(partial.facts, eng->script().scores.front(), eng->script());
        FAIL();
    } catch (const missing_answers_error& e) {
        EXPECT_EQ(e.code(), "MissingAnswers");
        EXPECT_EQ(e.nodes(), (std::vector<std::string>{"b", "c"}));
    }
}

TEST(Score, RandomCasesMatchSummationOracle) {
    std::mt19937_64 rng(1234);
    std::size_t cases = 0;
    for (int script_i = 0; script_i < 100; ++script_i) {
        const auto g = generate_score_script(rng);
        const auto eng = engine_from_text(g.text);
        for (int answer_i = 0; answer_i < 10; ++answer_i) {
            std::vector<std::string> utterances;
            for (const auto& opts : g.options) utterances.push_back(opts[rng() % opts.size()].first);
            const auto s = test::run_utterances(*eng, utterances);
            ASSERT_TRUE(s.complete());
            // Oracle: re-walk the transcript and look weights up in the generator's table.
            std::int64_t expected = 0;
            for (const auto& entry : s.transcript) {
                const auto qi = std::stoul(entry.node.substr(1));
                for (const auto& [label, w] : g.options[qi]) {
                    if (label == std::get<std::string>(*entry.answer)) {
                        expected += w;
                        break;
                    }
                }
            }
            const auto score = compute_activity_score(s.facts, eng->script().scores.front(), eng->script());
            ASSERT_EQ(score.total, expected) << g.text;
            ASSERT_EQ(score.band, oracle_band(expected, g.cut_lo, g.cut_hi));
            ++cases;
        }
    }
    EXPECT_EQ(cases, 1000u);
}

TEST(Score, BandLookupAtEveryBoundary) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 200; ++i) {
        const std::int64_t cut_lo = static_cast<std::int64_t>(rng() % 30) + 1;
        const std::int64_t cut_hi = cut_lo + static_cast<std::int64_t>(rng() % 8);
        std::string opts;
        for (int w = 0; w <= 45; ++w) opts += " option \"w" + std::to_string(w) + "\" weight " + std::to_string(w);
        const auto eng = engine_from_text(
            "script \"b\" version 1 start q\nsection s {\n question q choice \"Q\" help \"h\"" + opts +
            " goto end\n}\nscore t { questions q thresholds { low when < " + std::to_string(cut_lo) +
            " mid when " + std::to_string(cut_lo) + ".." + std::to_string(cut_hi) + " high when > " +
            std::to_string(cut_hi) + " } }\n");
        for (const auto v : {cut_lo - 1, cut_lo, cut_lo + 1, cut_hi - 1, cut_hi, cut_hi + 1}) {
            if (v < 0) continue;
            const auto s = test::run_utterances(*eng, {"w" + std::to_string(v)});
            const auto score = compute_activity_score(s.facts, eng->script().scores.front(), eng->script());
            EXPECT_EQ(score.total, v);
            EXPECT_EQ(score.band, oracle_band(v, cut_lo, cut_hi)) << "total " << v;
        }
    }
}

TEST(Score, SampleActivityBoundaries) {
    const auto eng = load_engine(sample_script);
    const auto* rule = eng->script().find_score("activity");
    ASSERT_NE(rule, nullptr);
    std::map<std::int64_t, std::string> seen;
    const std::vector<std::string> freq = {"never", "occasionally", "weekly", "several times a week"};
    const std::vector<std::string> dur = {"under 30 minutes", "30 to 60 minutes", "over an hour"};
    const std::vector<std::string> inten = {"light", "moderate", "vigorous"};
    const std::vector<std::string> daily = {"mostly seated", "some walking", "physically active"};
    for (std::size_t a = 0; a < freq.size(); ++a)
        for (std::size_t b = 0; b < dur.size(); ++b)
            for (std::size_t c = 0; c < inten.size(); ++c)
                for (std::size_t d = 0; d < daily.size(); ++d) {
                    engine::patient_facts f;
                    f.answers["q_sport_frequency"] = freq[a];
                    f.answers["q_sport_duration"] = dur[b];
                    f.answers["q_sport_intensity"] = inten[c];
                    f.answers["q_daily_activity"] = daily[d];
                    const auto expected = static_cast<std::int64_t>(3 * a + 1 + 3 * b + 1 + 3 * c + 2 * d);
                    const auto score = compute_activity_score(f, *rule, eng->script());
                    ASSERT_EQ(score.total, expected);
                    seen[expected] = score.band;
                }
    ASSERT_TRUE(seen.count(9) && seen.count(10) && seen.count(20) && seen.count(21));
    EXPECT_EQ(seen[9], "low");
    EXPECT_EQ(seen[10], "medium");
    EXPECT_EQ(seen[20], "medium");
    EXPECT_EQ(seen[21], "high");
}

TEST(Score, Linearity) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        auto g = generate_score_script(rng);
        auto parsed = script::parse_script(g.text);
        engine::patient_facts f;
        for (std::size_t q = 0; q < g.options.size(); ++q) {
            f.answers["q" + std::to_string(q)] = g.options[q][rng() % g.options[q].size()].first;
        }
        const auto base = compute_activity_score(f, parsed.scores.front(), parsed).total;
        const std::size_t q = rng() % g.options.size();
        const auto& label = std::get<std::string>(f.answers["q" + std::to_string(q)]);
        const std::int64_t d = static_cast<std::int64_t>(rng() % 7) + 1;
        for (auto& o : parsed.sections.front().questions[q].options) {
            if (o.label == label) *o.weight += d;
        }
        EXPECT_EQ(compute_activity_score(f, parsed.scores.front(), parsed).total, base + d);
    }
}

// -----------------------------------------------------------------------------
// Risk factors
// -----------------------------------------------------------------------------

TEST(Risk, WorkedExamples) {
    risk_config cfg{sample_risk_keys, script::demographics_config{"age", "sex", 50, 60}};
    engine::patient_facts f;
    for (const auto& k : sample_risk_keys) f.scalars[k] = false;
    f.scalars["tobacco"] = true;
    f.scalars["diabetes"] = true;
    f.scalars["age"] = std::int64_t{45};
    f.scalars["sex"] = std::string("male");
    auto r = count_risk_factors(f, cfg);
    EXPECT_EQ(r.count, 2);
    EXPECT_EQ(r.contributing, (std::vector<std::string>{"tobacco", "diabetes"}));
    EXPECT_EQ(r.age_sex_contribution, 0);

    for (const auto& k : sample_risk_keys) f.scalars[k] = false;
    f.scalars["age"] = std::int64_t{62};
    f.scalars["sex"] = std::string("female");
    r = count_risk_factors(f, cfg);
    EXPECT_EQ(r.count, 1);
    EXPECT_EQ(r.age_sex_contribution, 1);

    f.scalars.erase("age");
    try {
        (void)count_risk_factors(f, cfg);
        FAIL();
    } catch (const mica_error& e) {
        EXPECT_EQ(e.code(), "MissingDemographics");
    }
}

TEST(Risk, ExhaustiveOracleThroughInterviews) {
    const auto eng = load_engine(sample_script);
    const auto cfg = risk_config_from(eng->script());
    ASSERT_EQ(cfg.factor_keys, sample_risk_keys);
    ASSERT_TRUE(cfg.demographics);
    const auto male_at = cfg.demographics->male_age;
    const auto female_at = cfg.demographics->female_age;
    struct side {
        std::string sex;
        std::int64_t age;
        int contributes;
    };
    const std::vector<side> sides = {
        {"male", male_at - 1, 0}, {"male", male_at, 1}, {"female", female_at - 1, 0}, {"female", female_at, 1}};
    std::size_t cases = 0;
    for (unsigned mask = 0; mask < 32; ++mask) {
        for (const auto& sd : sides) {
            const auto s = test::run_utterances(*eng, sample_answers(sd.age, sd.sex, mask));
            ASSERT_TRUE(s.complete());
            std::int64_t expected = sd.contributes;
            for (unsigned i = 0; i < 5; ++i) expected += (mask >> i) & 1u;
            const auto r = count_risk_factors(s.facts, cfg);
            EXPECT_EQ(r.count, expected) << "mask " << mask << " " << sd.sex << " " << sd.age;
            EXPECT_EQ(r.age_sex_contribution, sd.contributes);
            EXPECT_EQ(r.count, static_cast<std::int64_t>(r.contributing.size()) + r.age_sex_contribution);
            ++cases;
        }
    }
    EXPECT_EQ(cases, 128u);
}

// -----------------------------------------------------------------------------
// Red flags
// -----------------------------------------------------------------------------

TEST(Flags, WorkedExamples) {
    const auto script = load_engine(sample_script)->script();
    engine::patient_facts f;
    f.scalars["diabetes"] = true;
    f.scalars["followup_up_to_date"] = false;
    auto flags = evaluate_red_flags(f, 0, script.flags);
    ASSERT_EQ(flags.size(), 1u);
    EXPECT_EQ(flags[0].id, "diabetes_followup");
    EXPECT_EQ(flags[0].triggered_by, "fact(diabetes) and not fact(followup_up_to_date)");

    engine::patient_facts g;
    g.scalars["cardio_symptom"] = true;
    flags = evaluate_red_flags(g, 0, script.flags);
    ASSERT_EQ(flags.size(), 1u);
    EXPECT_EQ(flags[0].id, "symptomatic");

    EXPECT_EQ(evaluate_red_flags({}, 4, script.flags).at(0).id, "many_risks");
    EXPECT_EQ(evaluate_red_flags({}, 3, script.flags).at(0).id, "many_risks");
    EXPECT_TRUE(evaluate_red_flags({}, 2, script.flags).empty());
}

TEST(Flags, SampleTruthTableMatchesInterpreter) {
    const auto eng = load_engine(sample_script);
    const auto& script = eng->script();
    const auto cfg = risk_config_from(script);
    const std::vector<std::string> keys = {"diabetes", "followup_up_to_date", "cardio_symptom", "tobacco",
                                           "high_blood_pressure", "hypercholesterolemia", "infarction_or_stroke"};
    std::size_t rows = 0;
    for (unsigned mask = 0; mask < 128; ++mask) {
        for (const bool absent_when_false : {false, true}) {
            for (const int age_sex : {0, 1}) {
                std::map<std::string, bool> truth;
                engine::patient_facts f;
                for (std::size_t i = 0; i < keys.size(); ++i) {
                    const bool v = (mask >> i) & 1u;
                    truth[keys[i]] = v;
                    if (v || !absent_when_false) f.scalars[keys[i]] = v;
                }
                f.scalars["age"] = std::int64_t{age_sex ? 70 : 20};
                f.scalars["sex"] = std::string("male");
                const auto risk = count_risk_factors(f, cfg);
                std::int64_t recount = age_sex;
                for (const auto& k : cfg.factor_keys) recount += truth[k];
                ASSERT_EQ(risk.count, recount);

                std::vector<std::string> expected;
                for (const auto& rule : script.flags) {
                    if (interpret(rule.condition, truth, recount)) expected.push_back(rule.id);
                }
                // The three shipped flags, spelled out by hand.
                std::vector<std::string> by_hand;
                if (truth["diabetes"] && !truth["followup_up_to_date"]) by_hand.push_back("diabetes_followup");
                if (truth["cardio_symptom"]) by_hand.push_back("symptomatic");
                if (recount >= 3) by_hand.push_back("many_risks");
                EXPECT_EQ(expected, by_hand);

                std::vector<std::string> got;
                for (const auto& flag : evaluate_red_flags(f, risk.count, script.flags)) got.push_back(flag.id);
                EXPECT_EQ(got, expected) << "mask " << mask;
                ++rows;
            }
        }
    }
    EXPECT_EQ(rows, 512u);
}

TEST(Flags, RandomExpressionsMatchInterpreter) {
    std::mt19937_64 rng(77);
    const std::vector<std::string> keys = {"a", "b", "c", "d", "e", "f", "g"};
    for (int i = 0; i < 300; ++i) {
        const auto e = test::random_expr(rng, keys, {}, 4, false);
        const std::vector<script::flag_rule> rules = {{"x", e}};
        for (unsigned mask = 0; mask < 128; ++mask) {
            std::map<std::string, bool> truth;
            engine::patient_facts f;
            for (std::size_t k = 0; k < keys.size(); ++k) {
                truth[keys[k]] = (mask >> k) & 1u;
                if (truth[keys[k]]) {
                    // Exercise both fact shapes that count as present.
                    if (k % 2) f.scalars[keys[k]] = true;
                    else f.lists[keys[k]] = {"something"};
                }
            }
            const std::int64_t riskcount = mask % 6;
            EXPECT_EQ(!evaluate_red_flags(f, riskcount, rules).empty(), interpret(e, truth, riskcount))
                << script::render_expr(e);
        }
    }
}

TEST(Flags, RiskcountFlagIsMonotone) {
    const auto script = load_engine(sample_script)->script();
    bool was = false;
    for (std::int64_t n = 0; n < 8; ++n) {
        const bool now = !evaluate_red_flags({}, n, script.flags).empty();
        EXPECT_TRUE(!was || now);
        was = now;
    }
}

TEST(Flags, MissingFactsAreFalse) {
    const std::vector<script::flag_rule> rules = {
        {"present", script::expr::fact("k")}, {"absent", script::expr::negation(script::expr::fact("k"))}};
    engine::patient_facts f;
    EXPECT_EQ(evaluate_red_flags(f, 0, rules).at(0).id, "absent");
    f.scalars["k"] = std::string("yes");  // non-boolean scalars are not truthy
    EXPECT_EQ(evaluate_red_flags(f, 0, rules).at(0).id, "absent");
    f.lists["k"] = {};
    f.scalars.erase("k");
    EXPECT_EQ(evaluate_red_flags(f, 0, rules).at(0).id, "absent");
    f.lists["k"].push_back("x");
    EXPECT_EQ(evaluate_red_flags(f, 0, rules).at(0).id, "present");
}

// -----------------------------------------------------------------------------
// Profiles and motivation
// -----------------------------------------------------------------------------

TEST(Profile, FirstMatchWins) {
    using script::expr;
    const std::vector<activity_score> scores = {{"activity", 25, "high"}};
    engine::patient_facts f;
    f.scalars["age"] = std::int64_t{25};
    const script::profile_rule young{"young_sporty",
                                     expr::conjunction(expr::age_at_most(30), expr::score_band("activity", "high"))};
    const script::profile_rule sporty{"sporty", expr::score_band("activity", "high")};
    EXPECT_EQ(classify_profile(f, scores, 0, {young, sporty}, "age"), "young_sporty");
    EXPECT_EQ(classify_profile(f, scores, 0, {sporty, young}, "age"), "sporty");
    f.scalars["age"] = std::int64_t{31};
    EXPECT_EQ(classify_profile(f, scores, 0, {young}, "age"), "unclassified");
    EXPECT_EQ(classify_profile(f, {}, 0, {}, "age"), "unclassified");
}

TEST(Profile, SampleScriptProfiles) {
    const auto eng = load_engine(sample_script);
    auto s = test::run_utterances(*eng, sample_answers(30, "male", 0));
    EXPECT_EQ(assess(eng->script(), s.facts).profile, "young_sporty");
    s = test::run_utterances(*eng, sample_answers(45, "male", 0));
    EXPECT_EQ(assess(eng->script(), s.facts).profile, "sporty");
}

TEST(Motivation, TableDriven) {
    const std::vector<activity_score> scores = {{"motivation", 7, "high"}, {"other", 4, "medium"}};
    script::motivation_config identity{"motivation",
                                       {{"low", script::motivation_level::low},
                                        {"medium", script::motivation_level::medium},
                                        {"high", script::motivation_level::high}}};
    EXPECT_EQ(motivation_level(scores, identity).level, script::motivation_level::high);
    EXPECT_EQ(motivation_level(scores, identity).source_score_id, "motivation");

    script::motivation_config inverted{"other",
                                       {{"low", script::motivation_level::high},
                                        {"medium", script::motivation_level::low},
                                        {"high", script::motivation_level::low}}};
    EXPECT_EQ(motivation_level(scores, inverted).level, script::motivation_level::low);

    try {
        (void)motivation_level(scores, {"missing", {}});
        FAIL();
    } catch (const mica_error& e) {
        EXPECT_EQ(e.code(), "UnknownScore");
    }
}

TEST(Motivation, MissingTableEntryIsAValidationError) {
    auto text = test::read_text(test::source_path(sample_script));
    const auto pos = text.find("  band high level high\n");
    ASSERT_NE(pos, std::string::npos);
    text.erase(pos, std::string("  band high level high\n").size());
    const auto report = script::validate_script(script::parse_script(text));
    EXPECT_TRUE(report.has_error("UnknownBand"));
    EXPECT_EQ(report.errors.size(), 1u);
}

// -----------------------------------------------------------------------------
// Motifs
// -----------------------------------------------------------------------------

TEST(Motifs, ExtractAndCollapse) {
    EXPECT_TRUE(extract_motifs({}).empty());

    engine::patient_facts f;
    f.lists["osteo_complaint"] = {"my knee hurts when I run"};
    f.captures.push_back({"osteo_complaint", "my knee hurts when I run", "osteo"});
    auto m = extract_motifs(f);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].category, "osteo_complaint");
    EXPECT_EQ(m[0].count, 1);

    f.captures.push_back({"osteo_complaint", "my knee hurts when I run", "osteo"});
    m = extract_motifs(f);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].count, 2);
}

TEST(Motifs, CaptureOrderFromInterview) {
    const auto eng = load_engine(sample_script);
    auto s = eng->start_session({"s", "r", 0}).first;
    std::int64_t now = 0;
    for (const auto& u : sample_answers(40, "female", 0, true, true)) {
        if (u == "weekly") {
            (void)eng->submit_utterance(s, "my ankle is sore", now += 10);
            (void)eng->submit_utterance(s, "my ankle is sore", now += 10);
        }
        (void)eng->submit_utterance(s, u, now += 10);
    }
    ASSERT_TRUE(s.complete());
    const auto m = extract_motifs(s.facts);
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m[0].category, "symptom_detail");
    EXPECT_EQ(m[0].source, "q_symptom_detail");
    EXPECT_EQ(m[1].text, "my ankle is sore");
    EXPECT_EQ(m[1].category, "joint_complaint");
    EXPECT_EQ(m[1].count, 2);
    EXPECT_EQ(m[2].category, "expectations");
}

TEST(Assess, PureAndComplete) {
    const auto eng = load_engine(sample_script);
    const auto s = test::run_utterances(*eng, test::sample_answers_full());
    const auto a = assess(eng->script(), s.facts);
    EXPECT_EQ(a, assess(eng->script(), s.facts));
    ASSERT_EQ(a.scores.size(), 2u);
    EXPECT_EQ(a.scores[0].score_id, "activity");
    EXPECT_EQ(a.scores[0].total, 6 + 4 + 4 + 2);
    EXPECT_EQ(a.scores[0].band, "medium");
    EXPECT_EQ(a.scores[1].total, 5);
    ASSERT_TRUE(a.motivation_result);
    EXPECT_EQ(a.motivation_result->level, script::motivation_level::medium);
    // Male aged 58 with tobacco, cholesterol and diabetes.
    EXPECT_EQ(a.risk.count, 4);
    EXPECT_EQ(a.risk.age_sex_contribution, 1);
    std::vector<std::string> ids;
    for (const auto& f : a.flags) ids.push_back(f.id);
    EXPECT_EQ(ids, (std::vector<std::string>{"diabetes_followup", "symptomatic", "many_risks"}));
}
