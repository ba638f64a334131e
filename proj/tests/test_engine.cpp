#include "mica/engine.hpp"
#include "mica/error.hpp"
#include "mica/event_log.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>
#include <set>

using namespace mica;
using namespace mica::engine;
using mica::test::engine_from_text;
using mica::test::load_engine;
using mica::test::run_utterances;
using mica::test::sample_script;

namespace {

const char* const precedence_script = R"(
script "precedence" version 1 start q_pain
section s {
  question q_pain yesno "Any pain?"
    help "yes or no"
    set pain
    goto q_where
  question q_where text "Where?"
    help "Say where."
    motif set where
    goto q_level
  question q_level choice "Level?"
    help "Pick one."
    option "no pain"
    option "knee pain"
    goto end
}
intercept first keywords "no pain" "no" record first_list
intercept joints keywords "knee" "no" record joint_list
)";

/// Whole-word scan written independently of the engine: tries every offset.
std::optional<std::pair<std::string, std::string>> brute_force_scan(const script::dialog_script& s,
                                                                    const std::string& utterance) {
    auto lower = [](std::string x) {
        for (auto& c : x) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return x;
    };
    auto word = [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return u >= 0x80 || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z');
    };
    const std::string hay = lower(utterance);
    for (const auto& rule : s.intercepts) {
        for (const auto& kw : rule.keywords) {
            const std::string needle = lower(kw);
            if (needle.empty() || needle.size() > hay.size()) continue;
            for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
                if (hay.compare(i, needle.size(), needle) != 0) continue;
                const bool left = i == 0 || !word(hay[i - 1]);
                const bool right = i + needle.size() == hay.size() || !word(hay[i + needle.size()]);
                if (left && right) return std::make_pair(rule.id, kw);
            }
        }
    }
    return std::nullopt;
}

/// Route selection written independently of the engine.
std::string brute_force_route(const script::question_node& node, const answer_value& a) {
    for (const auto& r : node.routes) {
        const auto& c = r.condition;
        bool ok = false;
        switch (c.kind) {
            case script::route_condition::type::always: ok = true; break;
            case script::route_condition::type::yes: ok = a == answer_value{true}; break;
            case script::route_condition::type::no: ok = a == answer_value{false}; break;
            case script::route_condition::type::label: {
                if (const auto* s = std::get_if<std::string>(&a)) {
                    std::string x = *s, y = c.label;
                    for (auto& ch : x) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                    for (auto& ch : y) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                    ok = x == y;
                }
                break;
            }
            case script::route_condition::type::range:
                if (const auto* v = std::get_if<std::int64_t>(&a)) ok = *v >= c.range.lo && *v <= c.range.hi;
                break;
        }
        if (ok) return r.target;
    }
    return "<none>";
}

std::vector<transcript_entry> fixture_transcript(const std::string& name, session_seed& seed) {
    const auto events = service::read_event_file(test::source_path("tests/fixtures/replay/" + name));
    seed = service::read_started(events.front()).seed;
    return service::transcript_from_events(events);
}

} // namespace

TEST(Start, FirstPromptIsDeclaredStart) {
    const auto eng = load_engine(sample_script);
    const auto [state, p] = eng->start_session({"s", "r", 100});
    EXPECT_EQ(p.node_id, "q_age");
    EXPECT_EQ(p.text, "How old are you?");
    EXPECT_EQ(*state.current, "q_age");
    EXPECT_EQ(state.started_at, 100);
    EXPECT_TRUE(state.facts.scalars.empty());
    EXPECT_TRUE(state.transcript.empty());
}

TEST(Start, SingleNodeScript) {
    const auto eng = load_engine("tests/fixtures/corpus/single_node.mica");
    const auto [state, p] = eng->start_session({"s", "r", 0});
    EXPECT_EQ(p.text, eng->script().sections.front().questions.front().prompt);
}

TEST(Start, InvalidScriptRefused) {
    auto s = std::make_shared<const script::dialog_script>(
        script::parse_script(test::read_text(test::source_path("tests/fixtures/defects/MissingHelp.mica"))));
    try {
        dialog_engine eng(s);
        FAIL() << "expected InvalidScript";
    } catch (const mica_error& e) {
        EXPECT_EQ(e.code(), "InvalidScript");
    }
}

TEST(Start, SessionsAreIsolated) {
    const auto eng = load_engine(sample_script);
    auto a = eng->start_session({"a", "r", 0}).first;
    const auto b = eng->start_session({"b", "r", 0}).first;
    (void)eng->submit_utterance(a, "40", 10);
    (void)eng->submit_utterance(a, "female", 20);
    EXPECT_EQ(a.transcript.size(), 2u);
    EXPECT_TRUE(b.transcript.empty());
    EXPECT_EQ(*b.current, "q_age");
}

TEST(Submit, YesNoIsCaseInsensitiveAndRoutes) {
    const auto eng = load_engine(sample_script);
    auto s = run_utterances(*eng, {"50", "male", "no", "no", "no"});
    ASSERT_EQ(*s.current, "q_diabetes");
    const auto r = eng->submit_utterance(s, "Yes", 10000);
    EXPECT_EQ(r.state, step_result::status::awaiting_answer);
    EXPECT_EQ(r.next_prompt->node_id, "q_followup");
    EXPECT_EQ(s.facts.scalars.at("diabetes"), answer_value{true});
    EXPECT_EQ(s.facts.provenance.at("diabetes"), "q_diabetes");
}

TEST(Submit, OutOfRangeRejectedWithHelp) {
    const auto eng = load_engine(sample_script);
    auto s = eng->start_session({"s", "r", 0}).first;
    const auto r = eng->submit_utterance(s, "130", 500);
    EXPECT_EQ(r.state, step_result::status::rejected);
    EXPECT_EQ(r.reject_reason, "unparseable");
    ASSERT_TRUE(r.next_prompt);
    EXPECT_EQ(r.next_prompt->node_id, "q_age");
    EXPECT_EQ(r.next_prompt->help, std::optional<std::string>(eng->index().find("q_age")->help));
    EXPECT_EQ(*s.current, "q_age");
    EXPECT_TRUE(s.per_question_latency.empty());
    EXPECT_EQ(s.rejections, 1u);
    EXPECT_EQ(s.consecutive_rejections, 1u);
    const auto again = eng->submit_utterance(s, "abc", 600);
    EXPECT_EQ(again.consecutive_rejections, 2u);
    (void)eng->submit_utterance(s, "40", 700);
    EXPECT_EQ(s.consecutive_rejections, 0u);
    EXPECT_EQ(s.per_question_latency.at("q_age"), 100);
}

TEST(Submit, ChoiceMatchesLabelCaseInsensitively) {
    const auto eng = load_engine(sample_script);
    auto s = run_utterances(*eng, {"40"});
    (void)eng->submit_utterance(s, "  FEMALE ", 5000);
    EXPECT_EQ(s.facts.scalars.at("sex"), answer_value{std::string("female")});
}

TEST(Submit, CompleteThenSessionComplete) {
    const auto eng = load_engine(sample_script);
    auto s = run_utterances(*eng, test::sample_answers_full());
    ASSERT_TRUE(s.complete());
    EXPECT_EQ(s.transcript.back().next, "end");
    const auto expect_complete = [](auto&& fn) {
        try {
            fn();
            ADD_FAILURE() << "expected SessionComplete";
        } catch (const mica_error& e) {
            EXPECT_EQ(e.code(), "SessionComplete");
        }
    };
    expect_complete([&] { (void)eng->submit_utterance(s, "yes", 1'000'000); });
    expect_complete([&] { (void)eng->request_help(s, 1'000'000); });
    expect_complete([&] { (void)eng->current_prompt(s); });
}

TEST(Submit, ClockRegressionRefused) {
    const auto eng = load_engine(sample_script);
    auto s = eng->start_session({"s", "r", 1000}).first;
    try {
        (void)eng->submit_utterance(s, "40", 999);
        FAIL();
    } catch (const mica_error& e) {
        EXPECT_EQ(e.code(), "ClockRegression");
    }
    EXPECT_TRUE(s.transcript.empty());
}

TEST(Help, ReturnsHelpWithoutAdvancing) {
    const auto eng = load_engine(sample_script);
    auto s = eng->start_session({"s", "r", 0}).first;
    const auto h1 = eng->request_help(s, 10);
    const auto h2 = eng->request_help(s, 20);
    EXPECT_EQ(h1, h2);
    EXPECT_FALSE(h1.empty());
    EXPECT_EQ(*s.current, "q_age");
    ASSERT_EQ(s.transcript.size(), 2u);
    EXPECT_EQ(s.transcript[0].kind, entry_kind::help);
    EXPECT_EQ(s.transcript[1].kind, entry_kind::help);
    const auto r = eng->submit_utterance(s, "nope", 30);
    EXPECT_EQ(r.next_prompt->help, std::optional<std::string>(h1));
}

TEST(Help, EveryNodeHasHelp) {
    const auto eng = load_engine(sample_script);
    for (const auto* node : eng->index().nodes()) EXPECT_FALSE(node->help.empty()) << node->id;
}

TEST(Interruption, KneeOnSportQuestion) {
    const auto eng = load_engine(sample_script);
    auto s = run_utterances(*eng, {"40", "male", "no", "no", "no", "no", "no", "no", "no", "no", "no"});
    ASSERT_EQ(*s.current, "q_sport_frequency");
    const auto r = eng->submit_utterance(s, "my knee hurts when I run", 100000);
    ASSERT_TRUE(r.interruption);
    EXPECT_EQ(r.interruption->rule, "osteo_joint");
    EXPECT_EQ(r.interruption->keyword, "knee");
    EXPECT_EQ(r.next_prompt->node_id, "q_sport_frequency");
    EXPECT_EQ(s.facts.lists.at("joint_complaint"), std::vector<std::string>{"my knee hurts when I run"});
    EXPECT_EQ(s.facts.provenance.at("joint_complaint"), "osteo_joint");
    ASSERT_EQ(s.interruption_stack.size(), 1u);
    EXPECT_EQ(s.interruption_stack.front().node, "q_sport_frequency");

    // A second detour while one is pending records the fact without stacking.
    (void)eng->submit_utterance(s, "also my shoulder", 101000);
    EXPECT_EQ(s.interruption_stack.size(), 1u);
    EXPECT_EQ(s.facts.lists.at("joint_complaint").size(), 2u);
    EXPECT_EQ(s.interruptions, 2u);

    (void)eng->submit_utterance(s, "weekly", 102000);
    EXPECT_TRUE(s.interruption_stack.empty());
    EXPECT_EQ(*s.current, "q_sport_duration");
}

TEST(Interruption, LegalAnswerTakesPrecedence) {
    const auto eng = engine_from_text(precedence_script);
    auto s = eng->start_session({"s", "r", 0}).first;
    EXPECT_FALSE(eng->detect_interruption(s, "no"));
    const auto r = eng->submit_utterance(s, "no", 1);
    EXPECT_FALSE(r.interruption);
    EXPECT_EQ(s.facts.scalars.at("pain"), answer_value{false});

    // Text nodes accept anything, so keywords never detour there.
    EXPECT_FALSE(eng->detect_interruption(s, "no pain at all, knee fine"));
    (void)eng->submit_utterance(s, "no pain at all, knee fine", 2);
    EXPECT_EQ(*s.current, "q_level");

    // Choice labels containing keywords are answers; other phrases detour.
    EXPECT_FALSE(eng->detect_interruption(s, "Knee Pain"));
    const auto hit = eng->detect_interruption(s, "there is no pain");
    ASSERT_TRUE(hit);
    EXPECT_EQ(hit->rule, "first");
    EXPECT_EQ(hit->keyword, "no pain");
    const auto second = eng->detect_interruption(s, "my KNEE.");
    ASSERT_TRUE(second);
    EXPECT_EQ(second->rule, "joints");
    EXPECT_FALSE(eng->detect_interruption(s, "kneecap and nothing"));
}

TEST(Interruption, MatchesBruteForceScanner) {
    const auto eng = load_engine(sample_script);
    std::mt19937_64 rng(20240501);
    const std::vector<std::string> vocab = {"knee",  "knees", "back",   "pain",  "back pain", "hip",   "hips",
                                            "yes",   "no",    "weekly", "42",    "moderate",  "Joint", "tendon",
                                            "ankle", "KNEE",  "hip-hop", "shoulder", "the", "on", "x", "é"};
    const std::vector<std::string> separators = {" ", ", ", "-", ".", "  ", "/", ""};
    std::size_t fired = 0, considered = 0;
    for (int i = 0; i < 500; ++i) {
        // Walk a random prefix so the current node varies.
        auto paths = script::enumerate_paths(eng->script(), 1000).paths;
        const auto& path = paths[rng() % paths.size()];
        const std::size_t depth = rng() % path.size();
        std::vector<std::string> prefix;
        for (std::size_t k = 0; k < depth; ++k) prefix.push_back(path[k].answer);
        const auto s = run_utterances(*eng, prefix);
        std::string u;
        if (rng() % 5 == 0) {
            u = path[depth].answer;
        } else {
            const std::size_t words = 1 + rng() % 5;
            for (std::size_t w = 0; w < words; ++w) {
                if (w) u += separators[rng() % separators.size()];
                u += vocab[rng() % vocab.size()];
            }
        }
        const auto* node = eng->index().find(*s.current);
        const bool legal = script::normalize_answer(*node, u).has_value();
        const auto oracle = brute_force_scan(eng->script(), u);
        const auto got = eng->detect_interruption(s, u);
        ++considered;
        if (!legal && oracle) {
            ++fired;
            ASSERT_TRUE(got) << u;
            EXPECT_EQ(got->rule, oracle->first) << u;
            EXPECT_EQ(got->keyword, oracle->second) << u;
        } else {
            EXPECT_FALSE(got) << "node " << node->id << " utterance '" << u << "'";
        }
    }
    EXPECT_EQ(considered, 500u);
    EXPECT_GT(fired, 50u);
}

TEST(SelectNext, MatchesLinearRouteScan) {
    const auto eng = load_engine(sample_script);
    std::size_t checked = 0;
    for (const auto* node : eng->index().nodes()) {
        std::vector<std::string> utterances = script::sample_answers(*node);
        if (node->kind == script::question_kind::numeric) {
            for (auto v = node->numeric_range.lo; v <= node->numeric_range.hi; ++v) {
                utterances.push_back(std::to_string(v));
            }
        }
        for (const auto& u : utterances) {
            const auto a = script::normalize_answer(*node, u);
            ASSERT_TRUE(a) << node->id << " " << u;
            EXPECT_EQ(eng->select_next({}, node->id, *a), brute_force_route(*node, *a)) << node->id << " " << u;
            ++checked;
        }
    }
    EXPECT_GT(checked, 150u);
}

TEST(SelectNext, CorpusScriptsMatchLinearScan) {
    for (const auto& p : test::corpus_paths()) {
        const dialog_engine eng(std::make_shared<const script::dialog_script>(
            script::parse_script(test::read_text(p))));
        for (const auto* node : eng.index().nodes()) {
            for (const auto& u : script::sample_answers(*node)) {
                const auto a = script::normalize_answer(*node, u);
                ASSERT_TRUE(a);
                EXPECT_EQ(eng.select_next({}, node->id, *a), brute_force_route(*node, *a)) << p;
            }
        }
    }
}

TEST(Accounting, LatencySumsToElapsedTime) {
    const auto eng = load_engine(sample_script);
    const auto paths = script::enumerate_paths(eng->script(), 10000).paths;
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const auto& path = paths[rng() % paths.size()];
        auto s = eng->start_session({"s", "r", static_cast<std::int64_t>(rng() % 100000)}).first;
        std::int64_t now = s.started_at;
        std::size_t steps = 0;
        std::set<std::string> answered;
        for (const auto& step : path) {
            // Text nodes accept any utterance, so only help detours there.
            const bool text = eng->index().find(*s.current)->kind == script::question_kind::text;
            while (rng() % 4 == 0) {
                now += static_cast<std::int64_t>(rng() % 3000);
                const auto pick = text ? 0 : rng() % 3;
                if (pick == 0) {
                    (void)eng->request_help(s, now);
                } else if (pick == 1) {
                    (void)eng->submit_utterance(s, "?!", now);
                } else {
                    (void)eng->submit_utterance(s, "my left ankle", now);
                }
                ++steps;
            }
            now += static_cast<std::int64_t>(rng() % 20000);
            const std::string before = *s.current;
            const auto r = eng->submit_utterance(s, step.answer, now);
            ++steps;
            ASSERT_NE(r.state, step_result::status::rejected);
            // Progress: an accepted answer always moves on.
            EXPECT_TRUE(s.complete() || *s.current != before);
            answered.insert(before);
        }
        ASSERT_TRUE(s.complete());
        std::int64_t sum = s.detour_ms;
        for (const auto& [id, ms] : s.per_question_latency) {
            EXPECT_GE(ms, 0);
            EXPECT_TRUE(answered.count(id));
            sum += ms;
        }
        EXPECT_EQ(sum, s.last_event_at - s.started_at);
        EXPECT_LE(answered.size(), eng->script().question_count());
        // Termination bound.
        EXPECT_LE(steps, eng->script().question_count() + s.interruptions + s.rejections +
                             static_cast<std::size_t>(std::count_if(
                                 s.transcript.begin(), s.transcript.end(),
                                 [](const auto& e) { return e.kind == entry_kind::help; })));
        for (std::size_t i = 1; i < s.transcript.size(); ++i) {
            EXPECT_LE(s.transcript[i - 1].ts, s.transcript[i].ts);
        }
    }
}

TEST(Accounting, TranscriptFollowsRoutes) {
    const auto eng = load_engine(sample_script);
    auto s = eng->start_session({"s", "r", 0}).first;
    std::int64_t now = 0;
    for (const auto& u : test::sample_answers_full()) {
        if (eng->index().find(*s.current)->kind != script::question_kind::text) {
            (void)eng->submit_utterance(s, "what?", now += 10);
        }
        (void)eng->submit_utterance(s, u, now += 10);
    }
    ASSERT_TRUE(s.complete());
    std::string expected = eng->script().start;
    for (const auto& e : s.transcript) {
        EXPECT_EQ(e.node, expected);
        if (e.kind == entry_kind::answered) expected = e.next;
    }
    EXPECT_EQ(expected, "end");
}

TEST(Replay, EmptyTranscriptEqualsStart) {
    const auto eng = load_engine(sample_script);
    const session_seed seed{"s", "r", 42};
    EXPECT_EQ(eng->replay(seed, {}), eng->start_session(seed).first);
}

TEST(Replay, LiveRunReproducedFieldForField) {
    const auto eng = load_engine(sample_script);
    auto live = eng->start_session({"s", "r", 5}).first;
    std::int64_t now = 5;
    (void)eng->request_help(live, now += 3);
    for (const auto& u : test::sample_answers_full()) {
        if (u == "weekly") (void)eng->submit_utterance(live, "my back pain", now += 7);
        (void)eng->submit_utterance(live, u, now += 1000);
    }
    ASSERT_TRUE(live.complete());
    const auto replayed = eng->replay({"s", "r", 5}, live.transcript);
    EXPECT_EQ(replayed, live);
    // Replaying twice gives the same state.
    EXPECT_EQ(eng->replay({"s", "r", 5}, live.transcript), replayed);
}

TEST(Replay, BaseFixtureReplays) {
    const auto eng = load_engine(sample_script);
    session_seed seed;
    const auto entries = fixture_transcript("base.jsonl", seed);
    const auto state = eng->replay(seed, entries);
    EXPECT_TRUE(state.complete());
    EXPECT_EQ(state.transcript, entries);
    EXPECT_EQ(state.interruptions, 1u);
    EXPECT_EQ(state.rejections, 1u);
}

TEST(Replay, MutatedFixturesDivergeAtTheirIndex) {
    const auto eng = load_engine(sample_script);
    const auto expected = nlohmann::json::parse(
        test::read_text(test::source_path("tests/fixtures/replay/expected.json")));
    ASSERT_EQ(expected.size(), 5u);
    for (const auto& [name, index] : expected.items()) {
        session_seed seed;
        const auto entries = fixture_transcript(name, seed);
        try {
            (void)eng->replay(seed, entries);
            ADD_FAILURE() << name << " replayed without divergence";
        } catch (const replay_divergence& e) {
            EXPECT_EQ(e.index(), index.get<std::size_t>()) << name << ": " << e.what();
        }
    }
}

TEST(Replay, EntryAfterCompletionDiverges) {
    const auto eng = load_engine(sample_script);
    auto live = run_utterances(*eng, test::sample_answers_full());
    auto entries = live.transcript;
    entries.push_back(entries.back());
    try {
        (void)eng->replay({"t", std::string(32, 'a'), 0}, entries);
        FAIL();
    } catch (const replay_divergence& e) {
        EXPECT_EQ(e.index(), entries.size() - 1);
    }
}
