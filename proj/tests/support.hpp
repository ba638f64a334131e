// Shared helpers for the test binaries.

#pragma once

#include "mica/engine.hpp"
#include "mica/script.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef MICA_SOURCE_DIR
#error "MICA_SOURCE_DIR must be defined"
#endif

namespace mica::test {

inline std::filesystem::path source_path(const std::string& rel) {
    return std::filesystem::path(MICA_SOURCE_DIR) / rel;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::shared_ptr<const script::dialog_script> load_script(const std::string& rel) {
    return std::make_shared<const script::dialog_script>(script::parse_script(read_text(source_path(rel))));
}

inline std::shared_ptr<const engine::dialog_engine> load_engine(const std::string& rel) {
    return std::make_shared<const engine::dialog_engine>(load_script(rel));
}

inline const char* const sample_script = "data/scripts/cardiology.mica";

/// All corpus scripts plus the sample, sorted by path.
inline std::vector<std::filesystem::path> corpus_paths() {
    std::vector<std::filesystem::path> out{source_path(sample_script)};
    for (const auto& f : std::filesystem::directory_iterator(source_path("tests/fixtures/corpus"))) {
        if (f.path().extension() == ".mica") out.push_back(f.path());
    }
    std::sort(out.begin() + 1, out.end());
    return out;
}

/// Feeds utterances one per `step_ms`, starting at started_at + step_ms.
inline engine::session_state run_utterances(const engine::dialog_engine& eng,
                                            const std::vector<std::string>& utterances,
                                            std::int64_t started_at = 0, std::int64_t step_ms = 1000,
                                            const std::string& session_id = "t") {
    auto [state, first] = eng.start_session({session_id, std::string(32, 'a'), started_at});
    std::int64_t now = started_at;
    for (const auto& u : utterances) {
        now += step_ms;
        (void)eng.submit_utterance(state, u, now);
    }
    return state;
}

/// One complete answer list for the sample script.
inline std::vector<std::string> sample_answers_full() {
    return {"58",   "male", "yes", "no", "yes", "yes", "no", "no", "no", "no", "yes",
            "chest tightness uphill", "yes", "right knee on stairs", "weekly", "30 to 60 minutes",
            "moderate", "some walking", "very important", "fairly sure", "how far can I run"};
}

class temp_dir {
public:
    temp_dir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("mica_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// -----------------------------------------------------------------------------
// Random script generation
// -----------------------------------------------------------------------------

/// Random printable text including characters that need escaping.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 24) {
    static const std::vector<std::string> pieces = {"a", "b", "Z", " ", "?", "\"", "\\", "\n", "\t", "é",
                                                    "ü", "1", "-", "'", "{", "}", "#", "..", "goto", "end"};
    const std::size_t len = 1 + rng() % max_len;
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += pieces[rng() % pieces.size()];
    return s;
}

inline std::string random_id(std::mt19937_64& rng, const std::string& prefix) {
    return prefix + std::to_string(rng() % 1000000);
}

inline script::expr random_expr(std::mt19937_64& rng, const std::vector<std::string>& facts,
                                const std::vector<script::score_rule>& scores, int depth, bool allow_profile_atoms) {
    using script::expr;
    const int choice = depth <= 0 ? static_cast<int>(rng() % 4) : static_cast<int>(rng() % 7);
    switch (choice) {
        case 0:
        case 1: return expr::fact(facts[rng() % facts.size()]);
        case 2: return expr::riskcount_at_least(static_cast<std::int64_t>(rng() % 6));
        case 3:
            if (allow_profile_atoms && !scores.empty()) {
                const auto& s = scores[rng() % scores.size()];
                return expr::score_band(s.id, s.bands[rng() % s.bands.size()].name);
            }
            if (allow_profile_atoms) {
                return rng() % 2 ? expr::age_at_most(static_cast<std::int64_t>(rng() % 100))
                                 : expr::age_at_least(static_cast<std::int64_t>(rng() % 100));
            }
            return expr::fact(facts[rng() % facts.size()]);
        case 4: return expr::negation(random_expr(rng, facts, scores, depth - 1, allow_profile_atoms));
        case 5:
            return expr::conjunction(random_expr(rng, facts, scores, depth - 1, allow_profile_atoms),
                                     random_expr(rng, facts, scores, depth - 1, allow_profile_atoms));
        default:
            return expr::disjunction(random_expr(rng, facts, scores, depth - 1, allow_profile_atoms),
                                     random_expr(rng, facts, scores, depth - 1, allow_profile_atoms));
    }
}

/// Syntactically valid script with random content (not necessarily semantically valid).
inline script::dialog_script random_script(std::mt19937_64& rng) {
    using namespace script;
    dialog_script s;
    s.name = random_text(rng);
    s.version = static_cast<std::int64_t>(rng() % 50);
    std::vector<std::string> ids, facts;
    const std::size_t n_sections = 1 + rng() % 3;
    for (std::size_t si = 0; si < n_sections; ++si) {
        section sec;
        sec.id = "sec" + std::to_string(si);
        const std::size_t n_q = 1 + rng() % 4;
        for (std::size_t qi = 0; qi < n_q; ++qi) {
            question_node q;
            q.id = "q" + std::to_string(si) + "_" + std::to_string(qi);
            q.section = sec.id;
            q.kind = static_cast<question_kind>(rng() % 4);
            q.prompt = random_text(rng);
            q.help = random_text(rng);
            if (q.kind == question_kind::numeric) {
                const auto lo = static_cast<std::int64_t>(rng() % 200) - 100;
                q.numeric_range = {lo, lo + static_cast<std::int64_t>(rng() % 100)};
            }
            if (rng() % 2) {
                q.fact_name = "f_" + q.id;
                facts.push_back(*q.fact_name);
                q.risk_factor = rng() % 3 == 0;
                q.motif = rng() % 4 == 0;
            }
            const std::size_t n_opt = rng() % 4;
            for (std::size_t oi = 0; oi < n_opt; ++oi) {
                answer_option o;
                o.label = random_text(rng, 6) + std::to_string(oi);
                if (rng() % 2) o.weight = static_cast<std::int64_t>(rng() % 21) - 5;
                q.options.push_back(std::move(o));
            }
            const std::size_t n_routes = 1 + rng() % 3;
            for (std::size_t ri = 0; ri < n_routes; ++ri) {
                route r;
                r.target = rng() % 3 == 0 ? std::string(end_target) : "q" + std::to_string(rng() % 3) + "_0";
                switch (rng() % 5) {
                    case 0: r.condition.kind = route_condition::type::always; break;
                    case 1: r.condition.kind = route_condition::type::yes; break;
                    case 2: r.condition.kind = route_condition::type::no; break;
                    case 3:
                        r.condition.kind = route_condition::type::label;
                        r.condition.label = random_text(rng, 5);
                        break;
                    default: {
                        r.condition.kind = route_condition::type::range;
                        const auto lo = static_cast<std::int64_t>(rng() % 100) - 50;
                        r.condition.range = {lo, lo + static_cast<std::int64_t>(rng() % 40)};
                    }
                }
                q.routes.push_back(std::move(r));
            }
            ids.push_back(q.id);
            sec.questions.push_back(std::move(q));
        }
        s.sections.push_back(std::move(sec));
    }
    s.start = ids[rng() % ids.size()];
    if (facts.empty()) facts.push_back("ghost");

    const std::size_t n_scores = rng() % 3;
    for (std::size_t i = 0; i < n_scores; ++i) {
        score_rule r;
        r.id = "score" + std::to_string(i);
        r.question_ids.push_back(ids[rng() % ids.size()]);
        if (rng() % 2) r.question_ids.push_back(ids[rng() % ids.size()]);
        const std::size_t n_b = 1 + rng() % 3;
        for (std::size_t b = 0; b < n_b; ++b) {
            score_band band;
            band.name = "b" + std::to_string(b);
            band.shape = static_cast<score_band::form>(rng() % 3);
            band.a = static_cast<std::int64_t>(rng() % 60) - 20;
            band.b = band.a + static_cast<std::int64_t>(rng() % 10);
            if (band.shape != score_band::form::between) band.b = 0;
            r.bands.push_back(std::move(band));
        }
        s.scores.push_back(std::move(r));
    }
    const std::size_t n_flags = rng() % 4;
    for (std::size_t i = 0; i < n_flags; ++i) {
        s.flags.push_back({"flag" + std::to_string(i), random_expr(rng, facts, s.scores, 3, false)});
    }
    const std::size_t n_profiles = rng() % 3;
    for (std::size_t i = 0; i < n_profiles; ++i) {
        s.profiles.push_back({"profile" + std::to_string(i), random_expr(rng, facts, s.scores, 3, true)});
    }
    const std::size_t n_intercepts = rng() % 3;
    for (std::size_t i = 0; i < n_intercepts; ++i) {
        intercept_rule r;
        r.id = "icpt" + std::to_string(i);
        const std::size_t n_k = 1 + rng() % 3;
        for (std::size_t k = 0; k < n_k; ++k) r.keywords.push_back(random_text(rng, 4));
        r.record_fact = "list" + std::to_string(i);
        s.intercepts.push_back(std::move(r));
    }
    if (!s.scores.empty() && rng() % 2) {
        motivation_config m;
        m.score_id = s.scores.front().id;
        for (const auto& b : s.scores.front().bands) {
            m.table.push_back({b.name, static_cast<motivation_level>(rng() % 3)});
        }
        s.motivation = std::move(m);
    }
    if (rng() % 2) {
        s.demographics = demographics_config{"age_fact", "sex_fact", static_cast<std::int64_t>(rng() % 90),
                                             static_cast<std::int64_t>(rng() % 90)};
    }
    return s;
}

} // namespace mica::test
