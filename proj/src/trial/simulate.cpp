/**
 * @file simulate.cpp
 * @brief Seeded persona runs through the dialog engine
 */

#include "mica/trial.hpp"

#include "mica/clinical.hpp"
#include "mica/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <deque>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

namespace mica::trial {

namespace {

using ojson = nlohmann::ordered_json;

latency_range read_latency(const nlohmann::json& j, std::string_view where) {
    latency_range r;
    r.min_ms = j.at("min").get<std::int64_t>();
    r.max_ms = j.at("max").get<std::int64_t>();
    if (r.min_ms < 0 || r.max_ms < r.min_ms) {
        throw mica_error("BadPersonaSpec", std::string(where) + ": latency needs 0 <= min <= max");
    }
    return r;
}

/// Reachable nodes in declaration order.
std::vector<std::string> reachable_nodes(const script::dialog_script& s, const script::node_index& idx) {
    std::set<std::string> seen{s.start};
    std::deque<std::string> queue{s.start};
    while (!queue.empty()) {
        const auto id = queue.front();
        queue.pop_front();
        const auto* q = idx.find(id);
        if (!q) continue;
        for (const auto& r : q->routes) {
            if (r.target != script::end_target && seen.insert(r.target).second) queue.push_back(r.target);
        }
    }
    std::vector<std::string> out;
    for (const auto* q : idx.nodes()) {
        if (seen.contains(q->id)) out.push_back(q->id);
    }
    return out;
}

struct persona_outcome {
    engine::session_state state;
    clinical::assessment result;
};

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, std::int64_t pct) {
    const auto n = static_cast<std::int64_t>(sorted.size());
    const std::int64_t rank = std::max<std::int64_t>(1, (pct * n + 99) / 100);
    return sorted[static_cast<std::size_t>(rank - 1)];
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

persona_spec parse_persona_spec(std::string_view json_text) {
    persona_spec spec;
    try {
        const auto j = nlohmann::json::parse(json_text);
        if (const auto it = j.find("default_latency_ms"); it != j.end()) {
            spec.default_latency = read_latency(*it, "default_latency_ms");
        }
        spec.max_attempts_per_node = j.value("max_attempts_per_node", spec.max_attempts_per_node);
        if (spec.max_attempts_per_node == 0) {
            throw mica_error("BadPersonaSpec", "max_attempts_per_node must be positive");
        }
        for (const auto& [id, node] : j.at("nodes").items()) {
            persona_node p;
            for (const auto& a : node.at("answers")) {
                weighted_answer w;
                w.utterance = a.at("utterance").get<std::string>();
                w.weight = a.value("weight", std::uint64_t{1});
                if (w.weight > 0) p.answers.push_back(std::move(w));
            }
            if (p.answers.empty()) throw mica_error("BadPersonaSpec", id + ": no answer with positive weight");
            if (const auto it = node.find("latency_ms"); it != node.end()) p.latency = read_latency(*it, id);
            spec.nodes.emplace(id, std::move(p));
        }
    } catch (const mica_error&) {
        throw;
    } catch (const std::exception& e) {
        throw mica_error("BadPersonaSpec", e.what());
    }
    return spec;
}

engine::session_state run_persona(const engine::dialog_engine& engine, const persona_spec& spec,
                                  std::uint64_t seed, std::int64_t start_ms) {
    rng r(seed);
    engine::session_seed s;
    s.session_id = "persona";
    s.anon_ref = std::string(32, '0');
    s.started_at = start_ms;
    auto [state, first] = engine.start_session(s);

    std::int64_t now = start_ms;
    std::uint32_t attempts = 0;
    std::string node = first.node_id;
    while (!state.complete()) {
        const auto it = spec.nodes.find(node);
        if (it == spec.nodes.end()) {
            throw mica_error("PersonaSpecIncomplete", "no answer distribution for node '" + node + "'");
        }
        if (++attempts > spec.max_attempts_per_node) {
            throw mica_error("PersonaStuck", "no legal answer at '" + node + "' after " +
                                                 std::to_string(spec.max_attempts_per_node) + " attempts");
        }
        const auto& p = it->second;
        const auto lat = p.latency.value_or(spec.default_latency);
        now += r.between(lat.min_ms, lat.max_ms);

        std::uint64_t total = 0;
        for (const auto& a : p.answers) total += a.weight;
        std::uint64_t pick = r.below(total);
        const weighted_answer* chosen = &p.answers.back();
        for (const auto& a : p.answers) {
            if (pick < a.weight) {
                chosen = &a;
                break;
            }
            pick -= a.weight;
        }

        const auto step = engine.submit_utterance(state, chosen->utterance, now);
        if (step.next_prompt && step.next_prompt->node_id != node) {
            node = step.next_prompt->node_id;
            attempts = 0;
        }
    }
    return state;
}

simulation_report simulate_personas(const engine::dialog_engine& engine, const persona_spec& spec,
                                    std::uint32_t n, std::uint64_t seed, unsigned threads) {
    const auto& script = engine.script();
    const auto reachable = reachable_nodes(script, engine.index());
    for (const auto& id : reachable) {
        if (!spec.nodes.contains(id)) {
            throw mica_error("PersonaSpecIncomplete", "no answer distribution for node '" + id + "'");
        }
    }

    std::vector<persona_outcome> outcomes(n);
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::uint32_t begin, std::uint32_t end) {
        for (std::uint32_t i = begin; i < end; ++i) {
            try {
                outcomes[i].state = run_persona(engine, spec, mix_seed(seed, i));
                outcomes[i].result = clinical::assess(script, outcomes[i].state.facts);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, std::max<std::uint32_t>(n, 1)));
    if (threads == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::uint32_t chunk = (n + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::uint32_t b = std::min(n, t * chunk);
            const std::uint32_t e = std::min(n, b + chunk);
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    simulation_report rep;
    rep.n = n;
    rep.seed = seed;
    rep.nodes_reachable = reachable.size();
    std::set<std::string> hit;
    std::vector<std::int64_t> durations;
    std::int64_t duration_sum = 0;
    for (const auto& o : outcomes) {
        std::int64_t answered = 0;
        for (const auto& t : o.state.transcript) {
            if (t.kind != engine::entry_kind::answered) continue;
            ++answered;
            hit.insert(t.node);
        }
        ++rep.question_count_histogram[answered];
        const auto d = o.state.last_event_at - o.state.started_at;
        durations.push_back(d);
        duration_sum += d;
        for (const auto& f : o.result.flags) ++rep.flag_incidence[f.id];
        ++rep.profile_counts[o.result.profile];
        rep.rejections += o.state.rejections;
        rep.interruptions += o.state.interruptions;
    }
    for (const auto& id : reachable) {
        if (hit.contains(id)) rep.hit_nodes.push_back(id);
    }
    rep.nodes_hit = rep.hit_nodes.size();
    rep.coverage_pct = reachable.empty() ? 0.0
                                         : 100.0 * static_cast<double>(rep.nodes_hit) /
                                               static_cast<double>(rep.nodes_reachable);
    if (!durations.empty()) {
        std::sort(durations.begin(), durations.end());
        rep.duration_min_ms = durations.front();
        rep.duration_max_ms = durations.back();
        rep.duration_mean_ms = static_cast<double>(duration_sum) / static_cast<double>(durations.size());
        rep.duration_p50_ms = nearest_rank(durations, 50);
        rep.duration_p90_ms = nearest_rank(durations, 90);
    }
    return rep;
}

std::string render_simulation_text(const simulation_report& r) {
    std::ostringstream out;
    out << "personas: " << r.n << " (seed " << r.seed << ")\n";
    out << "coverage: " << r.nodes_hit << "/" << r.nodes_reachable << " reachable nodes ("
        << fixed(r.coverage_pct, 1) << "%)\n";
    out << "questions answered:\n";
    for (const auto& [k, v] : r.question_count_histogram) out << "  " << k << ": " << v << "\n";
    out << "duration ms: min " << r.duration_min_ms << ", p50 " << r.duration_p50_ms << ", mean "
        << fixed(r.duration_mean_ms, 1) << ", p90 " << r.duration_p90_ms << ", max " << r.duration_max_ms << "\n";
    out << "red flags:\n";
    if (r.flag_incidence.empty()) out << "  none\n";
    for (const auto& [k, v] : r.flag_incidence) out << "  " << k << ": " << v << "\n";
    out << "profiles:\n";
    for (const auto& [k, v] : r.profile_counts) out << "  " << k << ": " << v << "\n";
    out << "rejections: " << r.rejections << "\n";
    out << "interruptions: " << r.interruptions << "\n";
    return out.str();
}

std::string render_simulation_json(const simulation_report& r) {
    ojson j;
    j["n"] = r.n;
    j["seed"] = r.seed;
    j["coverage"] = {{"nodes_hit", r.nodes_hit},
                     {"nodes_reachable", r.nodes_reachable},
                     {"percent", r.coverage_pct},
                     {"hit_nodes", r.hit_nodes}};
    auto& hist = j["question_count_histogram"] = ojson::object();
    for (const auto& [k, v] : r.question_count_histogram) hist[std::to_string(k)] = v;
    j["duration_ms"] = {{"min", r.duration_min_ms},
                        {"p50", r.duration_p50_ms},
                        {"mean", r.duration_mean_ms},
                        {"p90", r.duration_p90_ms},
                        {"max", r.duration_max_ms}};
    j["flag_incidence"] = ojson::object();
    for (const auto& [k, v] : r.flag_incidence) j["flag_incidence"][k] = v;
    j["profile_counts"] = ojson::object();
    for (const auto& [k, v] : r.profile_counts) j["profile_counts"][k] = v;
    j["rejections"] = r.rejections;
    j["interruptions"] = r.interruptions;
    return j.dump(2) + "\n";
}

} // namespace mica::trial
