/**
 * @file engine.cpp
 * @brief Interview state machine implementation
 */

#include "mica/engine.hpp"

#include "mica/error.hpp"
#include "text_util.hpp"

namespace mica::engine {

std::string_view to_string(entry_kind kind) noexcept {
    switch (kind) {
        case entry_kind::answered: return "answered";
        case entry_kind::rejected: return "rejected";
        case entry_kind::interrupted: return "interrupted";
        case entry_kind::help: return "help";
    }
    return "answered";
}

namespace {

const script::dialog_script& require_valid(
    const std::shared_ptr<const script::dialog_script>& script) {
    if (!script) throw mica_error("InvalidScript", "no script");
    const auto report = script::validate_script(*script);
    if (!report.accepted()) {
        const auto& e = report.errors.front();
        throw mica_error("InvalidScript", "script '" + script->name + "' has " +
                                              std::to_string(report.errors.size()) +
                                              " validation error(s), first: " + e.code + " at " +
                                              e.location + ": " + e.message);
    }
    return *script;
}

[[noreturn]] void throw_complete() {
    throw mica_error("SessionComplete", "the interview is already complete");
}

} // namespace

dialog_engine::dialog_engine(std::shared_ptr<const script::dialog_script> script)
    : script_(std::move(script)), index_(require_valid(script_)) {}

const script::question_node& dialog_engine::node_or_throw(std::string_view id) const {
    const auto* node = index_.find(id);
    if (!node) throw mica_error("UnknownNode", "node '" + std::string(id) + "' does not exist");
    return *node;
}

void dialog_engine::advance_clock(session_state& state, std::int64_t now) const {
    if (now < state.last_event_at) {
        throw mica_error("ClockRegression", "timestamp " + std::to_string(now) +
                                                " precedes last event at " +
                                                std::to_string(state.last_event_at));
    }
}

std::pair<session_state, prompt> dialog_engine::start_session(const session_seed& seed) const {
    session_state s;
    s.session_id = seed.session_id;
    s.anon_ref = seed.anon_ref;
    s.script_name = script_->name;
    s.script_version = script_->version;
    s.current = script_->start;
    s.started_at = seed.started_at;
    s.last_event_at = seed.started_at;
    prompt p = current_prompt(s);
    return {std::move(s), std::move(p)};
}

prompt dialog_engine::current_prompt(const session_state& state) const {
    if (state.complete()) throw_complete();
    const auto& node = node_or_throw(*state.current);
    prompt p;
    p.node_id = node.id;
    p.text = node.prompt;
    p.kind = node.kind;
    if (node.kind == script::question_kind::yesno) {
        p.options = {"yes", "no"};
    } else {
        for (const auto& o : node.options) p.options.push_back(o.label);
    }
    return p;
}

std::optional<interruption_match> dialog_engine::detect_interruption(
    const session_state& state, std::string_view utterance) const {
    if (state.complete()) return std::nullopt;
    const auto& node = node_or_throw(*state.current);
    if (script::normalize_answer(node, utterance)) return std::nullopt;

    const std::string lowered = detail::ascii_lower(utterance);
    for (const auto& rule : script_->intercepts) {
        for (const auto& keyword : rule.keywords) {
            if (detail::contains_whole_word(lowered, keyword)) {
                return interruption_match{rule.id, keyword, rule.record_fact};
            }
        }
    }
    return std::nullopt;
}

std::string dialog_engine::select_next(const patient_facts& /*facts*/, std::string_view node_id,
                                       const answer_value& answer) const {
    const auto& node = node_or_throw(node_id);
    const auto route = script::first_matching_route(node, answer);
    if (!route) {
        throw mica_error("NoRouteMatched", "no route of node '" + node.id + "' matches answer '" +
                                               script::format_answer(answer) + "'");
    }
    return node.routes[*route].target;
}

step_result dialog_engine::submit_utterance(session_state& state, std::string_view utterance,
                                            std::int64_t now) const {
    if (state.complete()) throw_complete();
    advance_clock(state, now);
    const auto& node = node_or_throw(*state.current);
    const std::int64_t gap = now - state.last_event_at;

    transcript_entry entry;
    entry.node = node.id;
    entry.prompt = node.prompt;
    entry.utterance = std::string(utterance);
    entry.ts = now;

    step_result result;

    if (auto hit = detect_interruption(state, utterance)) {
        state.facts.lists[hit->record_fact].push_back(entry.utterance);
        state.facts.provenance[hit->record_fact] = hit->rule;
        state.facts.captures.push_back({hit->record_fact, entry.utterance, hit->rule});
        if (state.interruption_stack.empty()) {
            state.interruption_stack.push_back({node.id, hit->rule});
        }
        ++state.interruptions;
        state.detour_ms += gap;
        state.last_event_at = now;

        entry.kind = entry_kind::interrupted;
        entry.intercept = hit->rule;
        entry.keyword = hit->keyword;
        state.transcript.push_back(std::move(entry));

        result.state = step_result::status::awaiting_answer;
        result.next_prompt = current_prompt(state);
        result.interruption = std::move(hit);
        result.consecutive_rejections = state.consecutive_rejections;
        return result;
    }

    const auto value = script::normalize_answer(node, utterance);
    if (!value) {
        ++state.rejections;
        ++state.consecutive_rejections;
        state.detour_ms += gap;
        state.last_event_at = now;

        entry.kind = entry_kind::rejected;
        entry.reason = "unparseable";
        state.transcript.push_back(std::move(entry));

        result.state = step_result::status::rejected;
        result.reject_reason = "unparseable";
        result.next_prompt = current_prompt(state);
        result.next_prompt->help = node.help;
        result.consecutive_rejections = state.consecutive_rejections;
        return result;
    }

    const std::string target = select_next(state.facts, node.id, *value);

    state.facts.answers[node.id] = *value;
    if (node.fact_name) {
        state.facts.scalars[*node.fact_name] = *value;
        state.facts.provenance[*node.fact_name] = node.id;
        if (node.motif) {
            state.facts.captures.push_back(
                {*node.fact_name, std::get<std::string>(*value), node.id});
        }
    }
    state.per_question_latency[node.id] = gap;
    state.last_event_at = now;
    state.consecutive_rejections = 0;
    if (!state.interruption_stack.empty() && state.interruption_stack.back().node == node.id) {
        state.interruption_stack.pop_back();
    }

    entry.kind = entry_kind::answered;
    entry.answer = *value;
    entry.next = target;
    state.transcript.push_back(std::move(entry));

    if (target == script::end_target) {
        state.current.reset();
        result.state = step_result::status::complete;
    } else {
        state.current = target;
        result.state = step_result::status::awaiting_answer;
        result.next_prompt = current_prompt(state);
    }
    return result;
}

std::string dialog_engine::request_help(session_state& state, std::int64_t now) const {
    if (state.complete()) throw_complete();
    advance_clock(state, now);
    const auto& node = node_or_throw(*state.current);

    state.detour_ms += now - state.last_event_at;
    state.last_event_at = now;

    transcript_entry entry;
    entry.kind = entry_kind::help;
    entry.node = node.id;
    entry.prompt = node.prompt;
    entry.ts = now;
    state.transcript.push_back(std::move(entry));
    return node.help;
}

session_state dialog_engine::replay(const session_seed& seed,
                                    const std::vector<transcript_entry>& entries) const {
    auto state = start_session(seed).first;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& recorded = entries[i];
        if (state.complete()) throw replay_divergence(i, "session already complete");
        if (recorded.node != *state.current) {
            throw replay_divergence(i, "recorded node '" + recorded.node + "' but engine is at '" +
                                           *state.current + "'");
        }
        try {
            if (recorded.kind == entry_kind::help) {
                (void)request_help(state, recorded.ts);
            } else {
                (void)submit_utterance(state, recorded.utterance, recorded.ts);
            }
        } catch (const mica_error& e) {
            throw replay_divergence(i, e.what());
        }
        if (!(state.transcript.back() == recorded)) {
            const auto& got = state.transcript.back();
            std::string detail = "recomputed " + std::string(to_string(got.kind));
            if (got.kind == entry_kind::answered) detail += " -> " + got.next;
            detail += ", recorded " + std::string(to_string(recorded.kind));
            if (recorded.kind == entry_kind::answered) detail += " -> " + recorded.next;
            throw replay_divergence(i, detail);
        }
    }
    return state;
}

} // namespace mica::engine
