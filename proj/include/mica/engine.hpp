/**
 * @file engine.hpp
 * @brief Deterministic interview state machine over a validated dialog script
 *
 * The engine is a pure transition function: a session_state plus an event
 * (utterance or help request, with a caller-supplied timestamp) yields the
 * next state and an output. The engine itself holds only the immutable
 * script, so one instance can serve any number of sessions.
 */

#pragma once

#include "mica/script.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mica::engine {

using script::answer_value;

/// One list append or motif-tagged text answer, in capture order.
struct capture {
    std::string key;
    std::string text;
    std::string source;  ///< node id or intercept rule id

    bool operator==(const capture&) const = default;
};

struct patient_facts {
    std::map<std::string, answer_value> scalars;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, std::string> provenance;  ///< fact key → node id / intercept id
    std::map<std::string, answer_value> answers;     ///< node id → normalized answer
    std::vector<capture> captures;

    bool operator==(const patient_facts&) const = default;
};

enum class entry_kind { answered, rejected, interrupted, help };

[[nodiscard]] std::string_view to_string(entry_kind kind) noexcept;

struct transcript_entry {
    entry_kind kind = entry_kind::answered;
    std::string node;
    std::string prompt;                 ///< prompt shown for `node`
    std::string utterance;              ///< empty for help events
    std::optional<answer_value> answer; ///< answered only
    std::string next;                   ///< answered only: next node or "end"
    std::string intercept;              ///< interrupted only
    std::string keyword;                ///< interrupted only
    std::string reason;                 ///< rejected only
    std::int64_t ts = 0;

    bool operator==(const transcript_entry&) const = default;
};

struct pending_interruption {
    std::string node;
    std::string rule;

    bool operator==(const pending_interruption&) const = default;
};

struct session_state {
    std::string session_id;
    std::string anon_ref;
    std::string script_name;
    std::int64_t script_version = 0;
    std::optional<std::string> current;  ///< nullopt once complete
    patient_facts facts;
    std::vector<transcript_entry> transcript;
    std::vector<pending_interruption> interruption_stack;  ///< at most one entry
    std::int64_t started_at = 0;
    std::int64_t last_event_at = 0;
    std::map<std::string, std::int64_t> per_question_latency;
    std::int64_t detour_ms = 0;  ///< time spent before help, rejected and interrupted events
    std::uint32_t rejections = 0;
    std::uint32_t interruptions = 0;
    std::uint32_t consecutive_rejections = 0;

    [[nodiscard]] bool complete() const noexcept { return !current.has_value(); }

    bool operator==(const session_state&) const = default;
};

struct prompt {
    std::string node_id;
    std::string text;
    script::question_kind kind = script::question_kind::yesno;
    std::vector<std::string> options;
    std::optional<std::string> help;  ///< set on re-prompts after a rejection

    bool operator==(const prompt&) const = default;
};

struct interruption_match {
    std::string rule;
    std::string keyword;
    std::string record_fact;

    bool operator==(const interruption_match&) const = default;
};

struct step_result {
    enum class status { awaiting_answer, complete, rejected };

    status state = status::awaiting_answer;
    std::optional<prompt> next_prompt;          ///< absent once complete
    std::string reject_reason;                  ///< rejected only
    std::optional<interruption_match> interruption;
    std::uint32_t consecutive_rejections = 0;
};

/// Identity fields a replay needs beyond the transcript.
struct session_seed {
    std::string session_id;
    std::string anon_ref;
    std::int64_t started_at = 0;
};

class dialog_engine {
public:
    /// Throws mica_error("InvalidScript") if the script has validation errors.
    explicit dialog_engine(std::shared_ptr<const script::dialog_script> script);

    [[nodiscard]] const script::dialog_script& script() const noexcept { return *script_; }
    [[nodiscard]] const script::node_index& index() const noexcept { return index_; }

    [[nodiscard]] std::pair<session_state, prompt> start_session(const session_seed& seed) const;

    /// Prompt for the current node. Throws SessionComplete after completion.
    [[nodiscard]] prompt current_prompt(const session_state& state) const;

    /**
     * @brief Feed one patient utterance.
     *
     * Interception runs first, but never fires on an utterance that is a
     * legal direct answer to the current node. Throws SessionComplete after
     * completion and ClockRegression if `now` precedes the last event.
     */
    step_result submit_utterance(session_state& state, std::string_view utterance,
                                 std::int64_t now) const;

    /// Help text of the current node, recorded as a help event.
    std::string request_help(session_state& state, std::int64_t now) const;

    [[nodiscard]] std::optional<interruption_match> detect_interruption(
        const session_state& state, std::string_view utterance) const;

    /// Target of the first matching route: a node id or "end".
    /// Throws NoRouteMatched (internal defect on validated scripts).
    [[nodiscard]] std::string select_next(const patient_facts& facts, std::string_view node,
                                          const answer_value& answer) const;

    /// Rebuild a session from its transcript; throws replay_divergence.
    [[nodiscard]] session_state replay(const session_seed& seed,
                                       const std::vector<transcript_entry>& entries) const;

private:
    const script::question_node& node_or_throw(std::string_view id) const;
    void advance_clock(session_state& state, std::int64_t now) const;

    std::shared_ptr<const script::dialog_script> script_;
    script::node_index index_;
};

} // namespace mica::engine
