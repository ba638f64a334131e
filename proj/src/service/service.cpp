/**
 * @file service.cpp
 * @brief Session service request handling and restart-time replay
 */

#include "mica/service.hpp"

#include "mica/clinical.hpp"
#include "mica/error.hpp"
#include "mica/summary.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mica::service {

std::int64_t system_clock_source::now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// =============================================================================
// Script catalog
// =============================================================================

catalog_entry make_catalog_entry(std::string id, std::string_view text) {
    catalog_entry entry;
    entry.id = std::move(id);
    try {
        auto parsed = std::make_shared<script::dialog_script>(
            script::parse_script(text, {.allow_duplicate_ids = true}));
        entry.report = script::validate_script(*parsed);
        entry.script = parsed;
        if (entry.report.accepted()) {
            entry.engine = std::make_shared<const engine::dialog_engine>(entry.script);
        }
    } catch (const mica_error& e) {
        entry.load_error = e.what();
    }
    return entry;
}

script_catalog load_script_directory(const std::filesystem::path& dir) {
    script_catalog out;
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
        if (!f.is_regular_file() || f.path().extension() != ".mica") continue;
        std::ifstream in(f.path(), std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        auto entry = make_catalog_entry(f.path().stem().string(), buf.str());
        out.emplace(entry.id, std::move(entry));
    }
    return out;
}

// =============================================================================
// Helpers
// =============================================================================

namespace {

api_response error_response(int status, std::string_view code, std::string message) {
    return {status, json{{"error", code}, {"message", std::move(message)}}};
}

const std::string* string_field(const json& body, std::string_view key) {
    if (!body.is_object()) return nullptr;
    const auto it = body.find(std::string(key));
    if (it == body.end() || !it->is_string()) return nullptr;
    return it->get_ptr<const std::string*>();
}

} // namespace

json prompt_to_json(const engine::prompt& p) {
    json j{{"node_id", p.node_id}, {"text", p.text}, {"kind", script::to_string(p.kind)}};
    if (p.kind == script::question_kind::choice || p.kind == script::question_kind::yesno) {
        j["options"] = p.options;
    }
    if (p.help) j["help"] = *p.help;
    return j;
}

json step_to_json(const engine::step_result& r) {
    json j;
    switch (r.state) {
        case engine::step_result::status::awaiting_answer: j["state"] = "awaiting_answer"; break;
        case engine::step_result::status::complete: j["state"] = "complete"; break;
        case engine::step_result::status::rejected: j["state"] = "rejected"; break;
    }
    if (r.next_prompt) j["prompt"] = prompt_to_json(*r.next_prompt);
    if (r.state == engine::step_result::status::rejected) j["reject_reason"] = r.reject_reason;
    if (r.interruption) {
        j["interruption"] = {{"rule", r.interruption->rule}, {"keyword", r.interruption->keyword}};
    }
    if (r.consecutive_rejections >= 3) j["warning"] = "repeated_rejections";
    return j;
}

// =============================================================================
// session_service
// =============================================================================

struct session_service::session_record {
    std::mutex mutex;
    std::string script_id;
    std::shared_ptr<const engine::dialog_engine> engine;
    engine::session_state state;
    std::vector<event_record> events;
    std::map<std::string, std::int64_t> survey_seq;  ///< role → seq of the live submission
};

session_service::session_service(script_catalog scripts, service_config config,
                                 std::shared_ptr<clock_source> clock)
    : scripts_(std::move(scripts)),
      config_(std::move(config)),
      clock_(std::move(clock)),
      store_(config_.store_path) {
    if (config_.secret.size() < summary::min_secret_bytes) {
        throw mica_error("WeakSecret", "anonymization secret must be at least " +
                                           std::to_string(summary::min_secret_bytes) + " bytes");
    }
    restore();
}

session_service::~session_service() = default;

void session_service::restore() {
    std::map<std::string, std::vector<event_record>> by_session;
    std::vector<std::string> order;
    for (auto& e : store_.load()) {
        auto [it, inserted] = by_session.try_emplace(e.session_id);
        if (inserted) order.push_back(e.session_id);
        it->second.push_back(std::move(e));
    }

    for (const auto& id : order) {
        auto& events = by_session[id];
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (events[i].seq != static_cast<std::int64_t>(i + 1)) {
                throw mica_error("CorruptLog", "session " + id + " has a sequence gap at " +
                                                   std::to_string(i + 1));
            }
        }
        const auto started = read_started(events.front());
        const auto script = scripts_.find(started.script_id);
        if (script == scripts_.end() || !script->second.engine) {
            throw mica_error("CorruptLog", "session " + id + " uses unavailable script '" +
                                               started.script_id + "'");
        }
        auto rec = std::make_shared<session_record>();
        rec->script_id = started.script_id;
        rec->engine = script->second.engine;
        rec->state = rec->engine->replay(started.seed, transcript_from_events(events));
        for (const auto& e : events) {
            if (e.kind == event_kind::survey) rec->survey_seq[e.payload.at("role").get<std::string>()] = e.seq;
        }
        rec->events = std::move(events);

        std::uint64_t n = 0;
        if (id.size() > 1 && id[0] == 's' &&
            std::from_chars(id.data() + 1, id.data() + id.size(), n).ec == std::errc{}) {
            id_counter_ = std::max(id_counter_, n);
        }
        sessions_.emplace(id, std::move(rec));
    }
}

std::string session_service::next_session_id() {
    char buf[32];
    do {
        std::snprintf(buf, sizeof buf, "s%08llu", static_cast<unsigned long long>(++id_counter_));
    } while (sessions_.count(std::string_view(buf)));
    return buf;
}

std::shared_ptr<session_service::session_record> session_service::find(std::string_view id) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

void session_service::commit(session_record& rec, engine::session_state next,
                             std::vector<event_record> events) {
    std::int64_t seq = rec.events.empty() ? 0 : rec.events.back().seq;
    for (auto& e : events) e.seq = ++seq;
    store_.append(events);
    rec.state = std::move(next);
    rec.events.insert(rec.events.end(), events.begin(), events.end());
    if (config_.verify_replay) verify(rec);
}

void session_service::verify(const session_record& rec) const {
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
        if (rec.events[i].seq != static_cast<std::int64_t>(i + 1)) {
            throw mica_error("ReplayMismatch", "sequence gap in session " + rec.state.session_id);
        }
        if (i > 0 && rec.events[i].ts < rec.events[i - 1].ts) {
            throw mica_error("ReplayMismatch", "timestamps regress in session " + rec.state.session_id);
        }
    }
    const auto started = read_started(rec.events.front());
    const auto rebuilt = rec.engine->replay(started.seed, transcript_from_events(rec.events));
    if (!(rebuilt == rec.state)) {
        throw mica_error("ReplayMismatch", "log replay differs from live state of session " +
                                               rec.state.session_id);
    }
}

api_response session_service::create_session(const json& body) {
    const auto* script_id = string_field(body, "script_id");
    const auto* patient_id = string_field(body, "patient_id");
    if (!script_id || !patient_id) {
        return error_response(400, "bad_request", "script_id and patient_id strings are required");
    }
    const auto script = scripts_.find(*script_id);
    if (script == scripts_.end()) {
        return error_response(404, "unknown_script", "no script '" + *script_id + "'");
    }
    if (!script->second.engine) {
        return error_response(422, "invalid_script", "script '" + *script_id + "' failed validation");
    }

    std::string anon_ref;
    try {
        anon_ref = summary::anonymize_patient(*patient_id, config_.secret);
    } catch (const mica_error& e) {
        return error_response(422, "bad_patient_id", e.what());
    }

    auto rec = std::make_shared<session_record>();
    rec->script_id = *script_id;
    rec->engine = script->second.engine;

    std::unique_lock map_lock(sessions_mutex_);
    const std::string id = next_session_id();
    auto [state, first] = rec->engine->start_session({id, anon_ref, clock_->now_ms()});
    auto events = start_events(state, *script_id);
    {
        std::lock_guard lock(rec->mutex);
        commit(*rec, std::move(state), std::move(events));
    }
    sessions_.emplace(id, rec);
    map_lock.unlock();

    return {201, json{{"session_id", id}, {"anon_ref", anon_ref}, {"prompt", prompt_to_json(first)}}};
}

api_response session_service::post_answer(std::string_view session_id, const json& body) {
    const auto rec = find(session_id);
    if (!rec) return error_response(404, "unknown_session", "no session '" + std::string(session_id) + "'");
    const auto* utterance = string_field(body, "utterance");
    if (!utterance) return error_response(400, "bad_request", "utterance string is required");

    std::lock_guard lock(rec->mutex);
    if (rec->state.complete()) {
        return error_response(409, "session_complete", "the interview is already complete");
    }
    engine::session_state next = rec->state;
    const std::int64_t now = std::max(clock_->now_ms(), next.last_event_at);
    const auto result = rec->engine->submit_utterance(next, *utterance, now);
    auto events = entry_events(next.transcript.back(), next);
    commit(*rec, std::move(next), std::move(events));
    return {200, step_to_json(result)};
}

api_response session_service::post_help(std::string_view session_id) {
    const auto rec = find(session_id);
    if (!rec) return error_response(404, "unknown_session", "no session '" + std::string(session_id) + "'");

    std::lock_guard lock(rec->mutex);
    if (rec->state.complete()) {
        return error_response(409, "session_complete", "the interview is already complete");
    }
    engine::session_state next = rec->state;
    const std::int64_t now = std::max(clock_->now_ms(), next.last_event_at);
    std::string help = rec->engine->request_help(next, now);
    auto events = entry_events(next.transcript.back(), next);
    commit(*rec, std::move(next), std::move(events));
    return {200, json{{"help", help}}};
}

api_response session_service::get_summary(std::string_view session_id, std::string_view role) {
    const auto rec = find(session_id);
    if (!rec) return error_response(404, "unknown_session", "no session '" + std::string(session_id) + "'");
    if (role != "doctor") {
        return error_response(403, "role_forbidden", "the summary is reserved for the doctor");
    }

    std::lock_guard lock(rec->mutex);
    if (!rec->state.complete()) {
        return error_response(409, "session_incomplete", "the interview has not finished");
    }
    const auto& script = rec->engine->script();
    const auto clinical = clinical::assess(script, rec->state.facts);
    const auto s = summary::generate_summary(script, rec->state, clinical);
    return {200, json::parse(summary::render_summary(s, summary::summary_format::structured))};
}

api_response session_service::submit_survey(const json& body) {
    const auto* session_id = string_field(body, "session_id");
    const auto* role = string_field(body, "role");
    if (!session_id) return error_response(400, "bad_request", "session_id string is required");
    const auto rec = find(*session_id);
    if (!rec) return error_response(404, "unknown_session", "no session '" + *session_id + "'");
    if (!role || (*role != "doctor" && *role != "patient")) {
        return error_response(422, "bad_role", "role must be 'doctor' or 'patient'");
    }

    const auto& dims = *role == "doctor" ? survey_dimensions::doctor : survey_dimensions::patient;
    const auto scores_it = body.find("scores");
    if (scores_it == body.end() || !scores_it->is_object()) {
        return error_response(422, "bad_dimension_set", "scores must be an object");
    }
    std::set<std::string> given;
    for (const auto& [k, v] : scores_it->items()) given.insert(k);
    if (given != std::set<std::string>(dims.begin(), dims.end())) {
        return error_response(422, "bad_dimension_set",
                              "scores must cover exactly the " + *role + " dimensions");
    }
    json scores = json::object();
    for (const auto& d : dims) {
        const auto& v = scores_it->at(d);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1 || v.get<std::int64_t>() > 9) {
            return error_response(422, "score_out_of_range",
                                  "score for '" + d + "' must be an integer from 1 to 9");
        }
        scores[d] = v.get<std::int64_t>();
    }

    json payload{{"role", *role}, {"scores", scores}};
    if (const auto age = body.find("respondent_age"); age != body.end() && !age->is_null()) {
        if (*role != "patient" || !age->is_number_integer() || age->get<std::int64_t>() < 0 ||
            age->get<std::int64_t>() > 150) {
            return error_response(422, "bad_respondent_age",
                                  "respondent_age is an integer 0..150, patients only");
        }
        payload["respondent_age"] = age->get<std::int64_t>();
    }

    std::lock_guard lock(rec->mutex);
    const auto previous = rec->survey_seq.find(*role);
    const bool superseded = previous != rec->survey_seq.end();
    if (superseded) payload["supersedes"] = previous->second;

    event_record e;
    e.session_id = *session_id;
    e.ts = std::max(clock_->now_ms(), rec->events.back().ts);
    e.kind = std::string(event_kind::survey);
    e.payload = std::move(payload);
    commit(*rec, rec->state, {e});
    rec->survey_seq[*role] = rec->events.back().seq;
    return {200, json{{"accepted", true}, {"superseded", superseded}}};
}

api_response session_service::metrics() const {
    std::int64_t started = 0, completed = 0, duration_sum = 0, rejections = 0, interruptions = 0;
    std::int64_t doctor_surveys = 0, patient_surveys = 0;
    std::shared_lock map_lock(sessions_mutex_);
    for (const auto& [id, rec] : sessions_) {
        std::lock_guard lock(rec->mutex);
        ++started;
        if (rec->state.complete()) {
            ++completed;
            duration_sum += rec->state.last_event_at - rec->state.started_at;
        }
        rejections += rec->state.rejections;
        interruptions += rec->state.interruptions;
        doctor_surveys += static_cast<std::int64_t>(rec->survey_seq.count("doctor"));
        patient_surveys += static_cast<std::int64_t>(rec->survey_seq.count("patient"));
    }
    const double mean = completed == 0 ? 0.0 : static_cast<double>(duration_sum) / static_cast<double>(completed);
    return {200, json{{"sessions_started", started},
                      {"sessions_completed", completed},
                      {"mean_interview_duration_ms", mean},
                      {"rejections", rejections},
                      {"interruptions", interruptions},
                      {"surveys", {{"doctor", doctor_surveys}, {"patient", patient_surveys}}}}};
}

std::size_t session_service::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

engine::session_state session_service::snapshot(std::string_view session_id) const {
    const auto rec = find(session_id);
    if (!rec) throw mica_error("UnknownSession", "no session '" + std::string(session_id) + "'");
    std::lock_guard lock(rec->mutex);
    return rec->state;
}

} // namespace mica::service
