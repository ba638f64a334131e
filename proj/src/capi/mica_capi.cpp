/**
 * @file mica_capi.cpp
 * @brief extern "C" wrappers over the C++ modules
 */

#include "mica/mica.h"

#include "mica/clinical.hpp"
#include "mica/engine.hpp"
#include "mica/error.hpp"
#include "mica/event_log.hpp"
#include "mica/script.hpp"
#include "mica/service.hpp"
#include "mica/summary.hpp"
#include "mica/trial.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

struct mica_script {
    std::shared_ptr<const mica::script::dialog_script> script;
};

struct mica_session {
    std::shared_ptr<const mica::engine::dialog_engine> engine;
    mica::engine::session_state state;
};

struct mica_service {
    std::unique_ptr<mica::service::session_service> service;
    std::unique_ptr<mica::service::http_server> http;
};

namespace {

using mica::service::json;

thread_local std::string last_message;
thread_local std::string last_code;

void clear_error() {
    last_message.clear();
    last_code.clear();
}

mica_status fail(mica_status status, std::string code, std::string message) {
    last_code = std::move(code);
    last_message = std::move(message);
    return status;
}

mica_status status_for(const std::string& code) {
    if (code == "SyntaxError") return MICA_E_SYNTAX;
    if (code == "InvalidScript" || code == "DuplicateId" || code == "CycleDetected") {
        return MICA_E_INVALID_SCRIPT;
    }
    if (code == "SessionComplete") return MICA_E_SESSION_COMPLETE;
    if (code == "SessionIncomplete") return MICA_E_SESSION_INCOMPLETE;
    if (code == "ReplayDivergence" || code == "ReplayMismatch") return MICA_E_REPLAY;
    if (code == "StoreUnavailable" || code == "StoreWriteFailed" || code == "IoError") return MICA_E_IO;
    return MICA_E_INPUT;
}

/// Runs `fn`, translating exceptions into a status and thread-local error.
template <typename F>
mica_status guarded(F&& fn) noexcept {
    clear_error();
    try {
        return fn();
    } catch (const mica::mica_error& e) {
        return fail(status_for(e.code()), e.code(), e.what());
    } catch (const std::bad_alloc&) {
        return fail(MICA_E_INTERNAL, "OutOfMemory", "out of memory");
    } catch (const std::exception& e) {
        return fail(MICA_E_INTERNAL, "Internal", e.what());
    } catch (...) {
        return fail(MICA_E_INTERNAL, "Internal", "unknown exception");
    }
}

char* dup_string(std::string_view s) {
    auto* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size());
    p[s.size()] = '\0';
    return p;
}

mica_status null_arg(const char* name) {
    return fail(MICA_E_INVALID_ARGUMENT, "InvalidArgument", std::string(name) + " must not be null");
}

std::string read_file(const char* path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw mica::mica_error("IoError", std::string("cannot read ") + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json report_json(const mica::script::validation_report& r) {
    auto list = [](const std::vector<mica::script::diagnostic>& ds) {
        json a = json::array();
        for (const auto& d : ds) a.push_back({{"code", d.code}, {"location", d.location}, {"message", d.message}});
        return a;
    };
    return json{{"accepted", r.accepted()}, {"errors", list(r.errors)}, {"warnings", list(r.warnings)}};
}

std::shared_ptr<const mica::engine::dialog_engine> engine_for(const mica_script& s) {
    const auto report = mica::script::validate_script(*s.script);
    if (!report.accepted()) {
        throw mica::mica_error("InvalidScript", "script has " + std::to_string(report.errors.size()) +
                                                   " validation error(s), first: " + report.errors.front().code);
    }
    return std::make_shared<const mica::engine::dialog_engine>(s.script);
}

mica::summary::doctor_summary summarize(const mica_session& s) {
    if (!s.state.complete()) {
        throw mica::mica_error("SessionIncomplete", "the interview has not reached its end");
    }
    const auto& script = s.engine->script();
    const auto clinical = mica::clinical::assess(script, s.state.facts);
    return mica::summary::generate_summary(script, s.state, clinical);
}

mica::trial::trim_rule parse_trim(const char* text) {
    mica::trial::trim_rule rule;
    if (!text) return rule;
    const std::string_view t(text);
    if (t == "none") {
        rule.kind = mica::trial::trim_rule::type::none;
    } else if (t.starts_with("cap:")) {
        rule.kind = mica::trial::trim_rule::type::absolute_cap;
        rule.cap_ms = std::stoll(std::string(t.substr(4)));
    } else if (t.size() > 1 && t.back() == 'x') {
        rule.factor = std::stoll(std::string(t.substr(0, t.size() - 1)));
        if (rule.factor <= 0) throw mica::mica_error("BadTrimRule", "factor must be positive");
    } else {
        throw mica::mica_error("BadTrimRule", "trim must be NUMx, cap:MS or none");
    }
    return rule;
}

} // namespace

extern "C" {

const char* mica_version(void) {
    return "1.0.0";
}

const char* mica_status_name(mica_status status) {
    switch (status) {
        case MICA_OK: return "ok";
        case MICA_E_INVALID_ARGUMENT: return "invalid_argument";
        case MICA_E_SYNTAX: return "syntax";
        case MICA_E_INVALID_SCRIPT: return "invalid_script";
        case MICA_E_IO: return "io";
        case MICA_E_SESSION_COMPLETE: return "session_complete";
        case MICA_E_SESSION_INCOMPLETE: return "session_incomplete";
        case MICA_E_REPLAY: return "replay";
        case MICA_E_INPUT: return "input";
        case MICA_E_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* mica_last_error(void) {
    return last_message.c_str();
}

const char* mica_last_error_code(void) {
    return last_code.c_str();
}

void mica_string_free(char* s) {
    std::free(s);
}

// ---------------------------------------------------------------- scripts

mica_status mica_script_parse(const char* text, size_t len, mica_script** out) {
    return guarded([&] {
        if (!text) return null_arg("text");
        if (!out) return null_arg("out");
        auto parsed = mica::script::parse_script(std::string_view(text, len));
        *out = new mica_script{std::make_shared<const mica::script::dialog_script>(std::move(parsed))};
        return MICA_OK;
    });
}

mica_status mica_script_load_file(const char* path, mica_script** out) {
    return guarded([&] {
        if (!path) return null_arg("path");
        const auto text = read_file(path);
        return mica_script_parse(text.data(), text.size(), out);
    });
}

void mica_script_free(mica_script* script) {
    delete script;
}

mica_status mica_validate_text(const char* text, size_t len, char** report, int* accepted) {
    return guarded([&] {
        if (!text) return null_arg("text");
        if (!report) return null_arg("report_json");
        mica::script::validation_report r;
        try {
            const auto parsed = mica::script::parse_script(std::string_view(text, len),
                                                           {.allow_duplicate_ids = true});
            r = mica::script::validate_script(parsed);
        } catch (const mica::syntax_error& e) {
            r.errors.push_back({e.code(), "line " + std::to_string(e.line()), e.what()});
        }
        *report = dup_string(report_json(r).dump(2) + "\n");
        if (accepted) *accepted = r.accepted() ? 1 : 0;
        return MICA_OK;
    });
}

mica_status mica_script_render(const mica_script* script, char** out) {
    return guarded([&] {
        if (!script) return null_arg("script");
        if (!out) return null_arg("out");
        *out = dup_string(mica::script::render_script(*script->script));
        return MICA_OK;
    });
}

size_t mica_script_question_count(const mica_script* script) {
    return script ? script->script->question_count() : 0;
}

// --------------------------------------------------------------- sessions

mica_status mica_session_start(const mica_script* script, const char* session_id, const char* patient_id,
                               const char* secret, int64_t now_ms, mica_session** out, char** prompt_json) {
    return guarded([&] {
        if (!script) return null_arg("script");
        if (!out) return null_arg("out");
        mica::engine::session_seed seed;
        seed.session_id = session_id ? session_id : "local";
        seed.started_at = now_ms;
        if (patient_id) {
            if (!secret) return null_arg("secret");
            seed.anon_ref = mica::summary::anonymize_patient(patient_id, std::string_view(secret));
        } else {
            seed.anon_ref = std::string(32, '0');
        }
        auto session = std::make_unique<mica_session>();
        session->engine = engine_for(*script);
        auto [state, first] = session->engine->start_session(seed);
        session->state = std::move(state);
        if (prompt_json) *prompt_json = dup_string(mica::service::prompt_to_json(first).dump());
        *out = session.release();
        return MICA_OK;
    });
}

void mica_session_free(mica_session* session) {
    delete session;
}

mica_status mica_session_submit(mica_session* session, const char* utterance, int64_t now_ms, char** step_json) {
    return guarded([&] {
        if (!session) return null_arg("session");
        if (!utterance) return null_arg("utterance");
        auto next = session->state;
        const auto step = session->engine->submit_utterance(next, utterance, now_ms);
        session->state = std::move(next);
        if (step_json) *step_json = dup_string(mica::service::step_to_json(step).dump());
        return MICA_OK;
    });
}

mica_status mica_session_help(mica_session* session, int64_t now_ms, char** help_text) {
    return guarded([&] {
        if (!session) return null_arg("session");
        auto next = session->state;
        const auto text = session->engine->request_help(next, now_ms);
        session->state = std::move(next);
        if (help_text) *help_text = dup_string(text);
        return MICA_OK;
    });
}

int mica_session_complete(const mica_session* session) {
    return session && session->state.complete() ? 1 : 0;
}

mica_status mica_session_events(const mica_session* session, char** jsonl) {
    return guarded([&] {
        if (!session) return null_arg("session");
        if (!jsonl) return null_arg("jsonl");
        std::string out;
        for (const auto& e : mica::service::session_events(session->state, session->state.script_name)) {
            out += mica::service::encode_event(e);
            out += '\n';
        }
        *jsonl = dup_string(out);
        return MICA_OK;
    });
}

mica_status mica_session_replay(const mica_script* script, const char* jsonl, mica_session** out) {
    return guarded([&] {
        if (!script) return null_arg("script");
        if (!jsonl) return null_arg("jsonl");
        if (!out) return null_arg("out");
        std::vector<mica::service::event_record> events;
        std::istringstream in{std::string(jsonl)};
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) events.push_back(mica::service::decode_event(line));
        }
        const auto it = std::find_if(events.begin(), events.end(), [](const auto& e) {
            return e.kind == mica::service::event_kind::started;
        });
        if (it == events.end()) throw mica::mica_error("BadEvent", "no started event");
        const auto info = mica::service::read_started(*it);
        std::vector<mica::service::event_record> mine;
        for (const auto& e : events) {
            if (e.session_id == info.seed.session_id) mine.push_back(e);
        }
        auto session = std::make_unique<mica_session>();
        session->engine = engine_for(*script);
        session->state = session->engine->replay(info.seed, mica::service::transcript_from_events(mine));
        *out = session.release();
        return MICA_OK;
    });
}

mica_status mica_session_summary(const mica_session* session, mica_format format, char** out) {
    return guarded([&] {
        if (!session) return null_arg("session");
        if (!out) return null_arg("out");
        const auto fmt = format == MICA_FORMAT_JSON ? mica::summary::summary_format::structured
                                                    : mica::summary::summary_format::plain;
        *out = dup_string(mica::summary::render_summary(summarize(*session), fmt));
        return MICA_OK;
    });
}

mica_status mica_session_prescription(const mica_session* session, const char* template_text,
                                      char** draft_json) {
    return guarded([&] {
        if (!session) return null_arg("session");
        if (!template_text) return null_arg("template_text");
        if (!draft_json) return null_arg("draft_json");
        const auto d = mica::summary::prepare_prescription(summarize(*session), template_text);
        const json j{{"anon_ref", d.anon_ref}, {"template_id", d.template_id}, {"text", d.text},
                     {"filled", d.filled},     {"missing", d.missing},         {"complete", d.complete},
                     {"status", d.status}};
        *draft_json = dup_string(j.dump(2) + "\n");
        return MICA_OK;
    });
}

// ---------------------------------------------------------------- harness

mica_status mica_simulate(const mica_script* script, const char* persona_json, uint32_t n, uint64_t seed,
                          unsigned threads, mica_format format, char** out) {
    return guarded([&] {
        if (!script) return null_arg("script");
        if (!persona_json) return null_arg("persona_json");
        if (!out) return null_arg("out");
        const auto engine = engine_for(*script);
        const auto spec = mica::trial::parse_persona_spec(persona_json);
        const auto rep = mica::trial::simulate_personas(*engine, spec, n, seed, threads == 0 ? 1 : threads);
        *out = dup_string(format == MICA_FORMAT_JSON ? mica::trial::render_simulation_json(rep)
                                                     : mica::trial::render_simulation_text(rep));
        return MICA_OK;
    });
}

mica_status mica_trial_assign(const char* roster_text, uint64_t seed, char** assignment_json) {
    return guarded([&] {
        if (!roster_text) return null_arg("roster_text");
        if (!assignment_json) return null_arg("assignment_json");
        const auto a = mica::trial::assign_groups(mica::trial::parse_roster(roster_text), seed);
        *assignment_json = dup_string(mica::trial::assignment_to_json(a));
        return MICA_OK;
    });
}

mica_status mica_trial_report(const char* assignment_json, const char* surveys_jsonl, const char* durations_csv,
                              const char* age_bands, const char* trim, mica_format format, char** out) {
    return guarded([&] {
        if (!assignment_json) return null_arg("assignment_json");
        if (!out) return null_arg("out");
        const auto a = mica::trial::assignment_from_json(assignment_json);
        const auto surveys = surveys_jsonl ? mica::trial::read_surveys(surveys_jsonl) : mica::trial::survey_batch{};
        const auto durations = durations_csv ? mica::trial::parse_durations(durations_csv)
                                             : std::vector<std::pair<std::string, std::int64_t>>{};
        const auto bands = age_bands ? mica::trial::parse_age_bands(age_bands) : mica::trial::default_age_bands();
        const auto rep = mica::trial::build_trial_report(surveys, a, durations, bands, parse_trim(trim));
        *out = dup_string(format == MICA_FORMAT_JSON ? mica::trial::render_trial_report_json(rep)
                                                     : mica::trial::render_trial_report_text(rep));
        return MICA_OK;
    });
}

// ---------------------------------------------------------------- service

mica_status mica_service_create(const char* script_dir, const char* store_path, const char* secret,
                                mica_service** out) {
    return guarded([&] {
        if (!script_dir) return null_arg("script_dir");
        if (!store_path) return null_arg("store_path");
        if (!secret) return null_arg("secret");
        if (!out) return null_arg("out");
        if (!std::filesystem::is_directory(script_dir)) {
            throw mica::mica_error("IoError", std::string("not a directory: ") + script_dir);
        }
        mica::service::service_config config;
        config.store_path = store_path;
        config.secret = secret;
        auto svc = std::make_unique<mica_service>();
        svc->service = std::make_unique<mica::service::session_service>(
            mica::service::load_script_directory(script_dir), std::move(config));
        svc->http = std::make_unique<mica::service::http_server>(*svc->service);
        *out = svc.release();
        return MICA_OK;
    });
}

mica_status mica_service_listen(mica_service* service, const char* host, int port) {
    return guarded([&] {
        if (!service) return null_arg("service");
        if (!service->http->listen(host ? host : "127.0.0.1", port)) {
            return fail(MICA_E_IO, "IoError", "cannot listen on port " + std::to_string(port));
        }
        return MICA_OK;
    });
}

mica_status mica_service_bind(mica_service* service, const char* host, int* port) {
    return guarded([&] {
        if (!service) return null_arg("service");
        if (!port) return null_arg("port");
        *port = service->http->bind_any_port(host ? host : "127.0.0.1");
        if (*port < 0) return fail(MICA_E_IO, "IoError", "cannot bind");
        return MICA_OK;
    });
}

mica_status mica_service_listen_bound(mica_service* service) {
    return guarded([&] {
        if (!service) return null_arg("service");
        if (!service->http->listen_after_bind()) return fail(MICA_E_IO, "IoError", "listen failed");
        return MICA_OK;
    });
}

void mica_service_stop(mica_service* service) {
    if (service) service->http->stop();
}

void mica_service_free(mica_service* service) {
    delete service;
}

} // extern "C"
