/**
 * @file service.hpp
 * @brief Session hosting behind an HTTP+JSON API with event-sourced persistence
 *
 * session_service holds the request logic and is independent of the
 * transport; http_server binds it to cpp-httplib routes:
 *
 *     POST /v1/sessions                      {script_id, patient_id}
 *     POST /v1/sessions/{id}/answer          {utterance}
 *     POST /v1/sessions/{id}/help            {}
 *     GET  /v1/sessions/{id}/summary?role=doctor
 *     POST /v1/surveys                       {session_id, role, scores, respondent_age?}
 *     GET  /v1/metrics
 *
 * Errors carry {"error": <snake_case code>, "message": ...}.
 */

#pragma once

#include "mica/engine.hpp"
#include "mica/event_log.hpp"
#include "mica/script.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace httplib {
class Server;
}

namespace mica::service {

class clock_source {
public:
    virtual ~clock_source() = default;
    [[nodiscard]] virtual std::int64_t now_ms() = 0;
};

class system_clock_source final : public clock_source {
public:
    [[nodiscard]] std::int64_t now_ms() override;
};

/// Test clock; advances only when told to.
class manual_clock final : public clock_source {
public:
    explicit manual_clock(std::int64_t start = 0) : now_(start) {}
    [[nodiscard]] std::int64_t now_ms() override { return now_.load(); }
    void set(std::int64_t t) { now_.store(t); }
    void advance(std::int64_t dt) { now_.fetch_add(dt); }

private:
    std::atomic<std::int64_t> now_;
};

struct catalog_entry {
    std::string id;
    std::shared_ptr<const script::dialog_script> script;  ///< null if it failed to parse
    script::validation_report report;
    std::shared_ptr<const engine::dialog_engine> engine;  ///< null unless valid
    std::string load_error;
};

using script_catalog = std::map<std::string, catalog_entry, std::less<>>;

/// Parse and validate DSL text into a catalog entry (never throws on bad text).
[[nodiscard]] catalog_entry make_catalog_entry(std::string id, std::string_view text);

/// Every `*.mica` file in `dir`, keyed by file stem.
[[nodiscard]] script_catalog load_script_directory(const std::filesystem::path& dir);

struct service_config {
    std::filesystem::path store_path;
    std::string secret;           ///< anonymization key, at least 16 bytes
    bool verify_replay = false;   ///< re-derive every session from its log after each mutation
};

struct api_response {
    int status = 200;
    json body = json::object();
};

namespace survey_dimensions {
inline const std::vector<std::string> doctor = {"service_quality", "consultation_quality",
                                                "data_collection_quality", "technology_confidence",
                                                "time_saving_feeling"};
inline const std::vector<std::string> patient = {"felt_listened", "felt_understood",
                                                 "treatment_personalized"};
} // namespace survey_dimensions

/// {node_id, text, kind, options?, help?}
[[nodiscard]] json prompt_to_json(const engine::prompt& p);
/// {state, prompt?, reject_reason?, interruption?, warning?}
[[nodiscard]] json step_to_json(const engine::step_result& r);

/**
 * @brief Request handling for scripts, sessions, surveys and metrics.
 *
 * Requests on different sessions run in parallel; requests on one session
 * are serialized by a per-session mutex. Every state change is appended to
 * the store (and fsynced) before the response is built. Construction
 * replays the existing store, so a restarted service resumes where the
 * previous process stopped.
 */
class session_service {
public:
    session_service(script_catalog scripts, service_config config,
                    std::shared_ptr<clock_source> clock = std::make_shared<system_clock_source>());
    ~session_service();

    session_service(const session_service&) = delete;
    session_service& operator=(const session_service&) = delete;

    api_response create_session(const json& body);
    api_response post_answer(std::string_view session_id, const json& body);
    api_response post_help(std::string_view session_id);
    api_response get_summary(std::string_view session_id, std::string_view role);
    api_response submit_survey(const json& body);
    [[nodiscard]] api_response metrics() const;

    [[nodiscard]] std::size_t session_count() const;
    /// Engine state of a session; throws if unknown. For tests and tooling.
    [[nodiscard]] engine::session_state snapshot(std::string_view session_id) const;

private:
    struct session_record;

    std::shared_ptr<session_record> find(std::string_view id) const;
    void restore();
    void commit(session_record& rec, engine::session_state next,
                std::vector<event_record> events);
    void verify(const session_record& rec) const;
    std::string next_session_id();

    script_catalog scripts_;
    service_config config_;
    std::shared_ptr<clock_source> clock_;
    event_store store_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<session_record>, std::less<>> sessions_;
    std::uint64_t id_counter_ = 0;
};

/// Binds a session_service to HTTP routes.
class http_server {
public:
    explicit http_server(session_service& service);
    ~http_server();

    http_server(const http_server&) = delete;
    http_server& operator=(const http_server&) = delete;

    /// Blocks until stop(). Returns false if the socket cannot be bound.
    bool listen(const std::string& host, int port);
    /// Binds an ephemeral port and returns it (or -1); then call listen_after_bind().
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    std::unique_ptr<httplib::Server> server_;
};

} // namespace mica::service
