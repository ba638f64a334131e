/**
 * @file event_log.hpp
 * @brief Line-delimited JSON event records and their mapping to transcripts
 *
 * The same record format serves as the service's append-only store and as
 * the transcript file written by `mica run`, so either can be replayed.
 */

#pragma once

#include "mica/engine.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace mica::service {

using json = nlohmann::ordered_json;

namespace event_kind {
inline constexpr std::string_view started = "started";
inline constexpr std::string_view prompted = "prompted";
inline constexpr std::string_view answered = "answered";
inline constexpr std::string_view rejected = "rejected";
inline constexpr std::string_view help = "help";
inline constexpr std::string_view interrupted = "interrupted";
inline constexpr std::string_view completed = "completed";
inline constexpr std::string_view survey = "survey";
} // namespace event_kind

struct event_record {
    std::int64_t seq = 0;
    std::string session_id;
    std::int64_t ts = 0;
    std::string kind;
    json payload = json::object();

    bool operator==(const event_record&) const = default;
};

/// One JSON object, no trailing newline.
[[nodiscard]] std::string encode_event(const event_record& e);
[[nodiscard]] event_record decode_event(std::string_view line);

/// Events (seq left 0) produced when a session starts.
[[nodiscard]] std::vector<event_record> start_events(const engine::session_state& s,
                                                     std::string_view script_id);

/// Events (seq left 0) produced by one transcript entry: the entry itself
/// followed by `prompted` or `completed` where applicable.
[[nodiscard]] std::vector<event_record> entry_events(const engine::transcript_entry& entry,
                                                     const engine::session_state& s);

/// Full numbered event stream for a session, as the service would have logged it.
[[nodiscard]] std::vector<event_record> session_events(const engine::session_state& s,
                                                       std::string_view script_id);

/// Session identity and script id carried by a `started` event.
struct started_info {
    engine::session_seed seed;
    std::string script_id;
};

[[nodiscard]] started_info read_started(const event_record& e);

/// Transcript entries carried by answered/rejected/interrupted/help events.
[[nodiscard]] std::vector<engine::transcript_entry> transcript_from_events(
    const std::vector<event_record>& events);

/**
 * @brief Append-only JSONL file with durable writes.
 *
 * append() writes every line, flushes, and fsyncs before returning. A
 * trailing partial line (torn write) is ignored on load; any other
 * malformed line is an error.
 */
class event_store {
public:
    explicit event_store(std::filesystem::path path);
    ~event_store();

    event_store(const event_store&) = delete;
    event_store& operator=(const event_store&) = delete;

    [[nodiscard]] std::vector<event_record> load() const;
    void append(const std::vector<event_record>& events);
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::FILE* file_ = nullptr;
    std::mutex mutex_;
};

/// Read every record of a JSONL file (same torn-tail rule as event_store).
[[nodiscard]] std::vector<event_record> read_event_file(const std::filesystem::path& path);

} // namespace mica::service
