/**
 * @file event_log.cpp
 * @brief Event record codec and durable JSONL store
 */

#include "mica/event_log.hpp"

#include "mica/error.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unistd.h>

namespace mica::service {

namespace {

json answer_to_json(const engine::answer_value& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    return std::get<std::string>(v);
}

engine::answer_value answer_from_json(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_string()) return j.get<std::string>();
    throw mica_error("BadEvent", "answer must be boolean, integer or string");
}

event_record make(std::string_view kind, const std::string& session, std::int64_t ts, json payload) {
    event_record e;
    e.session_id = session;
    e.ts = ts;
    e.kind = std::string(kind);
    e.payload = std::move(payload);
    return e;
}

std::vector<event_record> parse_lines(std::istream& in, const std::string& origin) {
    std::vector<event_record> out;
    std::string line;
    std::size_t lineno = 0;
    std::string pending_error;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!pending_error.empty()) throw mica_error("CorruptLog", pending_error);
        try {
            out.push_back(decode_event(line));
        } catch (const std::exception& e) {
            // Tolerated only if this turns out to be the last line.
            pending_error = origin + ":" + std::to_string(lineno) + ": " + e.what();
        }
    }
    return out;
}

// A crash mid-append can leave a final line without its newline; cut it off
// so the next append starts on a fresh line.
void drop_torn_tail(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return;
    std::ifstream in(path, std::ios::binary);
    const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.empty() || content.back() == '\n') return;
    const auto last_newline = content.rfind('\n');
    const std::uintmax_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
    in.close();
    std::filesystem::resize_file(path, keep);
}

} // namespace

std::string encode_event(const event_record& e) {
    json j;
    j["seq"] = e.seq;
    j["session_id"] = e.session_id;
    j["ts"] = e.ts;
    j["kind"] = e.kind;
    j["payload"] = e.payload;
    return j.dump();
}

event_record decode_event(std::string_view line) {
    const json j = json::parse(line);
    event_record e;
    e.seq = j.at("seq").get<std::int64_t>();
    e.session_id = j.at("session_id").get<std::string>();
    e.ts = j.at("ts").get<std::int64_t>();
    e.kind = j.at("kind").get<std::string>();
    e.payload = j.at("payload");
    return e;
}

std::vector<event_record> start_events(const engine::session_state& s, std::string_view script_id) {
    std::vector<event_record> out;
    out.push_back(make(event_kind::started, s.session_id, s.started_at,
                       json{{"script_id", script_id},
                            {"script_name", s.script_name},
                            {"script_version", s.script_version},
                            {"anon_ref", s.anon_ref}}));
    // The start node is the first transcript node, or the current node.
    std::string first = s.transcript.empty() ? s.current.value_or("") : s.transcript.front().node;
    out.push_back(make(event_kind::prompted, s.session_id, s.started_at, json{{"node_id", first}}));
    return out;
}

std::vector<event_record> entry_events(const engine::transcript_entry& entry,
                                       const engine::session_state& s) {
    using engine::entry_kind;
    std::vector<event_record> out;
    switch (entry.kind) {
        case entry_kind::answered:
            out.push_back(make(event_kind::answered, s.session_id, entry.ts,
                               json{{"node_id", entry.node},
                                    {"prompt", entry.prompt},
                                    {"utterance", entry.utterance},
                                    {"answer", answer_to_json(entry.answer.value())},
                                    {"next", entry.next}}));
            if (entry.next == script::end_target) {
                out.push_back(make(event_kind::completed, s.session_id, entry.ts,
                                   json{{"duration_ms", entry.ts - s.started_at}}));
            } else {
                out.push_back(
                    make(event_kind::prompted, s.session_id, entry.ts, json{{"node_id", entry.next}}));
            }
            break;
        case entry_kind::rejected:
            out.push_back(make(event_kind::rejected, s.session_id, entry.ts,
                               json{{"node_id", entry.node},
                                    {"prompt", entry.prompt},
                                    {"utterance", entry.utterance},
                                    {"reason", entry.reason}}));
            out.push_back(
                make(event_kind::prompted, s.session_id, entry.ts, json{{"node_id", entry.node}}));
            break;
        case entry_kind::interrupted:
            out.push_back(make(event_kind::interrupted, s.session_id, entry.ts,
                               json{{"node_id", entry.node},
                                    {"prompt", entry.prompt},
                                    {"utterance", entry.utterance},
                                    {"rule", entry.intercept},
                                    {"keyword", entry.keyword}}));
            out.push_back(
                make(event_kind::prompted, s.session_id, entry.ts, json{{"node_id", entry.node}}));
            break;
        case entry_kind::help:
            out.push_back(make(event_kind::help, s.session_id, entry.ts,
                               json{{"node_id", entry.node}, {"prompt", entry.prompt}}));
            break;
    }
    return out;
}

std::vector<event_record> session_events(const engine::session_state& s, std::string_view script_id) {
    auto out = start_events(s, script_id);
    for (const auto& entry : s.transcript) {
        auto more = entry_events(entry, s);
        out.insert(out.end(), more.begin(), more.end());
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].seq = static_cast<std::int64_t>(i + 1);
    return out;
}

started_info read_started(const event_record& e) {
    if (e.kind != event_kind::started) throw mica_error("BadEvent", "expected a started event");
    started_info info;
    info.seed.session_id = e.session_id;
    info.seed.anon_ref = e.payload.at("anon_ref").get<std::string>();
    info.seed.started_at = e.ts;
    info.script_id = e.payload.at("script_id").get<std::string>();
    return info;
}

std::vector<engine::transcript_entry> transcript_from_events(const std::vector<event_record>& events) {
    using engine::entry_kind;
    std::vector<engine::transcript_entry> out;
    for (const auto& e : events) {
        engine::transcript_entry t;
        t.ts = e.ts;
        if (e.kind == event_kind::answered) {
            t.kind = entry_kind::answered;
            t.utterance = e.payload.at("utterance").get<std::string>();
            t.answer = answer_from_json(e.payload.at("answer"));
            t.next = e.payload.at("next").get<std::string>();
        } else if (e.kind == event_kind::rejected) {
            t.kind = entry_kind::rejected;
            t.utterance = e.payload.at("utterance").get<std::string>();
            t.reason = e.payload.at("reason").get<std::string>();
        } else if (e.kind == event_kind::interrupted) {
            t.kind = entry_kind::interrupted;
            t.utterance = e.payload.at("utterance").get<std::string>();
            t.intercept = e.payload.at("rule").get<std::string>();
            t.keyword = e.payload.at("keyword").get<std::string>();
        } else if (e.kind == event_kind::help) {
            t.kind = entry_kind::help;
        } else {
            continue;
        }
        t.node = e.payload.at("node_id").get<std::string>();
        t.prompt = e.payload.at("prompt").get<std::string>();
        out.push_back(std::move(t));
    }
    return out;
}

// =============================================================================
// event_store
// =============================================================================

event_store::event_store(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    drop_torn_tail(path_);
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) {
        throw mica_error("StoreUnavailable",
                         "cannot open " + path_.string() + ": " + std::strerror(errno));
    }
}

event_store::~event_store() {
    if (file_) std::fclose(file_);
}

std::vector<event_record> event_store::load() const {
    return read_event_file(path_);
}

void event_store::append(const std::vector<event_record>& events) {
    std::string buf;
    for (const auto& e : events) {
        buf += encode_event(e);
        buf += '\n';
    }
    std::lock_guard lock(mutex_);
    if (std::fwrite(buf.data(), 1, buf.size(), file_) != buf.size() || std::fflush(file_) != 0 ||
        ::fsync(::fileno(file_)) != 0) {
        throw mica_error("StoreWriteFailed", "append to " + path_.string() + " failed");
    }
}

std::vector<event_record> read_event_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    return parse_lines(in, path.string());
}

} // namespace mica::service
