// mica command-line tool. Links only the C API in mica.h.

#include "mica/mica.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <pthread.h>
#include <sstream>
#include <string>
#include <thread>

namespace {

// Exit codes: 0 ok, 1 rejected input (invalid script, divergent replay),
// 2 usage or I/O error, 3 interview abandoned.
constexpr int exit_rejected = 1;
constexpr int exit_error = 2;
constexpr int exit_quit = 3;

struct c_string {
    char* p = nullptr;
    ~c_string() { mica_string_free(p); }
    [[nodiscard]] std::string str() const { return p ? p : ""; }
};

struct script_handle {
    mica_script* p = nullptr;
    ~script_handle() { mica_script_free(p); }
};

struct session_handle {
    mica_session* p = nullptr;
    ~session_handle() { mica_session_free(p); }
};

int report(mica_status st) {
    std::cerr << "mica: " << mica_status_name(st) << ": [" << mica_last_error_code() << "] "
              << mica_last_error() << "\n";
    return st == MICA_E_INVALID_SCRIPT || st == MICA_E_SYNTAX || st == MICA_E_REPLAY ? exit_rejected
                                                                                       : exit_error;
}

std::optional<std::string> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "mica: cannot read " << path << "\n";
        return std::nullopt;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        std::cerr << "mica: cannot write " << path << "\n";
        return false;
    }
    return true;
}

std::string read_secret(const std::string& path) {
    auto text = slurp(path).value_or("");
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
}

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void print_prompt(const nlohmann::json& p) {
    std::cout << "\n" << p.value("text", "") << "\n";
    if (p.contains("options")) {
        std::cout << "  [";
        bool first = true;
        for (const auto& o : p["options"]) {
            std::cout << (first ? "" : " / ") << o.get<std::string>();
            first = false;
        }
        std::cout << "]\n";
    }
    if (p.contains("help")) std::cout << "  (" << p["help"].get<std::string>() << ")\n";
    std::cout << "> " << std::flush;
}

// ------------------------------------------------------------------ commands

int cmd_validate(const std::string& path, bool as_json) {
    const auto text = slurp(path);
    if (!text) return exit_error;
    c_string out;
    int accepted = 0;
    if (const auto st = mica_validate_text(text->data(), text->size(), &out.p, &accepted); st != MICA_OK) {
        return report(st);
    }
    if (as_json) {
        std::cout << out.str();
    } else {
        const auto j = nlohmann::json::parse(out.str());
        for (const auto& e : j["errors"]) {
            std::cout << "error " << e["code"].get<std::string>() << " at " << e["location"].get<std::string>()
                      << ": " << e["message"].get<std::string>() << "\n";
        }
        for (const auto& w : j["warnings"]) {
            std::cout << "warning " << w["code"].get<std::string>() << " at " << w["location"].get<std::string>()
                      << ": " << w["message"].get<std::string>() << "\n";
        }
        std::cout << path << ": " << (accepted ? "accepted" : "rejected") << "\n";
    }
    return accepted ? 0 : exit_rejected;
}

struct run_options {
    std::string script;
    std::string patient;
    std::string secret_file;
    std::string transcript;
    bool json_summary = false;
};

int cmd_run(const run_options& o) {
    script_handle script;
    if (const auto st = mica_script_load_file(o.script.c_str(), &script.p); st != MICA_OK) return report(st);

    std::string secret;
    if (!o.patient.empty()) {
        if (o.secret_file.empty()) {
            std::cerr << "mica: --patient needs --secret-file\n";
            return exit_error;
        }
        secret = read_secret(o.secret_file);
    }

    session_handle session;
    c_string first;
    if (const auto st = mica_session_start(script.p, "local", o.patient.empty() ? nullptr : o.patient.c_str(),
                                           o.patient.empty() ? nullptr : secret.c_str(), now_ms(), &session.p,
                                           &first.p);
        st != MICA_OK) {
        return report(st);
    }
    std::cout << "Type :help for an explanation of the question, :quit to stop.\n";
    print_prompt(nlohmann::json::parse(first.str()));

    auto save_transcript = [&] {
        if (o.transcript.empty()) return true;
        c_string events;
        if (mica_session_events(session.p, &events.p) != MICA_OK) return false;
        return write_text(o.transcript, events.str());
    };

    std::string line;
    while (!mica_session_complete(session.p)) {
        if (!std::getline(std::cin, line) || line == ":quit") {
            save_transcript();
            std::cout << "\ninterview stopped before completion\n";
            return exit_quit;
        }
        if (line == ":help") {
            c_string help;
            if (const auto st = mica_session_help(session.p, now_ms(), &help.p); st != MICA_OK) return report(st);
            std::cout << help.str() << "\n> " << std::flush;
            continue;
        }
        c_string step;
        if (const auto st = mica_session_submit(session.p, line.c_str(), now_ms(), &step.p); st != MICA_OK) {
            return report(st);
        }
        const auto j = nlohmann::json::parse(step.str());
        if (j.value("state", "") == "rejected") std::cout << "That answer was not understood.\n";
        if (j.contains("interruption")) std::cout << "Noted, the doctor will see it. Back to the question.\n";
        if (j.contains("warning")) std::cout << "(several answers were not understood; the doctor will review)\n";
        if (j.contains("prompt")) print_prompt(j["prompt"]);
    }
    if (!save_transcript()) return exit_error;

    c_string summary;
    if (const auto st = mica_session_summary(session.p, o.json_summary ? MICA_FORMAT_JSON : MICA_FORMAT_TEXT,
                                             &summary.p);
        st != MICA_OK) {
        return report(st);
    }
    std::cout << "\n" << summary.str();
    return 0;
}

int cmd_replay(const std::string& script_path, const std::string& events_path, bool json_summary) {
    script_handle script;
    if (const auto st = mica_script_load_file(script_path.c_str(), &script.p); st != MICA_OK) return report(st);
    const auto events = slurp(events_path);
    if (!events) return exit_error;
    session_handle session;
    if (const auto st = mica_session_replay(script.p, events->c_str(), &session.p); st != MICA_OK) {
        return report(st);
    }
    if (!mica_session_complete(session.p)) {
        std::cout << "replay consistent; session incomplete\n";
        return 0;
    }
    c_string summary;
    if (const auto st = mica_session_summary(session.p, json_summary ? MICA_FORMAT_JSON : MICA_FORMAT_TEXT,
                                             &summary.p);
        st != MICA_OK) {
        return report(st);
    }
    std::cout << summary.str();
    return 0;
}

/// Standard output when `path` is empty, else the file.
int emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return 0;
    }
    return write_text(path, text) ? 0 : exit_error;
}

struct simulate_options {
    std::string script;
    std::string personas;
    std::uint32_t n = 100;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    bool json = false;
    std::string out;
};

int cmd_simulate(const simulate_options& o) {
    script_handle script;
    if (const auto st = mica_script_load_file(o.script.c_str(), &script.p); st != MICA_OK) return report(st);
    const auto spec = slurp(o.personas);
    if (!spec) return exit_error;
    c_string out;
    if (const auto st = mica_simulate(script.p, spec->c_str(), o.n, o.seed, o.threads,
                                      o.json ? MICA_FORMAT_JSON : MICA_FORMAT_TEXT, &out.p);
        st != MICA_OK) {
        return report(st);
    }
    return emit(out.str(), o.out);
}

struct serve_options {
    std::string scripts;
    std::string store;
    std::string secret_file;
    std::string host = "127.0.0.1";
    int port = 8080;
};

int cmd_serve(const serve_options& o) {
    // Block termination signals in every thread; a dedicated thread waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const auto secret = read_secret(o.secret_file);
    mica_service* svc = nullptr;
    if (const auto st = mica_service_create(o.scripts.c_str(), o.store.c_str(), secret.c_str(), &svc);
        st != MICA_OK) {
        return report(st);
    }
    std::unique_ptr<mica_service, void (*)(mica_service*)> guard(svc, mica_service_free);

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        mica_service_stop(svc);
    });
    std::cerr << "mica: serving on " << o.host << ":" << o.port << "\n";
    const auto st = mica_service_listen(svc, o.host.c_str(), o.port);
    if (st != MICA_OK) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
        return report(st);
    }
    waiter.join();
    return 0;
}

int cmd_trial_assign(const std::string& roster_path, std::uint64_t seed, const std::string& out_path) {
    const auto roster = slurp(roster_path);
    if (!roster) return exit_error;
    c_string out;
    if (const auto st = mica_trial_assign(roster->c_str(), seed, &out.p); st != MICA_OK) return report(st);
    return emit(out.str(), out_path);
}

struct report_options {
    std::string assignment;
    std::string surveys;
    std::string durations;
    std::string bands;
    std::string trim;
    bool json = false;
    std::string out;
};

int cmd_trial_report(const report_options& o) {
    const auto assignment = slurp(o.assignment);
    if (!assignment) return exit_error;
    std::optional<std::string> surveys, durations;
    if (!o.surveys.empty() && !(surveys = slurp(o.surveys))) return exit_error;
    if (!o.durations.empty() && !(durations = slurp(o.durations))) return exit_error;
    c_string out;
    if (const auto st = mica_trial_report(assignment->c_str(), surveys ? surveys->c_str() : nullptr,
                                          durations ? durations->c_str() : nullptr,
                                          o.bands.empty() ? nullptr : o.bands.c_str(),
                                          o.trim.empty() ? nullptr : o.trim.c_str(),
                                          o.json ? MICA_FORMAT_JSON : MICA_FORMAT_TEXT, &out.p);
        st != MICA_OK) {
        return report(st);
    }
    return emit(out.str(), o.out);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pre-consultation interview scripts, sessions and study tooling"};
    app.set_version_flag("--version", mica_version());
    app.require_subcommand(1);

    std::string validate_path;
    bool validate_json = false;
    auto* validate = app.add_subcommand("validate", "Check a script and list diagnostics");
    validate->add_option("script", validate_path, "Script file (.mica)")->required();
    validate->add_flag("--json", validate_json, "Print the report as JSON");

    run_options run_opts;
    auto* run = app.add_subcommand("run", "Conduct an interview on the terminal");
    run->add_option("script", run_opts.script, "Script file (.mica)")->required();
    run->add_option("--patient", run_opts.patient, "Patient identifier to anonymize");
    run->add_option("--secret-file", run_opts.secret_file, "File holding the anonymization key");
    run->add_option("--transcript", run_opts.transcript, "Write the session events (JSONL) here");
    run->add_flag("--json", run_opts.json_summary, "Print the summary as JSON");

    std::string replay_script, replay_events;
    bool replay_json = false;
    auto* replay = app.add_subcommand("replay", "Re-run a recorded transcript and print its summary");
    replay->add_option("script", replay_script, "Script file (.mica)")->required();
    replay->add_option("events", replay_events, "Transcript or event log (JSONL)")->required();
    replay->add_flag("--json", replay_json, "Print the summary as JSON");

    simulate_options sim_opts;
    auto* simulate = app.add_subcommand("simulate", "Run seeded personas through a script");
    simulate->add_option("script", sim_opts.script, "Script file (.mica)")->required();
    simulate->add_option("--personas", sim_opts.personas, "Persona specification (JSON)")->required();
    simulate->add_option("-n,--n,--count", sim_opts.n, "Number of personas")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim_opts.seed, "Random seed");
    simulate->add_option("--threads", sim_opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    simulate->add_flag("--json", sim_opts.json, "Print the report as JSON");
    simulate->add_option("--out", sim_opts.out, "Write the report here");

    serve_options serve_opts;
    auto* serve = app.add_subcommand("serve", "Host sessions over HTTP");
    serve->add_option("--scripts", serve_opts.scripts, "Directory of .mica scripts")->required();
    serve->add_option("--store", serve_opts.store, "Event store file (JSONL)")->required();
    serve->add_option("--secret-file", serve_opts.secret_file, "File holding the anonymization key")->required();
    serve->add_option("--host", serve_opts.host, "Listen address");
    serve->add_option("--port", serve_opts.port, "Listen port")->check(CLI::Range(1, 65535));

    auto* trial = app.add_subcommand("trial", "Study tooling");
    trial->require_subcommand(1);

    std::string roster_path, assign_out;
    std::uint64_t assign_seed = 0;
    auto* assign = trial->add_subcommand("assign", "Split a roster into P_Mica and P_Direct");
    assign->add_option("--roster", roster_path, "One participant id per line")->required();
    assign->add_option("--seed", assign_seed, "Random seed")->required();
    assign->add_option("-o,--out,--output", assign_out, "Write the assignment here");

    report_options rep_opts;
    auto* rep = trial->add_subcommand("report", "Durations and satisfaction per group");
    rep->add_option("--assignment", rep_opts.assignment, "Output of 'trial assign'")->required();
    rep->add_option("--surveys", rep_opts.surveys, "Event log or survey lines (JSONL)");
    rep->add_option("--durations", rep_opts.durations, "id,milliseconds lines");
    rep->add_option("--bands", rep_opts.bands, "Patient age bands, e.g. '<44,44..56,>56'");
    rep->add_option("--trim", rep_opts.trim, "Outlier rule: NUMx (default 3x), cap:MS or none");
    rep->add_flag("--json", rep_opts.json, "Print the report as JSON");
    rep->add_option("--out", rep_opts.out, "Write the report here");

    CLI11_PARSE(app, argc, argv);

    if (*validate) return cmd_validate(validate_path, validate_json);
    if (*run) return cmd_run(run_opts);
    if (*replay) return cmd_replay(replay_script, replay_events, replay_json);
    if (*simulate) return cmd_simulate(sim_opts);
    if (*serve) return cmd_serve(serve_opts);
    if (*assign) return cmd_trial_assign(roster_path, assign_seed, assign_out);
    if (*rep) return cmd_trial_report(rep_opts);
    return exit_error;
}
