/**
 * @file summary.cpp
 * @brief Summary assembly, plain/structured rendering and prescription drafts
 */

#include "mica/summary.hpp"

#include "mica/error.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>

namespace mica::summary {

using ordered_json = nlohmann::ordered_json;

// =============================================================================
// Assembly
// =============================================================================

doctor_summary generate_summary(const script::dialog_script& script,
                                const engine::session_state& session,
                                const clinical::assessment& clinical) {
    if (!session.complete()) {
        throw mica_error("SessionIncomplete", "the interview has not reached its end");
    }
    doctor_summary s;
    s.anon_ref = session.anon_ref;
    s.script_name = script.name;
    s.script_version = script.version;
    s.red_flags = clinical.flags;
    s.profile = clinical.profile;
    s.motivation = clinical.motivation_result;
    s.scores = clinical.scores;
    s.risk = clinical.risk;
    s.motifs = clinical.motifs;
    s.interview_duration_ms = session.last_event_at - session.started_at;
    s.generated_at = session.last_event_at;

    for (const auto& sec : script.sections) {
        section_answers block;
        block.section = sec.id;
        for (const auto& entry : session.transcript) {
            if (entry.kind != engine::entry_kind::answered || !entry.answer) continue;
            const auto* node = script.find_question(entry.node);
            if (!node || node->section != sec.id) continue;
            block.answers.push_back({entry.node, entry.prompt, script::format_answer(*entry.answer)});
        }
        if (!block.answers.empty()) s.answers_by_section.push_back(std::move(block));
    }
    return s;
}

// =============================================================================
// Rendering
// =============================================================================

namespace {

std::string render_plain(const doctor_summary& s) {
    std::ostringstream out;
    out << "== RED FLAGS ==\n";
    if (s.red_flags.empty()) out << "no red flags\n";
    for (const auto& f : s.red_flags) out << "! " << f.id << ": " << f.triggered_by << '\n';

    out << "== PROFILE ==\n" << s.profile << '\n';

    out << "== MOTIVATION ==\n";
    if (s.motivation) {
        out << script::to_string(s.motivation->level) << " (from score "
            << s.motivation->source_score_id << ")\n";
    } else {
        out << "not assessed\n";
    }

    out << "== SCORES ==\n";
    if (s.scores.empty()) out << "none\n";
    for (const auto& sc : s.scores) out << sc.score_id << ": " << sc.total << " (" << sc.band << ")\n";

    out << "== RISK FACTORS ==\n";
    out << "count: " << s.risk.count << '\n';
    out << "contributing:";
    if (s.risk.contributing.empty()) out << " none";
    for (const auto& k : s.risk.contributing) out << ' ' << k;
    out << '\n';
    out << "age/sex: " << s.risk.age_sex_contribution << '\n';

    out << "== COMPLAINTS ==\n";
    if (s.motifs.empty()) out << "none\n";
    for (const auto& m : s.motifs) {
        out << "- [" << m.category << "] " << m.text;
        if (m.count > 1) out << " (x" << m.count << ")";
        out << '\n';
    }

    out << "== ANSWERS ==\n";
    for (const auto& block : s.answers_by_section) {
        out << "[" << block.section << "]\n";
        for (const auto& a : block.answers) out << "  " << a.prompt << " -> " << a.answer << '\n';
    }

    out << "== TIMING ==\n";
    out << "interview duration: " << s.interview_duration_ms << " ms\n";
    out << "patient ref: " << s.anon_ref << '\n';
    out << "script: " << s.script_name << " v" << s.script_version << '\n';
    out << "generated at: " << s.generated_at << '\n';
    return out.str();
}

ordered_json to_json(const doctor_summary& s) {
    ordered_json j;
    j["red_flags"] = ordered_json::array();
    for (const auto& f : s.red_flags) {
        j["red_flags"].push_back({{"id", f.id}, {"triggered_by", f.triggered_by}});
    }
    j["anon_ref"] = s.anon_ref;
    j["script"] = {{"name", s.script_name}, {"version", s.script_version}};
    j["profile"] = s.profile;
    if (s.motivation) {
        j["motivation"] = {{"level", script::to_string(s.motivation->level)},
                           {"source_score_id", s.motivation->source_score_id}};
    } else {
        j["motivation"] = nullptr;
    }
    j["scores"] = ordered_json::array();
    for (const auto& sc : s.scores) {
        j["scores"].push_back({{"id", sc.score_id}, {"total", sc.total}, {"band", sc.band}});
    }
    j["risk"] = {{"count", s.risk.count},
                 {"contributing", s.risk.contributing},
                 {"age_sex_contribution", s.risk.age_sex_contribution}};
    j["motifs"] = ordered_json::array();
    for (const auto& m : s.motifs) {
        j["motifs"].push_back(
            {{"category", m.category}, {"text", m.text}, {"source", m.source}, {"count", m.count}});
    }
    j["answers"] = ordered_json::array();
    for (const auto& block : s.answers_by_section) {
        for (const auto& a : block.answers) {
            j["answers"].push_back({{"section", block.section},
                                    {"node_id", a.node_id},
                                    {"prompt", a.prompt},
                                    {"answer", a.answer}});
        }
    }
    j["interview_duration_ms"] = s.interview_duration_ms;
    j["generated_at"] = s.generated_at;
    return j;
}

} // namespace

std::string render_summary(const doctor_summary& summary, summary_format format) {
    if (format == summary_format::plain) return render_plain(summary);
    return to_json(summary).dump(2) + "\n";
}

doctor_summary parse_structured_summary(std::string_view json_text) {
    const auto j = ordered_json::parse(json_text);
    doctor_summary s;
    for (const auto& f : j.at("red_flags")) {
        s.red_flags.push_back({f.at("id").get<std::string>(), f.at("triggered_by").get<std::string>()});
    }
    s.anon_ref = j.at("anon_ref").get<std::string>();
    s.script_name = j.at("script").at("name").get<std::string>();
    s.script_version = j.at("script").at("version").get<std::int64_t>();
    s.profile = j.at("profile").get<std::string>();
    if (!j.at("motivation").is_null()) {
        const auto level = script::parse_motivation_level(j["motivation"].at("level").get<std::string>());
        if (!level) throw mica_error("BadSummary", "unknown motivation level");
        s.motivation = clinical::motivation{*level,
                                            j["motivation"].at("source_score_id").get<std::string>()};
    }
    for (const auto& sc : j.at("scores")) {
        s.scores.push_back({sc.at("id").get<std::string>(), sc.at("total").get<std::int64_t>(),
                            sc.at("band").get<std::string>()});
    }
    s.risk.count = j.at("risk").at("count").get<std::int64_t>();
    s.risk.contributing = j["risk"].at("contributing").get<std::vector<std::string>>();
    s.risk.age_sex_contribution = j["risk"].at("age_sex_contribution").get<int>();
    for (const auto& m : j.at("motifs")) {
        s.motifs.push_back({m.at("category").get<std::string>(), m.at("text").get<std::string>(),
                            m.at("source").get<std::string>(), m.at("count").get<std::int64_t>()});
    }
    for (const auto& a : j.at("answers")) {
        const auto section = a.at("section").get<std::string>();
        if (s.answers_by_section.empty() || s.answers_by_section.back().section != section) {
            s.answers_by_section.push_back({section, {}});
        }
        s.answers_by_section.back().answers.push_back({a.at("node_id").get<std::string>(),
                                                       a.at("prompt").get<std::string>(),
                                                       a.at("answer").get<std::string>()});
    }
    s.interview_duration_ms = j.at("interview_duration_ms").get<std::int64_t>();
    s.generated_at = j.at("generated_at").get<std::int64_t>();
    return s;
}

// =============================================================================
// Prescription drafts
// =============================================================================

namespace {

std::string utc_date(std::int64_t epoch_ms) {
    using namespace std::chrono;
    const auto day = floor<days>(sys_time<milliseconds>(milliseconds(epoch_ms)));
    const year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::optional<std::string> slot_value(const doctor_summary& s, std::string_view slot) {
    if (slot == "anon_ref") return s.anon_ref;
    if (slot == "profile") return s.profile;
    if (slot == "date") return utc_date(s.generated_at);
    if (slot == "motivation") {
        if (!s.motivation) return std::nullopt;
        return std::string(script::to_string(s.motivation->level));
    }
    if (slot == "activity_band") {
        for (const auto& sc : s.scores) {
            if (sc.score_id == "activity") return sc.band;
        }
        if (!s.scores.empty()) return s.scores.front().band;
        return std::nullopt;
    }
    return std::nullopt;
}

bool is_slot_name(std::string_view s) {
    if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
    for (char c : s) {
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
    }
    return true;
}

} // namespace

prescription_draft prepare_prescription(const doctor_summary& summary, std::string_view tmpl,
                                        std::string template_id) {
    prescription_draft d;
    d.anon_ref = summary.anon_ref;
    d.template_id = std::move(template_id);
    std::set<std::string> missing_seen;

    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find('{', pos);
        if (open == std::string_view::npos) {
            d.text.append(tmpl.substr(pos));
            break;
        }
        const std::size_t close = tmpl.find('}', open + 1);
        const std::string_view name =
            close == std::string_view::npos ? std::string_view{} : tmpl.substr(open + 1, close - open - 1);
        if (!is_slot_name(name)) {
            d.text.append(tmpl.substr(pos, open + 1 - pos));
            pos = open + 1;
            continue;
        }
        d.text.append(tmpl.substr(pos, open - pos));
        if (const auto value = slot_value(summary, name)) {
            d.text += *value;
            d.filled[std::string(name)] = *value;
        } else {
            d.text.append(tmpl.substr(open, close - open + 1));
            if (missing_seen.insert(std::string(name)).second) d.missing.emplace_back(name);
        }
        pos = close + 1;
    }
    d.complete = d.missing.empty();
    return d;
}

} // namespace mica::summary
