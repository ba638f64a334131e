/**
 * @file stats.cpp
 * @brief Duration statistics, survey aggregation and the trial report
 */

#include "mica/trial.hpp"

#include "mica/error.hpp"
#include "mica/service.hpp"
#include "text_util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

namespace mica::trial {

namespace {

using ojson = nlohmann::ordered_json;

std::optional<std::int64_t> parse_int(std::string_view s) {
    s = detail::trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        out.push_back(text.substr(pos, end - pos));
        pos = end + 1;
    }
    return out;
}

const std::vector<std::string>* dimensions_for(std::string_view role) {
    if (role == "doctor") return &service::survey_dimensions::doctor;
    if (role == "patient") return &service::survey_dimensions::patient;
    return nullptr;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

// =============================================================================
// Durations
// =============================================================================

std::string trim_rule::describe() const {
    switch (kind) {
        case type::median_multiple: return "drop > " + std::to_string(factor) + " x median";
        case type::absolute_cap: return "drop > " + std::to_string(cap_ms) + " ms";
        case type::none: return "none";
    }
    return "none";
}

duration_stats compute_duration_stats(std::span<const std::int64_t> durations, const trim_rule& rule) {
    if (durations.empty()) throw mica_error("EmptyInput", "no durations");
    for (const auto d : durations) {
        if (d < 0) throw mica_error("NegativeDuration", "duration " + std::to_string(d) + " is negative");
    }

    std::vector<std::int64_t> sorted(durations.begin(), durations.end());
    std::sort(sorted.begin(), sorted.end());

    // keep(v) is evaluated on integers; for an even count the median is
    // (a + b) / 2, so v > factor * median becomes 2v > factor * (a + b).
    auto keep = [&](std::int64_t v) {
        switch (rule.kind) {
            case trim_rule::type::median_multiple: {
                const std::size_t n = sorted.size();
                const std::int64_t twice_median =
                    n % 2 == 1 ? 2 * sorted[n / 2] : sorted[n / 2 - 1] + sorted[n / 2];
                return 2 * v <= rule.factor * twice_median;
            }
            case trim_rule::type::absolute_cap: return v <= rule.cap_ms;
            case trim_rule::type::none: return true;
        }
        return true;
    };

    duration_stats s;
    s.trim_rule = rule.describe();
    std::int64_t sum = 0;
    bool first = true;
    for (const auto v : sorted) {
        if (!keep(v)) {
            ++s.n_trimmed;
            continue;
        }
        ++s.n_used;
        sum += v;
        if (first) s.min_ms = v;
        s.max_ms = v;
        first = false;
    }
    if (s.n_used == 0) throw mica_error("EmptyInput", "every duration was trimmed");
    s.mean_ms = static_cast<double>(sum) / static_cast<double>(s.n_used);
    return s;
}

std::vector<std::pair<std::string, std::int64_t>> parse_durations(std::string_view text) {
    std::vector<std::pair<std::string, std::int64_t>> out;
    std::size_t lineno = 0;
    for (const auto raw : split_lines(text)) {
        ++lineno;
        const auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto comma = line.find(',');
        const auto value = comma == std::string_view::npos ? std::nullopt : parse_int(line.substr(comma + 1));
        if (!value) {
            throw mica_error("BadDurations", "line " + std::to_string(lineno) + ": expected id,milliseconds");
        }
        out.emplace_back(std::string(detail::trim(line.substr(0, comma))), *value);
    }
    return out;
}

// =============================================================================
// Age bands
// =============================================================================

std::vector<age_band> parse_age_bands(std::string_view spec) {
    std::vector<age_band> out;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        auto end = spec.find(',', pos);
        if (end == std::string_view::npos) end = spec.size();
        const auto item = detail::trim(spec.substr(pos, end - pos));
        pos = end + 1;
        age_band b;
        b.name = std::string(item);
        std::optional<std::int64_t> n;
        if (item.starts_with("<") && (n = parse_int(item.substr(1)))) {
            b.hi = *n - 1;
        } else if (item.starts_with(">") && (n = parse_int(item.substr(1)))) {
            b.lo = *n + 1;
        } else if (const auto dots = item.find(".."); dots != std::string_view::npos) {
            b.lo = parse_int(item.substr(0, dots));
            b.hi = parse_int(item.substr(dots + 2));
            if (!b.lo || !b.hi || *b.lo > *b.hi) {
                throw mica_error("MalformedBands", "bad band '" + b.name + "'");
            }
        } else {
            throw mica_error("MalformedBands", "bad band '" + b.name + "'");
        }
        out.push_back(std::move(b));
    }
    check_age_bands(out);
    return out;
}

std::vector<age_band> default_age_bands() {
    return parse_age_bands("<44,44..56,>56");
}

void check_age_bands(const std::vector<age_band>& bands) {
    if (bands.empty()) throw mica_error("MalformedBands", "no bands");
    std::vector<const age_band*> order;
    for (const auto& b : bands) order.push_back(&b);
    std::sort(order.begin(), order.end(), [](const age_band* x, const age_band* y) {
        if (!x->lo) return y->lo.has_value();
        if (!y->lo) return false;
        return *x->lo < *y->lo;
    });
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto& a = *order[i];
        const auto& b = *order[i + 1];
        if (!a.hi || !b.lo || *b.lo <= *a.hi) {
            throw mica_error("MalformedBands", "bands '" + a.name + "' and '" + b.name + "' overlap");
        }
        if (*b.lo != *a.hi + 1) {
            throw mica_error("MalformedBands", "gap between '" + a.name + "' and '" + b.name + "'");
        }
    }
}

// =============================================================================
// Surveys
// =============================================================================

bool survey_is_valid(const survey_response& r) {
    const auto* dims = dimensions_for(r.role);
    if (!dims || r.scores.size() != dims->size()) return false;
    for (const auto& d : *dims) {
        const auto it = r.scores.find(d);
        if (it == r.scores.end() || it->second < 1 || it->second > 9) return false;
    }
    return true;
}

void dimension_stats::add(std::int64_t v) {
    if (count == 0 || v < min) min = v;
    if (count == 0 || v > max) max = v;
    ++count;
    sum += v;
}

survey_batch read_surveys(std::string_view text) {
    std::map<std::string, std::string> anon_refs;
    std::vector<survey_response> raw;
    std::vector<bool> raw_valid;
    std::size_t lineno = 0;

    for (const auto line : split_lines(text)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw mica_error("BadSurveyFile", "line " + std::to_string(lineno) + ": " + e.what());
        }
        const nlohmann::json* body = &j;
        std::string session;
        if (j.contains("kind")) {
            const auto kind = j.value("kind", std::string{});
            session = j.value("session_id", std::string{});
            if (kind == "started") {
                anon_refs[session] = j.at("payload").value("anon_ref", std::string{});
                continue;
            }
            if (kind != "survey") continue;
            body = &j.at("payload");
        } else {
            session = j.value("session_id", std::string{});
        }

        survey_response r;
        bool ok = !session.empty() && body->contains("role") && body->at("role").is_string() &&
                  body->contains("scores") && body->at("scores").is_object();
        r.participant = session;
        if (ok) {
            r.role = body->at("role").get<std::string>();
            for (const auto& [k, v] : body->at("scores").items()) {
                if (!v.is_number_integer()) {
                    ok = false;
                    break;
                }
                r.scores[k] = v.get<std::int64_t>();
            }
            if (const auto age = body->find("respondent_age"); age != body->end() && !age->is_null()) {
                if (age->is_number_integer()) {
                    r.respondent_age = age->get<std::int64_t>();
                } else {
                    ok = false;
                }
            }
        }
        raw.push_back(std::move(r));
        raw_valid.push_back(ok && survey_is_valid(raw.back()));
    }

    // Latest submission per (participant, role) wins, valid or not.
    std::map<std::pair<std::string, std::string>, std::size_t> latest;
    for (std::size_t i = 0; i < raw.size(); ++i) latest[{raw[i].participant, raw[i].role}] = i;

    survey_batch batch;
    std::set<std::size_t> live;
    for (const auto& [key, i] : latest) live.insert(i);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!live.contains(i)) continue;
        if (!raw_valid[i]) {
            ++batch.invalid;
            continue;
        }
        auto r = raw[i];
        if (const auto it = anon_refs.find(r.participant); it != anon_refs.end()) r.anon_ref = it->second;
        batch.responses.push_back(std::move(r));
    }
    return batch;
}

satisfaction_report aggregate_surveys(const std::vector<survey_response>& responses,
                                      const assignment& groups, const std::vector<age_band>& bands) {
    check_age_bands(bands);
    satisfaction_report rep;
    for (const auto& r : responses) {
        auto it = groups.groups.find(r.participant);
        if (it == groups.groups.end() && !r.anon_ref.empty()) it = groups.groups.find(r.anon_ref);
        if (it == groups.groups.end()) {
            throw mica_error("UnassignedSession", "'" + r.participant + "' is not in the assignment");
        }
        if (!survey_is_valid(r)) continue;
        ++rep.valid_responses;
        auto& table = rep.by_group[std::string(to_string(it->second))][r.role];
        for (const auto& [dim, v] : r.scores) table[dim].add(v);

        if (r.role != "patient") continue;
        const age_band* band = nullptr;
        if (r.respondent_age) {
            for (const auto& b : bands) {
                if (b.contains(*r.respondent_age)) band = &b;
            }
        }
        if (!band) {
            ++rep.unbanded_patient_responses;
            continue;
        }
        for (const auto& [dim, v] : r.scores) rep.by_age_band[band->name][dim].add(v);
    }

    const auto mica = rep.by_group.find("P_Mica");
    const auto direct = rep.by_group.find("P_Direct");
    if (mica != rep.by_group.end() && direct != rep.by_group.end()) {
        for (const auto& [role, dims] : mica->second) {
            const auto other = direct->second.find(role);
            if (other == direct->second.end()) continue;
            for (const auto& [dim, st] : dims) {
                const auto o = other->second.find(dim);
                if (o == other->second.end()) continue;
                rep.mica_minus_direct[role][dim] = st.mean() - o->second.mean();
            }
        }
    }
    return rep;
}

// =============================================================================
// Report
// =============================================================================

trial_report build_trial_report(const survey_batch& surveys, const assignment& groups,
                                const std::vector<std::pair<std::string, std::int64_t>>& durations,
                                const std::vector<age_band>& bands, const trim_rule& rule) {
    trial_report rep;
    rep.invalid_surveys = surveys.invalid;
    rep.satisfaction = aggregate_surveys(surveys.responses, groups, bands);

    std::map<std::string, std::vector<std::int64_t>> per_group;
    for (const auto& [id, ms] : durations) {
        const auto it = groups.groups.find(id);
        if (it == groups.groups.end()) {
            throw mica_error("UnassignedSession", "'" + id + "' is not in the assignment");
        }
        per_group[std::string(to_string(it->second))].push_back(ms);
    }
    for (const auto& [g, values] : per_group) rep.durations[g] = compute_duration_stats(values, rule);

    const auto mica = rep.durations.find("P_Mica");
    const auto direct = rep.durations.find("P_Direct");
    if (mica != rep.durations.end() && direct != rep.durations.end()) {
        rep.duration_reduction_ms = direct->second.mean_ms - mica->second.mean_ms;
    }
    return rep;
}

std::string render_trial_report_text(const trial_report& r) {
    std::ostringstream out;
    out << "== INTERVIEW DURATION ==\n";
    if (r.durations.empty()) out << "no durations\n";
    for (const auto& [g, s] : r.durations) {
        out << g << ": n=" << s.n_used << " trimmed=" << s.n_trimmed << " mean=" << fixed(s.mean_ms / 60000.0, 2)
            << " min (" << fixed(s.mean_ms, 1) << " ms) range=" << s.min_ms << ".." << s.max_ms
            << " ms trim=" << s.trim_rule << "\n";
    }
    if (r.duration_reduction_ms) {
        out << "reduction (P_Direct - P_Mica): " << fixed(*r.duration_reduction_ms / 60000.0, 2) << " min\n";
    }

    const auto& sat = r.satisfaction;
    out << "\n== SATISFACTION ==\n";
    out << "valid responses: " << sat.valid_responses << ", invalid: " << r.invalid_surveys << "\n";
    for (const auto& [g, roles] : sat.by_group) {
        for (const auto& [role, dims] : roles) {
            for (const auto& [dim, st] : dims) {
                out << g << " " << role << " " << dim << ": n=" << st.count << " mean=" << fixed(st.mean(), 2)
                    << " range=" << st.min << ".." << st.max << "\n";
            }
        }
    }
    if (!sat.mica_minus_direct.empty()) {
        out << "\n== P_Mica - P_Direct ==\n";
        for (const auto& [role, dims] : sat.mica_minus_direct) {
            for (const auto& [dim, d] : dims) out << role << " " << dim << ": " << fixed(d, 2) << "\n";
        }
    }
    out << "\n== PATIENT AGE BANDS ==\n";
    for (const auto& [band, dims] : sat.by_age_band) {
        for (const auto& [dim, st] : dims) {
            out << band << " " << dim << ": n=" << st.count << " mean=" << fixed(st.mean(), 2) << "\n";
        }
    }
    out << "unbanded patient responses: " << sat.unbanded_patient_responses << "\n";
    return out.str();
}

std::string render_trial_report_json(const trial_report& r) {
    auto stats_json = [](const dimension_stats& s) {
        return ojson{{"count", s.count}, {"sum", s.sum}, {"mean", s.mean()}, {"min", s.min}, {"max", s.max}};
    };
    ojson j;
    auto& d = j["durations"] = ojson::object();
    for (const auto& [g, s] : r.durations) {
        d[g] = {{"n_used", s.n_used}, {"n_trimmed", s.n_trimmed}, {"mean_ms", s.mean_ms},
                {"min_ms", s.min_ms}, {"max_ms", s.max_ms},       {"trim_rule", s.trim_rule}};
    }
    j["duration_reduction_ms"] = r.duration_reduction_ms ? ojson(*r.duration_reduction_ms) : ojson(nullptr);

    const auto& sat = r.satisfaction;
    auto& s = j["satisfaction"] = ojson::object();
    s["valid_responses"] = sat.valid_responses;
    s["invalid_responses"] = r.invalid_surveys;
    auto& by_group = s["by_group"] = ojson::object();
    for (const auto& [g, roles] : sat.by_group) {
        for (const auto& [role, dims] : roles) {
            for (const auto& [dim, st] : dims) by_group[g][role][dim] = stats_json(st);
        }
    }
    auto& diff = s["mica_minus_direct"] = ojson::object();
    for (const auto& [role, dims] : sat.mica_minus_direct) {
        for (const auto& [dim, v] : dims) diff[role][dim] = v;
    }
    auto& bands = s["by_age_band"] = ojson::object();
    for (const auto& [band, dims] : sat.by_age_band) {
        for (const auto& [dim, st] : dims) bands[band][dim] = stats_json(st);
    }
    s["unbanded_patient_responses"] = sat.unbanded_patient_responses;
    return j.dump(2) + "\n";
}

} // namespace mica::trial
