/**
 * @file render.cpp
 * @brief Canonical text rendering of dialog scripts
 */

#include "mica/script.hpp"

#include <sstream>

namespace mica::script {

namespace {

int precedence(expr::op k) {
    switch (k) {
        case expr::op::any_of: return 1;
        case expr::op::all_of: return 2;
        case expr::op::negate: return 3;
        default: return 4;
    }
}

std::string wrap_if(bool cond, std::string s) {
    return cond ? "(" + s + ")" : s;
}

std::string render_condition(const route_condition& c) {
    switch (c.kind) {
        case route_condition::type::yes: return "yes";
        case route_condition::type::no: return "no";
        case route_condition::type::label: return quote(c.label);
        case route_condition::type::range:
            return std::to_string(c.range.lo) + ".." + std::to_string(c.range.hi);
        case route_condition::type::always: break;
    }
    return {};
}

std::string render_band(const score_band& b) {
    switch (b.shape) {
        case score_band::form::below: return "< " + std::to_string(b.a);
        case score_band::form::above: return "> " + std::to_string(b.a);
        case score_band::form::between: break;
    }
    return std::to_string(b.a) + ".." + std::to_string(b.b);
}

void render_question(std::ostream& out, const question_node& q) {
    out << "  question " << q.id << ' ' << to_string(q.kind);
    if (q.kind == question_kind::numeric) {
        out << ' ' << q.numeric_range.lo << ".." << q.numeric_range.hi;
    }
    out << ' ' << quote(q.prompt) << '\n';
    out << "    help " << quote(q.help) << '\n';
    if (q.risk_factor) out << "    riskfactor\n";
    if (q.motif) out << "    motif\n";
    if (q.fact_name) out << "    set " << *q.fact_name << '\n';
    for (const auto& o : q.options) {
        out << "    option " << quote(o.label);
        if (o.weight) out << " weight " << *o.weight;
        out << '\n';
    }
    for (const auto& r : q.routes) {
        out << "    ";
        if (r.condition.kind != route_condition::type::always) {
            out << "when " << render_condition(r.condition) << ' ';
        }
        out << "goto " << r.target << '\n';
    }
}

} // namespace

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
    return out;
}

std::string render_expr(const expr& e) {
    switch (e.kind) {
        case expr::op::fact: return "fact(" + e.name + ")";
        case expr::op::riskcount_ge: return "riskcount >= " + std::to_string(e.value);
        case expr::op::scoreband: return "scoreband(" + e.name + ", " + e.band + ")";
        case expr::op::age_le: return "age <= " + std::to_string(e.value);
        case expr::op::age_ge: return "age >= " + std::to_string(e.value);
        case expr::op::negate: {
            const expr& inner = e.operands.at(0);
            return "not " + wrap_if(precedence(inner.kind) < 4, render_expr(inner));
        }
        case expr::op::all_of:
        case expr::op::any_of: {
            // Left-associative: parenthesize a looser left operand and any
            // right operand that is not strictly tighter.
            const int mine = precedence(e.kind);
            const expr& lhs = e.operands.at(0);
            const expr& rhs = e.operands.at(1);
            const char* word = e.kind == expr::op::all_of ? " and " : " or ";
            return wrap_if(precedence(lhs.kind) < mine, render_expr(lhs)) + word +
                   wrap_if(precedence(rhs.kind) <= mine, render_expr(rhs));
        }
    }
    return {};
}

std::string render_script(const dialog_script& s) {
    std::ostringstream out;
    out << "script " << quote(s.name) << " version " << s.version << " start " << s.start << '\n';

    if (s.demographics) {
        const auto& d = *s.demographics;
        out << "\ndemographics age " << d.age_fact << " sex " << d.sex_fact << " male "
            << d.male_age << " female " << d.female_age << '\n';
    }

    for (const auto& sec : s.sections) {
        out << "\nsection " << sec.id << " {\n";
        for (std::size_t i = 0; i < sec.questions.size(); ++i) {
            if (i > 0) out << '\n';
            render_question(out, sec.questions[i]);
        }
        out << "}\n";
    }

    for (const auto& r : s.scores) {
        out << "\nscore " << r.id << " {\n  questions";
        for (const auto& q : r.question_ids) out << ' ' << q;
        out << "\n  thresholds {\n";
        for (const auto& b : r.bands) {
            out << "    " << b.name << " when " << render_band(b) << '\n';
        }
        out << "  }\n}\n";
    }

    if (s.motivation) {
        out << "\nmotivation " << s.motivation->score_id << " {\n";
        for (const auto& e : s.motivation->table) {
            out << "  band " << e.band << " level " << to_string(e.level) << '\n';
        }
        out << "}\n";
    }

    if (!s.flags.empty()) out << '\n';
    for (const auto& f : s.flags) {
        out << "flag " << f.id << " when " << render_expr(f.condition) << '\n';
    }

    if (!s.profiles.empty()) out << '\n';
    for (const auto& p : s.profiles) {
        out << "profile " << p.id << " when " << render_expr(p.condition) << '\n';
    }

    if (!s.intercepts.empty()) out << '\n';
    for (const auto& r : s.intercepts) {
        out << "intercept " << r.id << " keywords";
        for (const auto& k : r.keywords) out << ' ' << quote(k);
        out << " record " << r.record_fact << '\n';
    }
    return out.str();
}

} // namespace mica::script
