/**
 * @file parser.cpp
 * @brief Recursive-descent parser for the dialog-script DSL
 */

#include "mica/error.hpp"
#include "mica/script.hpp"

#include <cctype>
#include <charconv>
#include <set>
#include <utility>

namespace mica::script {

namespace {

// =============================================================================
// Lexer
// =============================================================================

enum class tok { word, string, integer, punct, eof };

struct token {
    tok kind = tok::eof;
    std::string text;        // word / punct spelling, or decoded string
    std::int64_t value = 0;  // integer
    std::size_t line = 1;
    std::size_t column = 1;
};

class lexer {
public:
    explicit lexer(std::string_view src) : src_(src) {}

    std::vector<token> run() {
        std::vector<token> out;
        for (;;) {
            skip_space_and_comments();
            token t;
            t.line = line_;
            t.column = col_;
            if (pos_ >= src_.size()) {
                out.push_back(t);
                return out;
            }
            const char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = tok::word;
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                    t.text += advance();
                }
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '-' && pos_ + 1 < src_.size() &&
                        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                t.kind = tok::integer;
                t.text += advance();
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                    t.text += advance();
                }
                auto [ptr, ec] =
                    std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.value);
                if (ec != std::errc{}) {
                    throw syntax_error(t.line, t.column, "integer within 64-bit range");
                }
            } else if (c == '"') {
                t.kind = tok::string;
                t.text = read_string(t);
            } else if (c == '.' && peek(1) == '.') {
                t.kind = tok::punct;
                t.text = "..";
                advance();
                advance();
            } else if ((c == '<' || c == '>') && peek(1) == '=') {
                t.kind = tok::punct;
                t.text = std::string{c} + "=";
                advance();
                advance();
            } else if (c == '{' || c == '}' || c == '(' || c == ')' || c == ',' || c == '<' ||
                       c == '>') {
                t.kind = tok::punct;
                t.text = std::string{advance()};
            } else {
                throw syntax_error(line_, col_, "token");
            }
            out.push_back(std::move(t));
        }
    }

private:
    char peek(std::size_t ahead) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    char advance() {
        const char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else {
                break;
            }
        }
    }

    std::string read_string(const token& start) {
        advance();  // opening quote
        std::string out;
        for (;;) {
            if (pos_ >= src_.size() || src_[pos_] == '\n') {
                throw syntax_error(start.line, start.column, "closing '\"'");
            }
            const char c = advance();
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (pos_ >= src_.size()) throw syntax_error(line_, col_, "escape sequence");
            const std::size_t l = line_, k = col_;
            switch (advance()) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default: throw syntax_error(l, k, "escape sequence (\\\" \\\\ \\n \\t)");
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

bool is_identifier(std::string_view s) {
    if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
    for (char c : s) {
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
    }
    return true;
}

// =============================================================================
// Parser
// =============================================================================

class parser {
public:
    parser(std::vector<token> tokens, parse_options options)
        : toks_(std::move(tokens)), options_(options) {}

    dialog_script run() {
        dialog_script s;
        expect_word("script");
        s.name = expect_string("script name");
        expect_word("version");
        s.version = expect_int("version number");
        expect_word("start");
        s.start = expect_id("start node id");

        while (!at_eof()) {
            const token& t = cur();
            if (is_word("section")) {
                parse_section(s);
            } else if (is_word("score")) {
                parse_score(s);
            } else if (is_word("flag")) {
                next();
                flag_rule f;
                f.id = expect_unique_id(flag_ids_, "flag id");
                expect_word("when");
                f.condition = parse_or();
                s.flags.push_back(std::move(f));
            } else if (is_word("profile")) {
                next();
                profile_rule p;
                p.id = expect_unique_id(profile_ids_, "profile id");
                expect_word("when");
                p.condition = parse_or();
                s.profiles.push_back(std::move(p));
            } else if (is_word("intercept")) {
                parse_intercept(s);
            } else if (is_word("motivation")) {
                if (s.motivation) throw syntax_error(t.line, t.column, "a single motivation block");
                parse_motivation(s);
            } else if (is_word("demographics")) {
                if (s.demographics) {
                    throw syntax_error(t.line, t.column, "a single demographics block");
                }
                parse_demographics(s);
            } else {
                throw syntax_error(t.line, t.column,
                                   "'section', 'score', 'flag', 'profile', 'intercept', "
                                   "'motivation' or 'demographics'");
            }
        }
        return s;
    }

private:
    // ---- token helpers ------------------------------------------------------

    const token& cur() const { return toks_[pos_]; }
    bool at_eof() const { return cur().kind == tok::eof; }
    void next() {
        if (!at_eof()) ++pos_;
    }

    bool is_word(std::string_view w) const {
        return cur().kind == tok::word && cur().text == w;
    }
    bool is_punct(std::string_view p) const {
        return cur().kind == tok::punct && cur().text == p;
    }

    [[noreturn]] void fail(std::string expected) const {
        throw syntax_error(cur().line, cur().column, std::move(expected));
    }

    void expect_word(std::string_view w) {
        if (!is_word(w)) fail("'" + std::string(w) + "'");
        next();
    }

    void expect_punct(std::string_view p) {
        if (!is_punct(p)) fail("'" + std::string(p) + "'");
        next();
    }

    std::string expect_string(std::string_view what) {
        if (cur().kind != tok::string) fail(std::string(what) + " (string)");
        std::string s = cur().text;
        next();
        return s;
    }

    std::int64_t expect_int(std::string_view what) {
        if (cur().kind != tok::integer) fail(std::string(what) + " (integer)");
        const std::int64_t v = cur().value;
        next();
        return v;
    }

    std::string expect_id(std::string_view what) {
        if (cur().kind != tok::word || !is_identifier(cur().text)) {
            fail(std::string(what) + " (identifier [a-z][a-z0-9_]*)");
        }
        std::string s = cur().text;
        next();
        return s;
    }

    std::string expect_unique_id(std::set<std::string>& seen, std::string_view what) {
        const token at = cur();
        std::string id = expect_id(what);
        if (!seen.insert(id).second && !options_.allow_duplicate_ids) {
            throw duplicate_id_error(at.line, at.column, id);
        }
        return id;
    }

    // ---- sections and questions -------------------------------------------

    void parse_section(dialog_script& s) {
        next();
        section sec;
        sec.id = expect_unique_id(section_ids_, "section id");
        expect_punct("{");
        while (is_word("question")) {
            sec.questions.push_back(parse_question(sec.id));
        }
        expect_punct("}");
        s.sections.push_back(std::move(sec));
    }

    question_node parse_question(const std::string& section_id) {
        next();
        question_node q;
        q.section = section_id;
        if (is_word(end_target)) fail("question id other than 'end'");
        q.id = expect_unique_id(node_ids_, "question id");

        if (is_word("yesno")) {
            q.kind = question_kind::yesno;
            next();
        } else if (is_word("choice")) {
            q.kind = question_kind::choice;
            next();
        } else if (is_word("text")) {
            q.kind = question_kind::text;
            next();
        } else if (is_word("numeric")) {
            q.kind = question_kind::numeric;
            next();
            q.numeric_range.lo = expect_int("range lower bound");
            expect_punct("..");
            q.numeric_range.hi = expect_int("range upper bound");
        } else {
            fail("question kind ('yesno', 'choice', 'numeric' or 'text')");
        }

        q.prompt = expect_string("prompt");
        expect_word("help");
        q.help = expect_string("help text");

        for (;;) {
            if (is_word("riskfactor")) {
                if (q.risk_factor) fail("a single 'riskfactor' tag");
                q.risk_factor = true;
                next();
            } else if (is_word("motif")) {
                if (q.motif) fail("a single 'motif' tag");
                q.motif = true;
                next();
            } else if (is_word("set")) {
                if (q.fact_name) fail("a single 'set' tag");
                next();
                q.fact_name = expect_id("fact name");
            } else {
                break;
            }
        }

        while (is_word("option")) {
            next();
            answer_option o;
            o.label = expect_string("option label");
            if (is_word("weight")) {
                next();
                o.weight = expect_int("option weight");
            }
            q.options.push_back(std::move(o));
        }

        while (is_word("when") || is_word("goto")) {
            route r;
            if (is_word("when")) {
                next();
                r.condition = parse_condition();
            }
            expect_word("goto");
            r.target = parse_target();
            q.routes.push_back(std::move(r));
        }
        if (q.routes.empty()) fail("route ('when' or 'goto')");
        return q;
    }

    route_condition parse_condition() {
        route_condition c;
        if (is_word("yes")) {
            c.kind = route_condition::type::yes;
            next();
        } else if (is_word("no")) {
            c.kind = route_condition::type::no;
            next();
        } else if (cur().kind == tok::string) {
            c.kind = route_condition::type::label;
            c.label = cur().text;
            next();
        } else if (cur().kind == tok::integer) {
            c.kind = route_condition::type::range;
            c.range.lo = expect_int("range lower bound");
            expect_punct("..");
            c.range.hi = expect_int("range upper bound");
        } else {
            fail("route condition ('yes', 'no', string or range)");
        }
        return c;
    }

    std::string parse_target() {
        if (is_word(end_target)) {
            next();
            return std::string(end_target);
        }
        return expect_id("goto target");
    }

    // ---- scores ---------------------------------------------------------------

    void parse_score(dialog_script& s) {
        next();
        score_rule r;
        r.id = expect_unique_id(score_ids_, "score id");
        expect_punct("{");
        expect_word("questions");
        r.question_ids.push_back(expect_id("question id"));
        while (!is_word("thresholds")) {
            if (cur().kind != tok::word) fail("question id or 'thresholds'");
            r.question_ids.push_back(expect_id("question id"));
        }
        next();
        expect_punct("{");
        do {
            score_band b;
            b.name = expect_id("band name");
            expect_word("when");
            if (is_punct("<")) {
                next();
                b.shape = score_band::form::below;
                b.a = expect_int("band bound");
            } else if (is_punct(">")) {
                next();
                b.shape = score_band::form::above;
                b.a = expect_int("band bound");
            } else {
                b.shape = score_band::form::between;
                b.a = expect_int("band lower bound, '<' or '>'");
                expect_punct("..");
                b.b = expect_int("band upper bound");
            }
            r.bands.push_back(std::move(b));
        } while (!is_punct("}"));
        next();
        expect_punct("}");
        s.scores.push_back(std::move(r));
    }

    // ---- rule expressions -----------------------------------------------------

    expr parse_or() {
        expr lhs = parse_and();
        while (is_word("or")) {
            next();
            lhs = expr::disjunction(std::move(lhs), parse_and());
        }
        return lhs;
    }

    expr parse_and() {
        expr lhs = parse_term();
        while (is_word("and")) {
            next();
            lhs = expr::conjunction(std::move(lhs), parse_term());
        }
        return lhs;
    }

    expr parse_term() {
        if (is_word("not")) {
            next();
            return expr::negation(parse_atom());
        }
        return parse_atom();
    }

    expr parse_atom() {
        if (is_word("fact")) {
            next();
            expect_punct("(");
            std::string key = expect_id("fact name");
            expect_punct(")");
            return expr::fact(std::move(key));
        }
        if (is_word("riskcount")) {
            next();
            expect_punct(">=");
            return expr::riskcount_at_least(expect_int("risk-factor count"));
        }
        if (is_word("scoreband")) {
            next();
            expect_punct("(");
            std::string score = expect_id("score id");
            expect_punct(",");
            std::string band = expect_id("band name");
            expect_punct(")");
            return expr::score_band(std::move(score), std::move(band));
        }
        if (is_word("age")) {
            next();
            if (is_punct("<=")) {
                next();
                return expr::age_at_most(expect_int("age"));
            }
            expect_punct(">=");
            return expr::age_at_least(expect_int("age"));
        }
        if (is_punct("(")) {
            next();
            expr inner = parse_or();
            expect_punct(")");
            return inner;
        }
        fail("'fact', 'riskcount', 'scoreband', 'age' or '('");
    }

    // ---- intercepts and configuration blocks ----------------------------------

    void parse_intercept(dialog_script& s) {
        next();
        intercept_rule r;
        r.id = expect_unique_id(intercept_ids_, "intercept id");
        expect_word("keywords");
        r.keywords.push_back(expect_string("keyword"));
        while (cur().kind == tok::string) {
            r.keywords.push_back(cur().text);
            next();
        }
        expect_word("record");
        r.record_fact = expect_id("fact name");
        s.intercepts.push_back(std::move(r));
    }

    void parse_motivation(dialog_script& s) {
        next();
        motivation_config m;
        m.score_id = expect_id("score id");
        expect_punct("{");
        do {
            expect_word("band");
            motivation_entry e;
            e.band = expect_id("band name");
            expect_word("level");
            const auto level =
                cur().kind == tok::word ? parse_motivation_level(cur().text) : std::nullopt;
            if (!level) fail("motivation level ('low', 'medium' or 'high')");
            e.level = *level;
            next();
            m.table.push_back(std::move(e));
        } while (!is_punct("}"));
        next();
        s.motivation = std::move(m);
    }

    void parse_demographics(dialog_script& s) {
        next();
        demographics_config d;
        expect_word("age");
        d.age_fact = expect_id("age fact name");
        expect_word("sex");
        d.sex_fact = expect_id("sex fact name");
        expect_word("male");
        d.male_age = expect_int("male age threshold");
        expect_word("female");
        d.female_age = expect_int("female age threshold");
        s.demographics = std::move(d);
    }

    std::vector<token> toks_;
    std::size_t pos_ = 0;
    parse_options options_;
    std::set<std::string> node_ids_, section_ids_, score_ids_, flag_ids_, profile_ids_,
        intercept_ids_;
};

} // namespace

dialog_script parse_script(std::string_view text, parse_options options) {
    return parser(lexer(text).run(), options).run();
}

} // namespace mica::script
