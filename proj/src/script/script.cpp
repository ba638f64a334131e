/**
 * @file script.cpp
 * @brief Syntax-tree helpers, answer normalization, route matching, path enumeration
 */

#include "mica/error.hpp"
#include "mica/script.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>

namespace mica::script {

std::string_view to_string(question_kind kind) noexcept {
    switch (kind) {
        case question_kind::yesno: return "yesno";
        case question_kind::choice: return "choice";
        case question_kind::numeric: return "numeric";
        case question_kind::text: return "text";
    }
    return "yesno";
}

std::string_view to_string(motivation_level level) noexcept {
    switch (level) {
        case motivation_level::low: return "low";
        case motivation_level::medium: return "medium";
        case motivation_level::high: return "high";
    }
    return "low";
}

std::optional<motivation_level> parse_motivation_level(std::string_view s) noexcept {
    if (s == "low") return motivation_level::low;
    if (s == "medium") return motivation_level::medium;
    if (s == "high") return motivation_level::high;
    return std::nullopt;
}

// -----------------------------------------------------------------------------
// score_band
// -----------------------------------------------------------------------------

std::optional<std::int64_t> score_band::lowest() const noexcept {
    switch (shape) {
        case form::below: return std::nullopt;
        case form::above: return a + 1;
        case form::between: return a;
    }
    return std::nullopt;
}

std::optional<std::int64_t> score_band::highest() const noexcept {
    switch (shape) {
        case form::below: return a - 1;
        case form::above: return std::nullopt;
        case form::between: return b;
    }
    return std::nullopt;
}

bool score_band::contains(std::int64_t total) const noexcept {
    const auto lo = lowest();
    const auto hi = highest();
    return (!lo || total >= *lo) && (!hi || total <= *hi);
}

// -----------------------------------------------------------------------------
// expr
// -----------------------------------------------------------------------------

expr expr::fact(std::string key) {
    expr e;
    e.kind = op::fact;
    e.name = std::move(key);
    return e;
}

expr expr::riskcount_at_least(std::int64_t n) {
    expr e;
    e.kind = op::riskcount_ge;
    e.value = n;
    return e;
}

expr expr::score_band(std::string score, std::string band) {
    expr e;
    e.kind = op::scoreband;
    e.name = std::move(score);
    e.band = std::move(band);
    return e;
}

expr expr::age_at_most(std::int64_t n) {
    expr e;
    e.kind = op::age_le;
    e.value = n;
    return e;
}

expr expr::age_at_least(std::int64_t n) {
    expr e;
    e.kind = op::age_ge;
    e.value = n;
    return e;
}

expr expr::negation(expr operand) {
    expr e;
    e.kind = op::negate;
    e.operands.push_back(std::move(operand));
    return e;
}

expr expr::conjunction(expr lhs, expr rhs) {
    expr e;
    e.kind = op::all_of;
    e.operands.push_back(std::move(lhs));
    e.operands.push_back(std::move(rhs));
    return e;
}

expr expr::disjunction(expr lhs, expr rhs) {
    expr e;
    e.kind = op::any_of;
    e.operands.push_back(std::move(lhs));
    e.operands.push_back(std::move(rhs));
    return e;
}

bool operator==(const expr& a, const expr& b) {
    return a.kind == b.kind && a.name == b.name && a.band == b.band && a.value == b.value &&
           a.operands == b.operands;
}

// -----------------------------------------------------------------------------
// dialog_script / node_index
// -----------------------------------------------------------------------------

const question_node* dialog_script::find_question(std::string_view id) const noexcept {
    for (const auto& sec : sections) {
        for (const auto& q : sec.questions) {
            if (q.id == id) return &q;
        }
    }
    return nullptr;
}

const score_rule* dialog_script::find_score(std::string_view id) const noexcept {
    for (const auto& r : scores) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

std::size_t dialog_script::question_count() const noexcept {
    std::size_t n = 0;
    for (const auto& sec : sections) n += sec.questions.size();
    return n;
}

node_index::node_index(const dialog_script& script) {
    for (const auto& sec : script.sections) {
        for (const auto& q : sec.questions) {
            by_id_.emplace(q.id, &q);  // first declaration wins on duplicates
            order_.push_back(&q);
        }
    }
}

const question_node* node_index::find(std::string_view id) const noexcept {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : it->second;
}

// -----------------------------------------------------------------------------
// Answers and routes
// -----------------------------------------------------------------------------

std::string format_answer(const answer_value& value) {
    if (const auto* b = std::get_if<bool>(&value)) return *b ? "yes" : "no";
    if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
    return std::get<std::string>(value);
}

std::optional<answer_value> normalize_answer(const question_node& node,
                                             std::string_view utterance) {
    const std::string_view trimmed = detail::trim(utterance);
    switch (node.kind) {
        case question_kind::yesno: {
            const std::string lower = detail::ascii_lower(trimmed);
            if (lower == "yes") return answer_value{true};
            if (lower == "no") return answer_value{false};
            return std::nullopt;
        }
        case question_kind::choice:
            for (const auto& o : node.options) {
                if (detail::iequals(o.label, trimmed)) return answer_value{o.label};
            }
            return std::nullopt;
        case question_kind::numeric: {
            std::int64_t v = 0;
            const char* first = trimmed.data();
            const char* last = trimmed.data() + trimmed.size();
            if (first != last && *first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc{} || ptr != last || trimmed.empty()) return std::nullopt;
            if (!node.numeric_range.contains(v)) return std::nullopt;
            return answer_value{v};
        }
        case question_kind::text:
            if (trimmed.empty()) return std::nullopt;
            return answer_value{std::string(utterance)};
    }
    return std::nullopt;
}

bool condition_matches(const route_condition& c, const answer_value& answer) {
    switch (c.kind) {
        case route_condition::type::always: return true;
        case route_condition::type::yes: {
            const auto* b = std::get_if<bool>(&answer);
            return b && *b;
        }
        case route_condition::type::no: {
            const auto* b = std::get_if<bool>(&answer);
            return b && !*b;
        }
        case route_condition::type::label: {
            const auto* s = std::get_if<std::string>(&answer);
            return s && detail::iequals(*s, c.label);
        }
        case route_condition::type::range: {
            const auto* i = std::get_if<std::int64_t>(&answer);
            return i && c.range.contains(*i);
        }
    }
    return false;
}

std::optional<std::size_t> first_matching_route(const question_node& node,
                                                 const answer_value& answer) {
    for (std::size_t i = 0; i < node.routes.size(); ++i) {
        if (condition_matches(node.routes[i].condition, answer)) return i;
    }
    return std::nullopt;
}

std::vector<std::string> sample_answers(const question_node& node) {
    switch (node.kind) {
        case question_kind::yesno: return {"yes", "no"};
        case question_kind::choice: {
            std::vector<std::string> out;
            for (const auto& o : node.options) out.push_back(o.label);
            return out;
        }
        case question_kind::numeric: {
            const auto& r = node.numeric_range;
            std::set<std::int64_t> points{r.lo, r.hi};
            for (const auto& route : node.routes) {
                if (route.condition.kind != route_condition::type::range) continue;
                const auto& c = route.condition.range;
                for (std::int64_t p : {c.lo, c.hi}) {
                    for (std::int64_t q : {p - 1, p, p + 1}) {
                        if (r.contains(q)) points.insert(q);
                    }
                }
            }
            std::vector<std::string> out;
            for (std::int64_t p : points) out.push_back(std::to_string(p));
            return out;
        }
        case question_kind::text: return {"sample answer"};
    }
    return {};
}

// -----------------------------------------------------------------------------
// Path enumeration
// -----------------------------------------------------------------------------

path_enumeration enumerate_paths(const dialog_script& script, std::size_t max_paths) {
    const node_index index(script);
    path_enumeration result;
    std::vector<path_step> path;
    std::set<std::string> on_path;
    bool stop = false;

    std::function<void(const std::string&)> visit = [&](const std::string& id) {
        const question_node* node = index.find(id);
        if (!node) throw mica_error("DanglingTarget", "route target '" + id + "' does not exist");
        on_path.insert(id);
        std::set<std::size_t> taken;
        for (const auto& utterance : sample_answers(*node)) {
            if (stop) break;
            const auto value = normalize_answer(*node, utterance);
            if (!value) continue;
            const auto route = first_matching_route(*node, *value);
            if (!route) {
                throw mica_error("NoRouteMatched",
                                 "node '" + id + "' has no route for answer '" + utterance + "'");
            }
            if (!taken.insert(*route).second) continue;
            const std::string& target = node->routes[*route].target;
            path.push_back({id, utterance});
            if (target == end_target) {
                if (result.paths.size() >= max_paths) {
                    result.truncated = true;
                    stop = true;
                } else {
                    result.paths.push_back(path);
                }
            } else if (on_path.count(target)) {
                throw cycle_error(target);
            } else {
                visit(target);
            }
            path.pop_back();
        }
        on_path.erase(id);
    };

    visit(script.start);
    return result;
}

} // namespace mica::script
