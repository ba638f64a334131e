/**
 * @file validate.cpp
 * @brief Semantic checks over a parsed dialog script
 */

#include "mica/script.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace mica::script {

bool validation_report::has_error(std::string_view code) const noexcept {
    return std::any_of(errors.begin(), errors.end(),
                       [&](const diagnostic& d) { return d.code == code; });
}

namespace {

class validator {
public:
    explicit validator(const dialog_script& s) : s_(s), index_(s) {}

    validation_report run() {
        if (s_.version < 1) error(codes::bad_version, "script", "version must be a positive integer");
        check_duplicates();
        collect_facts();
        for (const auto* q : index_.nodes()) check_question(*q);
        check_graph();
        check_fact_writers();
        for (const auto& r : s_.scores) check_score(r);
        for (const auto& f : s_.flags) check_expr(f.condition, "flag " + f.id, false);
        for (const auto& p : s_.profiles) check_expr(p.condition, "profile " + p.id, true);
        for (const auto& r : s_.intercepts) check_intercept(r);
        check_motivation();
        check_demographics();
        return std::move(report_);
    }

private:
    void error(std::string_view code, std::string location, std::string message) {
        report_.errors.push_back({std::string(code), std::move(location), std::move(message)});
    }

    void warning(std::string_view code, std::string location, std::string message) {
        report_.warnings.push_back({std::string(code), std::move(location), std::move(message)});
    }

    template <typename Range, typename Id>
    void check_unique(const Range& items, Id id_of, const std::string& what) {
        std::set<std::string> seen;
        for (const auto& item : items) {
            const std::string& id = id_of(item);
            if (!seen.insert(id).second) {
                error(codes::duplicate_id, what + " " + id, "duplicate " + what + " id '" + id + "'");
            }
        }
    }

    void check_duplicates() {
        check_unique(index_.nodes(), [](const question_node* q) -> const std::string& { return q->id; },
                     "question");
        check_unique(s_.sections, [](const section& x) -> const std::string& { return x.id; },
                     "section");
        check_unique(s_.scores, [](const score_rule& x) -> const std::string& { return x.id; },
                     "score");
        check_unique(s_.flags, [](const flag_rule& x) -> const std::string& { return x.id; },
                     "flag");
        check_unique(s_.profiles, [](const profile_rule& x) -> const std::string& { return x.id; },
                     "profile");
        check_unique(s_.intercepts,
                     [](const intercept_rule& x) -> const std::string& { return x.id; },
                     "intercept");
    }

    void collect_facts() {
        for (const auto* q : index_.nodes()) {
            if (q->fact_name) producible_.insert(*q->fact_name);
        }
        for (const auto& r : s_.intercepts) producible_.insert(r.record_fact);
    }

    // ---- questions ------------------------------------------------------------

    void check_question(const question_node& q) {
        const std::string loc = "question " + q.id;
        if (detail::trim(q.prompt).empty()) error(codes::missing_prompt, loc, "prompt is empty");
        if (detail::trim(q.help).empty()) error(codes::missing_help, loc, "help text is empty");

        if (q.kind == question_kind::choice) {
            if (q.options.size() < 2) error(codes::bad_options, loc, "choice needs at least 2 options");
            std::set<std::string> labels;
            for (const auto& o : q.options) {
                if (detail::trim(o.label).empty()) error(codes::bad_options, loc, "empty option label");
                if (!labels.insert(detail::ascii_lower(o.label)).second) {
                    error(codes::bad_options, loc, "duplicate option '" + o.label + "'");
                }
                if (o.weight && *o.weight < 0) {
                    error(codes::bad_options, loc, "negative weight on '" + o.label + "'");
                }
            }
        } else if (!q.options.empty()) {
            error(codes::bad_options, loc, "options are only allowed on choice questions");
        }

        if (q.kind == question_kind::numeric && q.numeric_range.lo > q.numeric_range.hi) {
            error(codes::bad_range, loc, "numeric range lower bound exceeds upper bound");
        }
        if (q.risk_factor && (q.kind != question_kind::yesno || !q.fact_name)) {
            error(codes::bad_tag, loc, "riskfactor requires a yesno question with 'set'");
        }
        if (q.motif && (q.kind != question_kind::text || !q.fact_name)) {
            error(codes::bad_tag, loc, "motif requires a text question with 'set'");
        }
        check_routes(q, loc);
    }

    void check_routes(const question_node& q, const std::string& loc) {
        bool has_default = false;
        bool seen_yes = false, seen_no = false;
        std::set<std::string> labels;
        std::vector<int_range> ranges;

        for (std::size_t i = 0; i < q.routes.size(); ++i) {
            const route& r = q.routes[i];
            const std::string rloc = loc + " route " + std::to_string(i + 1);
            if (has_default) {
                warning(codes::shadowed_route, rloc, "route follows an unconditional route");
            }
            if (r.target != end_target && !index_.find(r.target)) {
                error(codes::dangling_target, rloc, "goto target '" + r.target + "' does not exist");
            }

            const auto& c = r.condition;
            bool compatible = true;
            switch (c.kind) {
                case route_condition::type::always: has_default = true; break;
                case route_condition::type::yes:
                case route_condition::type::no:
                    compatible = q.kind == question_kind::yesno;
                    if (compatible) (c.kind == route_condition::type::yes ? seen_yes : seen_no) = true;
                    break;
                case route_condition::type::label:
                    compatible = q.kind == question_kind::choice &&
                                 std::any_of(q.options.begin(), q.options.end(), [&](const auto& o) {
                                     return detail::iequals(o.label, c.label);
                                 });
                    if (compatible) labels.insert(detail::ascii_lower(c.label));
                    break;
                case route_condition::type::range:
                    compatible = q.kind == question_kind::numeric && c.range.lo <= c.range.hi &&
                                 q.numeric_range.lo <= c.range.lo && c.range.hi <= q.numeric_range.hi;
                    if (compatible) ranges.push_back(c.range);
                    break;
            }
            if (!compatible) {
                error(codes::route_type_mismatch, rloc,
                      "condition does not fit a " + std::string(to_string(q.kind)) + " question");
            }
        }

        if (has_default) return;
        bool exhaustive = false;
        switch (q.kind) {
            case question_kind::yesno: exhaustive = seen_yes && seen_no; break;
            case question_kind::choice:
                exhaustive = std::all_of(q.options.begin(), q.options.end(), [&](const auto& o) {
                    return labels.count(detail::ascii_lower(o.label)) > 0;
                });
                break;
            case question_kind::numeric: {
                std::sort(ranges.begin(), ranges.end(),
                          [](const int_range& a, const int_range& b) { return a.lo < b.lo; });
                std::int64_t next = q.numeric_range.lo;
                for (const auto& r : ranges) {
                    if (r.lo > next) break;
                    next = std::max(next, r.hi + 1);
                }
                exhaustive = next > q.numeric_range.hi;
                break;
            }
            case question_kind::text: exhaustive = false; break;
        }
        if (!exhaustive) {
            error(codes::non_exhaustive_routes, loc,
                  "routes do not cover every legal answer; add a final unconditional 'goto'");
        }
    }

    // ---- graph ----------------------------------------------------------------

    std::vector<std::string> successors(const question_node& q) const {
        std::vector<std::string> out;
        for (const auto& r : q.routes) {
            if (r.target != end_target && index_.find(r.target)) out.push_back(r.target);
        }
        return out;
    }

    void check_graph() {
        const question_node* start = index_.find(s_.start);
        if (!start) {
            error(codes::unknown_start, "script", "start node '" + s_.start + "' does not exist");
            return;
        }

        std::set<std::string> reached;
        std::vector<std::string> stack{s_.start};
        while (!stack.empty()) {
            const std::string id = stack.back();
            stack.pop_back();
            if (!reached.insert(id).second) continue;
            for (auto& n : successors(*index_.find(id))) stack.push_back(n);
        }
        for (const auto* q : index_.nodes()) {
            if (!reached.count(q->id)) {
                error(codes::unreachable_node, "question " + q->id,
                      "not reachable from start node '" + s_.start + "'");
            }
        }

        // Colouring DFS over every node; each back edge reports its target once.
        std::map<std::string, int> colour;
        std::set<std::string> reported;
        std::function<void(const std::string&)> dfs = [&](const std::string& id) {
            colour[id] = 1;
            for (const auto& n : successors(*index_.find(id))) {
                if (colour[n] == 1) {
                    if (reported.insert(n).second) {
                        error(codes::cycle, "question " + n, "routing cycle through '" + n + "'");
                    }
                } else if (colour[n] == 0) {
                    dfs(n);
                }
            }
            colour[id] = 2;
        };
        for (const auto* q : index_.nodes()) {
            if (colour[q->id] == 0) dfs(q->id);
        }
    }

    std::set<std::string> descendants(const std::string& from) const {
        std::set<std::string> seen;
        std::vector<std::string> stack = successors(*index_.find(from));
        while (!stack.empty()) {
            const std::string id = stack.back();
            stack.pop_back();
            if (!seen.insert(id).second) continue;
            for (auto& n : successors(*index_.find(id))) stack.push_back(n);
        }
        return seen;
    }

    void check_fact_writers() {
        std::map<std::string, std::vector<const question_node*>> writers;
        for (const auto* q : index_.nodes()) {
            if (q->fact_name) writers[*q->fact_name].push_back(q);
        }
        for (const auto& r : s_.intercepts) {
            if (writers.count(r.record_fact)) {
                error(codes::conflicting_fact_writer, "intercept " + r.id,
                      "fact '" + r.record_fact + "' is also set by a question");
            }
        }
        for (const auto& [key, nodes] : writers) {
            if (nodes.size() < 2) continue;
            for (const auto* a : nodes) {
                const auto below = descendants(a->id);
                for (const auto* b : nodes) {
                    if (a != b && below.count(b->id)) {
                        error(codes::conflicting_fact_writer, "question " + b->id,
                              "fact '" + key + "' already set on the same path by '" + a->id + "'");
                    }
                }
            }
        }
    }

    // ---- scores ---------------------------------------------------------------

    void check_score(const score_rule& r) {
        const std::string loc = "score " + r.id;
        bool refs_ok = !r.question_ids.empty();
        std::int64_t min_total = 0, max_total = 0;
        std::set<std::string> seen;
        for (const auto& qid : r.question_ids) {
            const question_node* q = index_.find(qid);
            if (!seen.insert(qid).second) {
                error(codes::bad_score_reference, loc, "question '" + qid + "' listed twice");
                refs_ok = false;
                continue;
            }
            if (!q) {
                error(codes::bad_score_reference, loc, "unknown question '" + qid + "'");
                refs_ok = false;
                continue;
            }
            const bool weighted = q->kind == question_kind::choice && !q->options.empty() &&
                                  std::all_of(q->options.begin(), q->options.end(),
                                              [](const auto& o) { return o.weight.has_value(); });
            if (!weighted) {
                error(codes::bad_score_reference, loc,
                      "question '" + qid + "' is not a choice question with weighted options");
                refs_ok = false;
                continue;
            }
            std::int64_t lo = *q->options.front().weight, hi = lo;
            for (const auto& o : q->options) {
                lo = std::min(lo, *o.weight);
                hi = std::max(hi, *o.weight);
            }
            min_total += lo;
            max_total += hi;
        }

        if (r.bands.empty()) {
            error(codes::bad_bands, loc, "no threshold bands");
            return;
        }
        std::set<std::string> names;
        bool bands_ok = true;
        for (const auto& b : r.bands) {
            if (!names.insert(b.name).second) {
                error(codes::bad_bands, loc, "duplicate band '" + b.name + "'");
                bands_ok = false;
            }
            if (b.shape == score_band::form::between && b.a > b.b) {
                error(codes::bad_bands, loc, "band '" + b.name + "' is empty");
                bands_ok = false;
            }
        }
        if (!bands_ok) return;

        for (std::size_t i = 0; i < r.bands.size(); ++i) {
            for (std::size_t j = i + 1; j < r.bands.size(); ++j) {
                const auto& a = r.bands[i];
                const auto& b = r.bands[j];
                const auto lo = std::max(a.lowest(), b.lowest());  // nullopt < any value
                const auto ahi = a.highest(), bhi = b.highest();
                const std::optional<std::int64_t> hi =
                    !ahi ? bhi : !bhi ? ahi : std::min(*ahi, *bhi);
                if (!lo || !hi || *lo <= *hi) {
                    error(codes::bad_bands, loc,
                          "bands '" + a.name + "' and '" + b.name + "' overlap");
                    return;
                }
            }
        }

        if (!refs_ok) return;
        // Non-overlapping bands cover [min,max] iff, sorted, they chain without gaps.
        std::vector<const score_band*> sorted;
        for (const auto& b : r.bands) sorted.push_back(&b);
        std::sort(sorted.begin(), sorted.end(), [](const score_band* a, const score_band* b) {
            return a->lowest() < b->lowest();
        });
        std::int64_t next = min_total;
        for (const auto* b : sorted) {
            if (next > max_total) break;
            if (b->contains(next)) {
                const auto hi = b->highest();
                if (!hi) {
                    next = max_total + 1;
                    break;
                }
                next = *hi + 1;
            }
        }
        if (next <= max_total) {
            error(codes::bad_bands, loc,
                  "no band covers total " + std::to_string(next) + " (achievable " +
                      std::to_string(min_total) + ".." + std::to_string(max_total) + ")");
        }
    }

    // ---- rules ----------------------------------------------------------------

    void check_expr(const expr& e, const std::string& loc, bool profile) {
        switch (e.kind) {
            case expr::op::fact:
                if (!producible_.count(e.name)) {
                    error(codes::unproducible_fact, loc, "no question or intercept produces fact '" +
                                                             e.name + "'");
                }
                return;
            case expr::op::riskcount_ge:
                if (e.value < 1) error(codes::bad_rule_expression, loc, "riskcount threshold must be >= 1");
                return;
            case expr::op::scoreband: {
                if (!profile) {
                    error(codes::bad_rule_expression, loc, "scoreband is only allowed in profiles");
                    return;
                }
                const score_rule* score = s_.find_score(e.name);
                if (!score) {
                    error(codes::unknown_score, loc, "unknown score '" + e.name + "'");
                } else if (std::none_of(score->bands.begin(), score->bands.end(),
                                        [&](const auto& b) { return b.name == e.band; })) {
                    error(codes::unknown_band, loc,
                          "score '" + e.name + "' has no band '" + e.band + "'");
                }
                return;
            }
            case expr::op::age_le:
            case expr::op::age_ge:
                if (!profile) {
                    error(codes::bad_rule_expression, loc, "age is only allowed in profiles");
                } else if (!s_.demographics) {
                    error(codes::bad_demographics, loc, "age requires a demographics block");
                }
                return;
            case expr::op::negate:
                if (e.operands.size() != 1) {
                    error(codes::bad_rule_expression, loc, "'not' takes one operand");
                    return;
                }
                break;
            case expr::op::all_of:
            case expr::op::any_of:
                if (e.operands.size() != 2) {
                    error(codes::bad_rule_expression, loc, "'and'/'or' take two operands");
                    return;
                }
                break;
        }
        for (const auto& o : e.operands) check_expr(o, loc, profile);
    }

    void check_intercept(const intercept_rule& r) {
        const std::string loc = "intercept " + r.id;
        if (r.keywords.empty()) error(codes::bad_intercept, loc, "keyword list is empty");
        std::set<std::string> seen;
        for (const auto& k : r.keywords) {
            if (detail::trim(k).empty()) {
                error(codes::bad_intercept, loc, "empty keyword");
            } else if (detail::ascii_lower(k) != k) {
                error(codes::bad_intercept, loc, "keyword '" + k + "' is not lowercase");
            }
            if (!seen.insert(k).second) error(codes::bad_intercept, loc, "duplicate keyword '" + k + "'");
        }
    }

    void check_motivation() {
        if (!s_.motivation) return;
        const auto& m = *s_.motivation;
        const score_rule* score = s_.find_score(m.score_id);
        if (!score) {
            error(codes::unknown_score, "motivation", "unknown score '" + m.score_id + "'");
            return;
        }
        std::set<std::string> mapped;
        for (const auto& e : m.table) {
            if (!mapped.insert(e.band).second) {
                error(codes::duplicate_id, "motivation", "band '" + e.band + "' mapped twice");
            }
            if (std::none_of(score->bands.begin(), score->bands.end(),
                             [&](const auto& b) { return b.name == e.band; })) {
                error(codes::unknown_band, "motivation",
                      "score '" + m.score_id + "' has no band '" + e.band + "'");
            }
        }
        for (const auto& b : score->bands) {
            if (!mapped.count(b.name)) {
                error(codes::unknown_band, "motivation",
                      "band '" + b.name + "' has no motivation level");
            }
        }
    }

    void check_demographics() {
        if (!s_.demographics) return;
        const auto& d = *s_.demographics;
        const auto producer = [&](const std::string& key) -> const question_node* {
            for (const auto* q : index_.nodes()) {
                if (q->fact_name == key) return q;
            }
            return nullptr;
        };
        const question_node* age = producer(d.age_fact);
        if (!age || age->kind != question_kind::numeric) {
            error(codes::bad_demographics, "demographics",
                  "age fact '" + d.age_fact + "' must be set by a numeric question");
        }
        const question_node* sex = producer(d.sex_fact);
        if (!sex || sex->kind != question_kind::choice) {
            error(codes::bad_demographics, "demographics",
                  "sex fact '" + d.sex_fact + "' must be set by a choice question");
        }
        if (d.male_age < 0 || d.female_age < 0) {
            error(codes::bad_demographics, "demographics", "age thresholds must be non-negative");
        }
    }

    const dialog_script& s_;
    node_index index_;
    std::set<std::string> producible_;
    validation_report report_;
};

} // namespace

validation_report validate_script(const dialog_script& script) {
    return validator(script).run();
}

} // namespace mica::script
