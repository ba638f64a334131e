/**
 * @file script.hpp
 * @brief Dialog-script DSL: syntax tree, parser, canonical renderer, validator
 *
 * A dialog script (`.mica` file) declares the interview question tree, help
 * texts, weighted options, score bands, red-flag and profile rules, and the
 * keyword lexicons used to capture complaints raised out of turn.
 *
 * Scripts are plain immutable data once parsed. Parsing only checks syntax;
 * every semantic rule lives in validate_script().
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace mica::script {

/// Reserved route target that terminates the interview.
inline constexpr std::string_view end_target = "end";

enum class question_kind { yesno, choice, numeric, text };

[[nodiscard]] std::string_view to_string(question_kind kind) noexcept;

/// Inclusive integer interval.
struct int_range {
    std::int64_t lo = 0;
    std::int64_t hi = 0;

    [[nodiscard]] bool contains(std::int64_t v) const noexcept { return lo <= v && v <= hi; }
    bool operator==(const int_range&) const = default;
};

struct answer_option {
    std::string label;
    std::optional<std::int64_t> weight;

    bool operator==(const answer_option&) const = default;
};

struct route_condition {
    enum class type { always, yes, no, label, range };

    type kind = type::always;
    std::string label;   ///< type::label only
    int_range range;     ///< type::range only

    bool operator==(const route_condition&) const = default;
};

struct route {
    route_condition condition;
    std::string target;  ///< node id or end_target

    bool operator==(const route&) const = default;
};

struct question_node {
    std::string id;
    std::string section;
    question_kind kind = question_kind::yesno;
    std::string prompt;
    std::string help;
    std::vector<answer_option> options;
    int_range numeric_range;             ///< numeric kind only
    std::optional<std::string> fact_name;
    bool risk_factor = false;
    bool motif = false;                  ///< text answers become complaint motifs
    std::vector<route> routes;

    bool operator==(const question_node&) const = default;
};

struct section {
    std::string id;
    std::vector<question_node> questions;

    bool operator==(const section&) const = default;
};

/// One threshold band. `< n`, `a..b` and `> n` forms are all normalized to an
/// interval with optional open ends; the surface form is kept for rendering.
struct score_band {
    enum class form { below, between, above };

    std::string name;
    form shape = form::between;
    std::int64_t a = 0;  ///< bound for below/above, lower bound for between
    std::int64_t b = 0;  ///< upper bound for between

    [[nodiscard]] std::optional<std::int64_t> lowest() const noexcept;
    [[nodiscard]] std::optional<std::int64_t> highest() const noexcept;
    [[nodiscard]] bool contains(std::int64_t total) const noexcept;

    bool operator==(const score_band&) const = default;
};

struct score_rule {
    std::string id;
    std::vector<std::string> question_ids;
    std::vector<score_band> bands;

    bool operator==(const score_rule&) const = default;
};

/// Boolean rule expression shared by flag and profile rules.
struct expr {
    enum class op { fact, riskcount_ge, scoreband, age_le, age_ge, negate, all_of, any_of };

    op kind = op::fact;
    std::string name;         ///< fact key, or score id for scoreband
    std::string band;         ///< scoreband only
    std::int64_t value = 0;   ///< riskcount / age comparisons
    std::vector<expr> operands;  ///< negate: 1, all_of / any_of: 2

    static expr fact(std::string key);
    static expr riskcount_at_least(std::int64_t n);
    static expr score_band(std::string score, std::string band);
    static expr age_at_most(std::int64_t n);
    static expr age_at_least(std::int64_t n);
    static expr negation(expr operand);
    static expr conjunction(expr lhs, expr rhs);
    static expr disjunction(expr lhs, expr rhs);

    friend bool operator==(const expr& a, const expr& b);
};

struct flag_rule {
    std::string id;
    expr condition;

    bool operator==(const flag_rule&) const = default;
};

struct profile_rule {
    std::string id;
    expr condition;

    bool operator==(const profile_rule&) const = default;
};

struct intercept_rule {
    std::string id;
    std::vector<std::string> keywords;
    std::string record_fact;

    bool operator==(const intercept_rule&) const = default;
};

enum class motivation_level { low, medium, high };

[[nodiscard]] std::string_view to_string(motivation_level level) noexcept;
[[nodiscard]] std::optional<motivation_level> parse_motivation_level(std::string_view s) noexcept;

struct motivation_entry {
    std::string band;
    motivation_level level = motivation_level::low;

    bool operator==(const motivation_entry&) const = default;
};

/// Maps the bands of one score onto motivation levels.
struct motivation_config {
    std::string score_id;
    std::vector<motivation_entry> table;

    bool operator==(const motivation_config&) const = default;
};

/// Which facts carry age and sex, and the ages from which sex adds one risk factor.
struct demographics_config {
    std::string age_fact;
    std::string sex_fact;
    std::int64_t male_age = 0;
    std::int64_t female_age = 0;

    bool operator==(const demographics_config&) const = default;
};

struct dialog_script {
    std::string name;
    std::int64_t version = 1;
    std::string start;
    std::vector<section> sections;
    std::vector<score_rule> scores;
    std::vector<flag_rule> flags;
    std::vector<profile_rule> profiles;
    std::vector<intercept_rule> intercepts;
    std::optional<motivation_config> motivation;
    std::optional<demographics_config> demographics;

    /// Linear lookup; use node_index for repeated access.
    [[nodiscard]] const question_node* find_question(std::string_view id) const noexcept;
    [[nodiscard]] const score_rule* find_score(std::string_view id) const noexcept;
    [[nodiscard]] std::size_t question_count() const noexcept;

    bool operator==(const dialog_script&) const = default;
};

/// Id → node map over a script that must outlive the index.
class node_index {
public:
    explicit node_index(const dialog_script& script);

    [[nodiscard]] const question_node* find(std::string_view id) const noexcept;
    [[nodiscard]] const std::vector<const question_node*>& nodes() const noexcept { return order_; }

private:
    std::unordered_map<std::string, const question_node*> by_id_;
    std::vector<const question_node*> order_;
};

// -----------------------------------------------------------------------------
// Parsing and rendering
// -----------------------------------------------------------------------------

struct parse_options {
    /// When set, duplicated ids are kept in the tree so the validator can
    /// report them alongside every other defect.
    bool allow_duplicate_ids = false;
};

/**
 * @brief Parse DSL text into a syntax tree.
 *
 * Throws mica::syntax_error with the 1-based position of the first offending
 * token, or mica::duplicate_id_error unless options.allow_duplicate_ids.
 */
[[nodiscard]] dialog_script parse_script(std::string_view text, parse_options options = {});

/// Canonical text form; parse_script(render_script(s)) == s.
[[nodiscard]] std::string render_script(const dialog_script& script);

/// Canonical text of a rule expression with minimal parentheses.
[[nodiscard]] std::string render_expr(const expr& e);

/// Quote and escape a string literal the way the renderer does.
[[nodiscard]] std::string quote(std::string_view s);

// -----------------------------------------------------------------------------
// Validation
// -----------------------------------------------------------------------------

struct diagnostic {
    std::string code;
    std::string location;
    std::string message;

    bool operator==(const diagnostic&) const = default;
};

struct validation_report {
    std::vector<diagnostic> errors;
    std::vector<diagnostic> warnings;

    [[nodiscard]] bool accepted() const noexcept { return errors.empty(); }
    [[nodiscard]] bool has_error(std::string_view code) const noexcept;
};

/// Error codes produced by validate_script().
namespace codes {
inline constexpr std::string_view dangling_target = "DanglingTarget";
inline constexpr std::string_view unreachable_node = "UnreachableNode";
inline constexpr std::string_view missing_help = "MissingHelp";
inline constexpr std::string_view duplicate_id = "DuplicateId";
inline constexpr std::string_view bad_score_reference = "BadScoreReference";
inline constexpr std::string_view bad_bands = "BadBands";
inline constexpr std::string_view unproducible_fact = "UnproducibleFact";
inline constexpr std::string_view non_exhaustive_routes = "NonExhaustiveRoutes";
inline constexpr std::string_view unknown_start = "UnknownStart";
inline constexpr std::string_view missing_prompt = "MissingPrompt";
inline constexpr std::string_view bad_options = "BadOptions";
inline constexpr std::string_view bad_range = "BadRange";
inline constexpr std::string_view route_type_mismatch = "RouteTypeMismatch";
inline constexpr std::string_view cycle = "CycleDetected";
inline constexpr std::string_view bad_tag = "BadTag";
inline constexpr std::string_view conflicting_fact_writer = "ConflictingFactWriter";
inline constexpr std::string_view bad_rule_expression = "BadRuleExpression";
inline constexpr std::string_view unknown_score = "UnknownScore";
inline constexpr std::string_view unknown_band = "UnknownBand";
inline constexpr std::string_view bad_intercept = "BadIntercept";
inline constexpr std::string_view bad_demographics = "BadDemographics";
inline constexpr std::string_view bad_version = "BadVersion";
// warnings
inline constexpr std::string_view shadowed_route = "ShadowedRoute";
} // namespace codes

[[nodiscard]] validation_report validate_script(const dialog_script& script);

// -----------------------------------------------------------------------------
// Path enumeration
// -----------------------------------------------------------------------------

struct path_step {
    std::string node;
    std::string answer;  ///< utterance that produces this step

    bool operator==(const path_step&) const = default;
};

struct path_enumeration {
    std::vector<std::vector<path_step>> paths;
    bool truncated = false;
};

/**
 * @brief Sample utterances covering every route of a node.
 *
 * yesno yields "yes","no"; choice yields every label; numeric yields the range
 * endpoints and every route-condition boundary inside the range; text yields
 * one placeholder answer.
 */
[[nodiscard]] std::vector<std::string> sample_answers(const question_node& node);

/// Typed answer: yesno → bool, numeric → integer, choice → option label, text → verbatim.
using answer_value = std::variant<bool, std::int64_t, std::string>;

[[nodiscard]] std::string format_answer(const answer_value& value);

/**
 * @brief Normalize a raw utterance for a node, or nullopt when it is not a
 * legal direct answer.
 *
 * yesno accepts yes/no in any case; choice matches an option label in any
 * case and yields the label as declared; numeric parses a decimal integer
 * inside the range; text accepts any utterance with a non-blank character.
 * Surrounding whitespace is ignored except for text answers, kept verbatim.
 */
[[nodiscard]] std::optional<answer_value> normalize_answer(const question_node& node,
                                                           std::string_view utterance);

[[nodiscard]] bool condition_matches(const route_condition& condition, const answer_value& answer);

/// Index of the first route whose condition matches, or nullopt.
[[nodiscard]] std::optional<std::size_t> first_matching_route(const question_node& node,
                                                              const answer_value& answer);

/// Depth-first enumeration of route sequences reaching `end`. Each step keeps
/// the first sample answer that selects its route, so answers leading down
/// the same route are explored once. Throws mica::cycle_error if a path
/// revisits a node.
[[nodiscard]] path_enumeration enumerate_paths(const dialog_script& script, std::size_t max_paths);

} // namespace mica::script
