/**
 * @file error.hpp
 * @brief Exception types shared by every mica module
 *
 * Each exception carries a stable machine-readable code. The C API maps
 * these onto mica_status values; the HTTP layer maps them onto status
 * codes and snake_case error strings.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mica {

class mica_error : public std::runtime_error {
public:
    mica_error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Raised by the DSL parser. Line and column are 1-based.
class syntax_error : public mica_error {
public:
    syntax_error(std::size_t line, std::size_t column, std::string expected)
        : mica_error("SyntaxError", "line " + std::to_string(line) + ", column " +
                                        std::to_string(column) + ": expected " + expected),
          line_(line),
          column_(column),
          expected_(std::move(expected)) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }
    [[nodiscard]] const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string expected_;
};

class duplicate_id_error : public mica_error {
public:
    duplicate_id_error(std::size_t line, std::size_t column, const std::string& id)
        : mica_error("DuplicateId", "line " + std::to_string(line) + ", column " +
                                        std::to_string(column) + ": duplicate id '" + id + "'"),
          line_(line),
          id_(id) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& id() const noexcept { return id_; }

private:
    std::size_t line_;
    std::string id_;
};

class cycle_error : public mica_error {
public:
    explicit cycle_error(const std::string& node)
        : mica_error("CycleDetected", "cycle through node '" + node + "'"), node_(node) {}

    [[nodiscard]] const std::string& node() const noexcept { return node_; }

private:
    std::string node_;
};

class replay_divergence : public mica_error {
public:
    replay_divergence(std::size_t index, const std::string& detail)
        : mica_error("ReplayDivergence",
                     "replay diverged at entry " + std::to_string(index) + ": " + detail),
          index_(index) {}

    [[nodiscard]] std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

} // namespace mica
