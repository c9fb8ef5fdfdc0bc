#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace geoaudit {

/// Broad classes of failure. The CLI maps `input`-class errors to exit code 2
/// and `invariant`-class errors to exit code 3.
enum class ErrorClass { input, invariant };

/// Base of every error the library throws. `code()` is a short stable token
/// (e.g. "overlap", "no_coverage") used in machine-readable error output.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message, ErrorClass cls = ErrorClass::input)
        : std::runtime_error(message), code_(std::move(code)), class_(cls) {}

    const std::string& code() const noexcept { return code_; }
    ErrorClass error_class() const noexcept { return class_; }

private:
    std::string code_;
    ErrorClass class_;
};

/// Record-level problem in a delimited text or JSON input.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("parse", "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Timestamp not covered by any snapshot validity window.
class NoCoverageError : public Error {
public:
    NoCoverageError(std::int64_t t, std::int64_t nearest_from, std::int64_t nearest_to)
        : Error("no_coverage",
                "timestamp " + std::to_string(t) + " outside every snapshot window; nearest is [" +
                    std::to_string(nearest_from) + ", " + std::to_string(nearest_to) + ")"),
          nearest_from_(nearest_from), nearest_to_(nearest_to) {}

    std::int64_t nearest_from() const noexcept { return nearest_from_; }
    std::int64_t nearest_to() const noexcept { return nearest_to_; }

private:
    std::int64_t nearest_from_;
    std::int64_t nearest_to_;
};

/// Not enough data for a statistic to be defined (e.g. fewer than two cells).
class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& message)
        : Error("insufficient_data", message) {}
};

/// Inputs that contradict each other (sample vs. snapshot, ambiguous regions).
class ConsistencyError : public Error {
public:
    ConsistencyError(std::string code, const std::string& message)
        : Error(std::move(code), message, ErrorClass::invariant) {}
};

}  // namespace geoaudit
