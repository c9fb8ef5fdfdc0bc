#pragma once

// Small helpers for the comma-delimited formats the toolkit reads and writes.
// Fields are never quoted; a comma always separates fields.

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geoaudit::text {

std::vector<std::string_view> split(std::string_view line, char sep = ',');

std::string_view trim(std::string_view s);

std::string to_lower(std::string_view s);

std::optional<double> parse_double(std::string_view s);

std::optional<std::int64_t> parse_int64(std::string_view s);

std::optional<std::uint64_t> parse_uint64(std::string_view s);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Reads lines from a stream, stripping a trailing '\r' and counting
/// 1-based line numbers.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line);
    std::size_t line_number() const noexcept { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

/// Throws ParseError(line 1) unless the header row matches `expected` exactly.
void expect_header(LineReader& reader, std::string_view expected);

}  // namespace geoaudit::text
