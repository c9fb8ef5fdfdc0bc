#pragma once

#include <string>
#include <string_view>

namespace geoaudit::io {

/// Whole file as bytes. Throws Error("missing_input") if it cannot be opened.
std::string read_file(const std::string& path);

/// Writes to "<path>.tmp" and renames over `path`, so readers never see a
/// partial file.
void write_file_atomic(const std::string& path, std::string_view content);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace geoaudit::io
