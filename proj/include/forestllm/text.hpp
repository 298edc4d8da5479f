#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace forestllm::text {

/// `%.<digits>g` style rendering: at most `digits` significant digits, no
/// trailing zeros, and "-0" normalized to "0".
std::string format_significant(double value, int digits);

/// Shortest decimal that round-trips to the same double.
std::string format_shortest(double value);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split_lines(std::string_view s);

std::string read_file(const std::string& path);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::string_view content);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace forestllm::text
