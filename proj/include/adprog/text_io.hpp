#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace adprog {

// Shortest representation that parses back to the same double.
std::string format_exact(double value);
// Fixed-point with `digits` decimals.
std::string format_fixed(double value, int digits = 6);

// Whole-token parse; std::nullopt-like failure reported via `ok`.
bool parse_double(std::string_view text, double& out);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view text);

// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace adprog
