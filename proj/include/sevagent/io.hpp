#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sevagent {

using CsvRow = std::vector<std::string>;

/// RFC 4180 reader: comma separated, double-quoted fields may contain commas,
/// doubled quotes and line breaks. A leading UTF-8 BOM is skipped.
std::vector<CsvRow> parse_csv(std::string_view text);
std::vector<CsvRow> read_csv_file(const std::filesystem::path& path);

/// Quotes a field only when it contains a delimiter, quote, or line break.
std::string csv_escape(std::string_view field);
std::string csv_line(const CsvRow& row);

std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never observe a
/// half-written artifact. Throws Error(UnwritableOutput).
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
/// Fixed-point text with the given number of decimals.
std::string format_fixed(double value, int decimals);

}  // namespace sevagent
