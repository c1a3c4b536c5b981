#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fra::csv {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
/// Strict parse of a full field; throws InputError naming `context` on failure.
double parse_double(std::string_view text, std::string_view context);

std::vector<std::string> split_line(std::string_view line);

struct Table {
    std::vector<std::string> header;
    /// (1-based line number, fields)
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

/// Reads a comma-separated file with a header row. Blank lines are skipped.
/// An empty file yields an empty header and no rows.
Table read_table(const std::filesystem::path& path);

/// Writes text to a file, creating parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace fra::csv
