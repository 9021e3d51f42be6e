#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eagle::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by header name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

// Reads a comma-separated file with a header row. Quoted fields are not
// supported; blank lines are skipped. Throws MissingFile / ParseError.
Table read(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

// Strict decimal parse; throws ParseError naming `where` on garbage.
double parse_double(std::string_view text, const std::string& where);

// Shortest representation that round-trips a double exactly.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace eagle::csv
