#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace zsl {

/// A semicolon-delimited table with a header row. Fields containing the
/// delimiter, quotes or line breaks are double-quoted with "" escapes.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(std::string_view name) const;
};

constexpr char kDelimiter = ';';

Table parse_table(std::string_view text);
Table read_table(const std::filesystem::path& path);

void write_table(std::ostream& out, const Table& table);
void write_table(const std::filesystem::path& path, const Table& table);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

} // namespace zsl
