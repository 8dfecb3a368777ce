#include "zsl/table.hpp"

#include "zsl/error.hpp"

#include <fstream>
#include <sstream>

namespace zsl {

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

Table parse_table(std::string_view text) {
    // Strip a UTF-8 byte order mark.
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") {
        text.remove_prefix(3);
    }

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // A lone empty field is a blank line.
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
        }
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == kDelimiter) {
            end_field();
        } else if (c == '\n') {
            end_record();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') {
                continue;
            }
            end_record();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) {
        throw DataError("unterminated quoted field");
    }
    if (field_started || !field.empty() || !record.empty()) {
        end_record();
    }

    Table table;
    if (records.empty()) {
        return table;
    }
    table.header = std::move(records.front());
    table.rows.assign(std::make_move_iterator(records.begin() + 1),
                      std::make_move_iterator(records.end()));
    return table;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

Table read_table(const std::filesystem::path& path) {
    try {
        return parse_table(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

namespace {

void write_field(std::ostream& out, const std::string& f) {
    if (f.find_first_of(";\"\n\r") == std::string::npos) {
        out << f;
        return;
    }
    out << '"';
    for (char c : f) {
        if (c == '"') {
            out << '"';
        }
        out << c;
    }
    out << '"';
}

void write_record(std::ostream& out, const std::vector<std::string>& rec) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (i) {
            out << kDelimiter;
        }
        write_field(out, rec[i]);
    }
    // A record with one empty field would read back as a blank line.
    if (rec.size() == 1 && rec[0].empty()) {
        out << "\"\"";
    }
    out << '\n';
}

} // namespace

void write_table(std::ostream& out, const Table& table) {
    write_record(out, table.header);
    for (const auto& r : table.rows) {
        write_record(out, r);
    }
}

void write_table(const std::filesystem::path& path, const Table& table) {
    std::ostringstream ss;
    write_table(ss, table);
    write_file(path, ss.str());
}

} // namespace zsl
