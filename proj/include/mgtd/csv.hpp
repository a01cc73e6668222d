#pragma once

// Minimal RFC 4180 CSV reader/writer. Quoted fields may contain commas,
// CR/LF and doubled quotes; parse errors report the byte offset.

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mgtd/error.hpp"

namespace mgtd::csv {

using Row = std::vector<std::string>;

namespace detail {

// Parses the record starting at `pos`. Advances `pos` past the record and
// its terminator. Returns false at end of input.
inline bool parse_record(const std::string& data, std::size_t& pos, Row& out) {
    out.clear();
    if (pos >= data.size()) return false;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    const std::size_t n = data.size();
    while (pos < n) {
        char c = data[pos];
        if (in_quotes) {
            if (c == '"') {
                if (pos + 1 < n && data[pos + 1] == '"') {
                    field += '"';
                    pos += 2;
                } else {
                    in_quotes = false;
                    ++pos;
                    if (pos < n && data[pos] != ',' && data[pos] != '\n' &&
                        data[pos] != '\r') {
                        throw ParseError("malformed quoting at byte offset " +
                                         std::to_string(pos));
                    }
                }
            } else {
                field += c;
                ++pos;
            }
        } else if (c == '"') {
            if (!field.empty() || field_was_quoted)
                throw ParseError("malformed quoting at byte offset " +
                                 std::to_string(pos));
            in_quotes = true;
            field_was_quoted = true;
            ++pos;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
            field_was_quoted = false;
            ++pos;
        } else if (c == '\n' || c == '\r') {
            ++pos;
            if (c == '\r' && pos < n && data[pos] == '\n') ++pos;
            out.push_back(std::move(field));
            return true;
        } else {
            field += c;
            ++pos;
        }
    }
    if (in_quotes)
        throw ParseError("unterminated quoted field at byte offset " +
                         std::to_string(pos));
    out.push_back(std::move(field));
    return true;
}

}  // namespace detail

inline std::vector<Row> parse(const std::string& data) {
    std::vector<Row> rows;
    std::size_t pos = 0;
    Row row;
    while (detail::parse_record(data, pos, row)) {
        // a lone terminator produces one empty field; skip blank lines
        if (row.size() == 1 && row[0].empty()) continue;
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<Row> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

inline std::string escape(const std::string& field) {
    bool needs_quotes = field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline void write_file(const std::string& path, const std::vector<Row>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    for (const Row& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << escape(row[i]);
        }
        out << '\n';
    }
}

}  // namespace mgtd::csv
