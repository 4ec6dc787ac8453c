#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "spar/errors.hpp"

namespace spar::csv {

// Shortest round-trip decimal form, locale independent.  All file output
// goes through these so repeated runs are byte identical.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw error("number formatting failed");
    return std::string(buf, ptr);
}

inline std::string format_int(std::int64_t v) {
    char buf[24];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw error("number formatting failed");
    return std::string(buf, ptr);
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    std::int64_t v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

/// Split one CSV line.  Handles double-quoted fields with embedded commas
/// and doubled quotes; no multi-line fields.
inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string quote_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += "\"\"";
        else q += ch;
    }
    q += '"';
    return q;
}

/// Line-oriented CSV reader.  Strips trailing '\r' so CRLF inputs work.
class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path) {
        if (!in_) throw data_error("cannot open file: " + path.string());
    }

    /// Returns false at end of input.  `line_number` is 1-based and counts
    /// the header as line 1.
    bool next(std::vector<std::string>& fields, std::size_t& line_number) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields = split_line(line);
            line_number = line_;
            return true;
        }
        return false;
    }

private:
    std::ifstream in_;
    std::size_t line_ = 0;
};

/// Writes the full content to `path + ".tmp"` and renames, so readers never
/// observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace spar::csv
