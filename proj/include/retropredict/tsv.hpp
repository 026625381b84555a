#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "retropredict/util.hpp"

namespace retro {

// Minimal TSV reader: UTF-8, mandatory header row, '#' comment lines and
// blank lines skipped. Keeps line numbers for diagnostics.
class TsvReader {
public:
    explicit TsvReader(const std::string& path) : path_(path), in_(path) {
        if (!in_) throw DataError("cannot open file: " + path);
        std::string header;
        while (std::getline(in_, header)) {
            ++line_no_;
            strip_cr(header);
            if (header.empty() || header[0] == '#') continue;
            split(header, columns_);
            break;
        }
        if (columns_.empty()) throw DataError(path + ": missing header row");
        for (std::size_t i = 0; i < columns_.size(); ++i) index_[columns_[i]] = i;
    }

    const std::vector<std::string>& columns() const { return columns_; }

    std::size_t column(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DataError(path_ + ": missing required column '" + name + "'");
        return it->second;
    }

    bool has_column(const std::string& name) const { return index_.count(name) > 0; }

    // Reads the next data row into fields; returns false at EOF.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            strip_cr(line);
            if (line.empty() || line[0] == '#') continue;
            split(line, fields);
            if (fields.size() < columns_.size())
                throw DataError(row_context() + ": expected " + std::to_string(columns_.size()) +
                                " fields, got " + std::to_string(fields.size()));
            return true;
        }
        return false;
    }

    std::size_t line_number() const { return line_no_; }

    std::string row_context() const { return path_ + ":" + std::to_string(line_no_); }

    double parse_double(const std::string& field, const std::string& what) const {
        double v = 0.0;
        auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || p != field.data() + field.size())
            throw DataError(row_context() + ": bad " + what + " value '" + field + "'");
        return v;
    }

private:
    static void strip_cr(std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    }
    static void split(const std::string& line, std::vector<std::string>& out) {
        out.clear();
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                out.emplace_back(line.substr(start));
                break;
            }
            out.emplace_back(line.substr(start, tab - start));
            start = tab + 1;
        }
    }

    std::string path_;
    std::ifstream in_;
    std::vector<std::string> columns_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t line_no_ = 0;
};

inline std::vector<std::string> split_list(const std::string& s, char sep = ';') {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            if (pos != start || start < s.size()) out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fixed-width floating formatter used for all numeric text output; 17
// significant digits round-trip doubles exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace retro
