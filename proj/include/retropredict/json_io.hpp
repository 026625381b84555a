#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "retropredict/tsv.hpp"
#include "retropredict/util.hpp"

namespace retro {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline void dump_json_rec(const ordered_json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent) * (depth + 1), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent) * depth, ' ');
    switch (j.type()) {
        case nlohmann::detail::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad;
                out += ordered_json(it.key()).dump();
                out += ": ";
                dump_json_rec(it.value(), out, indent, depth + 1);
            }
            out += "\n" + close_pad + "}";
            return;
        }
        case nlohmann::detail::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            bool first = true;
            for (const auto& el : j) {
                if (!first) out += ",\n";
                first = false;
                out += pad;
                dump_json_rec(el, out, indent, depth + 1);
            }
            out += "\n" + close_pad + "]";
            return;
        }
        case nlohmann::detail::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                out += "null";
                return;
            }
            out += format_double(v);
            return;
        }
        default:
            out += j.dump();
            return;
    }
}

}  // namespace detail

// Serializes with insertion-ordered keys and doubles printed with 17
// significant digits, so identical values always produce identical bytes.
inline std::string dump_json(const ordered_json& j, int indent = 2) {
    std::string out;
    detail::dump_json_rec(j, out, indent, 0);
    out += "\n";
    return out;
}

inline ordered_json parse_json_file(const std::string& path) {
    return ordered_json::parse(read_text_file(path));
}

}  // namespace retro
