#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <nlohmann/json.hpp>

namespace topicdyn {

using json = nlohmann::json;

/// Fixed-point decimal text. glibc printf rounds the exact binary value and
/// resolves exact ties to even. Negative zero prints as zero.
inline std::string format_fixed(double v, int decimals = 6) {
    if (!std::isfinite(v))
        return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos)
        s.erase(0, 1);
    return s;
}

namespace detail {

inline void canonical_dump(const json& j, std::string& out, int indent, int depth) {
    const auto pad = [&](int d) { out.append(static_cast<std::size_t>(indent * d), ' '); };
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first)
                out += ",\n";
            first = false;
            pad(depth + 1);
            out += json(it.key()).dump();
            out += ": ";
            canonical_dump(it.value(), out, indent, depth + 1);
        }
        out += '\n';
        pad(depth);
        out += '}';
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i)
                out += ",\n";
            pad(depth + 1);
            canonical_dump(j[i], out, indent, depth + 1);
        }
        out += '\n';
        pad(depth);
        out += ']';
        return;
    }
    case json::value_t::number_float:
        out += format_fixed(j.get<double>(), 6);
        return;
    default:
        out += j.dump();
        return;
    }
}

} // namespace detail

/// Deterministic JSON text: sorted keys, two-space indent, floats with six
/// decimals. Parsing the output and dumping again reproduces it byte for byte.
inline std::string canonical_json(const json& j) {
    std::string out;
    detail::canonical_dump(j, out, 2, 0);
    out += '\n';
    return out;
}

} // namespace topicdyn
