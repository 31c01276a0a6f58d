#ifndef DCOT_TEXT_HPP
#define DCOT_TEXT_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "error.hpp"

namespace dcot::text {

/// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Fixed-point rendering for human-readable tables.
inline std::string format_fixed(double v, int digits)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what)
{
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(std::string(what) + ": not a number: '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what)
{
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(std::string(what) + ": not an unsigned integer: '" + std::string(s) + "'");
    return v;
}

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Double-quoted string with \" \\ \n \t escapes.
inline std::string quote(std::string_view s)
{
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    out += '"';
    return out;
}

/// Inverse of quote(). `pos` points at the opening quote and is advanced past the closing one.
inline std::string unquote(std::string_view s, std::size_t& pos)
{
    if (pos >= s.size() || s[pos] != '"')
        throw ParseError("expected '\"'");
    std::string out;
    ++pos;
    while (pos < s.size()) {
        char c = s[pos++];
        if (c == '"')
            return out;
        if (c == '\\') {
            if (pos >= s.size())
                break;
            char e = s[pos++];
            switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            default: throw ParseError(std::string("bad escape \\") + e);
            }
        } else {
            out += c;
        }
    }
    throw ParseError("unterminated string");
}

/// Splits `key=value key="quoted value" ...` into ordered pairs.
inline std::vector<std::pair<std::string, std::string>> parse_fields(std::string_view line)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos])))
            ++pos;
        if (pos >= line.size())
            break;
        auto eq = line.find('=', pos);
        if (eq == std::string_view::npos)
            throw ParseError("field without '=': '" + std::string(line.substr(pos)) + "'");
        std::string key(line.substr(pos, eq - pos));
        if (key.empty() || key.find_first_of(" \t\"") != std::string::npos)
            throw ParseError("bad field name '" + key + "'");
        pos = eq + 1;
        std::string value;
        if (pos < line.size() && line[pos] == '"') {
            value = unquote(line, pos);
        } else {
            auto end = pos;
            while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end])))
                ++end;
            value = std::string(line.substr(pos, end - pos));
            pos = end;
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

} // namespace dcot::text

#endif
