#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace topicdyn::text {

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

} // namespace detail

/// Decodes UTF-8; invalid bytes map to U+FFFD.
inline std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        int extra = 0;
        char32_t cp = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c >> 4) == 0xE) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c >> 3) == 0x1E) {
            extra = 3;
            cp = c & 0x07;
        } else {
            out.push_back(U'�');
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            if (i + k >= s.size() || (static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        }
        if (!ok) {
            out.push_back(U'�');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

inline std::string encode_utf8(std::u32string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s)
        detail::append_utf8(out, cp);
    return out;
}

/// Lowercase for ASCII, Latin-1 and Cyrillic letters; other scripts pass through.
constexpr char32_t to_lower(char32_t c) noexcept {
    if (c >= U'A' && c <= U'Z')
        return c + 0x20;
    if ((c >= 0xC0 && c <= 0xDE && c != 0xD7))
        return c + 0x20;
    if (c >= 0x410 && c <= 0x42F)
        return c + 0x20;
    if (c >= 0x400 && c <= 0x40F)
        return c + 0x50;
    return c;
}

inline std::string lowercase(std::string_view s) {
    auto cps = decode_utf8(s);
    for (auto& c : cps)
        c = to_lower(c);
    return encode_utf8(cps);
}

constexpr bool is_space(char32_t c) noexcept {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0xA0 ||
           c == 0x2009 || c == 0x200B || c == 0x3000;
}

constexpr bool is_punct(char32_t c) noexcept {
    if (c < 0x80)
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
               (c >= 0x7B && c <= 0x7E);
    return c == 0xAB || c == 0xBB || c == 0xA1 || c == 0xBF || (c >= 0x2010 && c <= 0x2027) ||
           (c >= 0x2030 && c <= 0x205E) || c == 0xFFFD;
}

/// Splits on whitespace and trims punctuation from both ends of each piece.
inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    const auto cps = decode_utf8(s);
    std::size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && is_space(cps[i]))
            ++i;
        std::size_t j = i;
        while (j < cps.size() && !is_space(cps[j]))
            ++j;
        std::size_t b = i, e = j;
        while (b < e && is_punct(cps[b]))
            ++b;
        while (e > b && is_punct(cps[e - 1]))
            --e;
        if (e > b)
            out.push_back(encode_utf8(std::u32string_view(cps).substr(b, e - b)));
        i = j;
    }
    return out;
}

/// Sentence split: newlines always end a sentence; '.', '!', '?' end one when
/// followed by whitespace or end of text. Blank sentences are dropped.
inline std::vector<std::string> sentences(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        bool blank = true;
        for (char ch : cur)
            if (!(ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n'))
                blank = false;
        if (!blank)
            out.push_back(cur);
        cur.clear();
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char ch = s[i];
        if (ch == '\n') {
            flush();
            continue;
        }
        cur.push_back(ch);
        if ((ch == '.' || ch == '!' || ch == '?') &&
            (i + 1 == s.size() || s[i + 1] == ' ' || s[i + 1] == '\t' || s[i + 1] == '\n' || s[i + 1] == '\r'))
            flush();
    }
    flush();
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n'))
        ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n'))
        --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

} // namespace topicdyn::text
