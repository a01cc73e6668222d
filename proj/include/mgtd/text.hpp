#pragma once

// Word tokenization and contiguous n-gram extraction for the TF-IDF path.

#include <cstdint>
#include <cwctype>
#include <string>
#include <string_view>
#include <vector>

namespace mgtd {

namespace detail {

// Decodes one UTF-8 code point starting at `pos`; advances `pos`. Invalid
// bytes decode as U+FFFD and consume one byte.
inline char32_t decode_utf8(std::string_view s, std::size_t& pos) {
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    unsigned char b0 = byte(pos);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
    else { ++pos; return 0xFFFD; }
    if (pos + len > s.size()) { ++pos; return 0xFFFD; }
    for (int i = 1; i < len; ++i) {
        unsigned char b = byte(pos + i);
        if ((b & 0xC0) != 0x80) { ++pos; return 0xFFFD; }
        cp = (cp << 6) | (b & 0x3F);
    }
    pos += len;
    return cp;
}

inline void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// On glibc wchar_t is UCS-4, so the wide ctype functions classify code
// points directly.
inline bool is_word_char(char32_t cp) {
    if (cp < 0x80)
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
               (cp >= 'A' && cp <= 'Z');
    return std::iswalnum(static_cast<wint_t>(cp)) != 0;
}

inline char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    return static_cast<char32_t>(std::towlower(static_cast<wint_t>(cp)));
}

}  // namespace detail

// Maximal runs of >=2 alphanumeric code points, lowercased. Everything else
// separates tokens; single-character runs are dropped.
inline std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t run_len = 0;
    std::size_t pos = 0;
    auto flush = [&] {
        if (run_len >= 2) tokens.push_back(current);
        current.clear();
        run_len = 0;
    };
    while (pos < text.size()) {
        char32_t cp = detail::decode_utf8(text, pos);
        if (detail::is_word_char(cp)) {
            detail::encode_utf8(detail::to_lower(cp), current);
            ++run_len;
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

// All contiguous n-grams for n in [min_n, max_n], each joined by single
// spaces, grouped by n and in positional order within each n.
inline std::vector<std::string> extract_ngrams(
    const std::vector<std::string>& tokens, std::size_t min_n = 2,
    std::size_t max_n = 3) {
    std::vector<std::string> grams;
    for (std::size_t n = min_n; n <= max_n; ++n) {
        if (tokens.size() < n) break;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string g = tokens[i];
            for (std::size_t j = 1; j < n; ++j) {
                g += ' ';
                g += tokens[i + j];
            }
            grams.push_back(std::move(g));
        }
    }
    return grams;
}

}  // namespace mgtd
