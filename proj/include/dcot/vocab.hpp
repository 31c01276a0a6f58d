#ifndef DCOT_VOCAB_HPP
#define DCOT_VOCAB_HPP

#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace dcot {

/*
 * Fixed vocabulary over a small arithmetic / linear-algebra DSL.
 *
 *   0        <pad>
 *   1        <eos>   end of answer
 *   2, 3     " " and "\n"
 *   4..97    printable ASCII '!'..'~'
 *   98..129  byte fallback: <hi:X> then <lo:Y> encodes byte 0xXY
 *   130..    multi-character DSL words (greedy longest match)
 *
 * Tokenization first normalizes whitespace: a run containing a newline
 * becomes "\n", any other run becomes " ", and the ends are trimmed.
 */
class Vocabulary {
public:
    static constexpr TokenId pad = 0;
    static constexpr TokenId eos = 1;
    static constexpr TokenId space = 2;
    static constexpr TokenId newline = 3;
    static constexpr std::size_t max_size = 256;

    Vocabulary()
    {
        add("<pad>");
        add("<eos>");
        add(" ");
        add("\n");
        for (char c = '!'; c <= '~'; ++c)
            add(std::string(1, c));
        hi_base_ = static_cast<TokenId>(entries_.size());
        for (int i = 0; i < 16; ++i)
            add("<hi:" + hex(i) + ">");
        lo_base_ = static_cast<TokenId>(entries_.size());
        for (int i = 0; i < 16; ++i)
            add("<lo:" + hex(i) + ">");
        for (std::string_view w : words())
            add_word(std::string(w));
        if (entries_.size() > max_size)
            throw IntegrityError("vocabulary exceeds 256 entries");
    }

    std::size_t size() const noexcept { return entries_.size(); }

    const std::string& entry(TokenId id) const
    {
        if (id < 0 || static_cast<std::size_t>(id) >= entries_.size())
            throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
        return entries_[static_cast<std::size_t>(id)];
    }

    /// Id of an exact entry; throws IndexError when absent.
    TokenId id(std::string_view s) const
    {
        auto it = index_.find(std::string(s));
        if (it == index_.end())
            throw IndexError("no vocabulary entry '" + std::string(s) + "'");
        return it->second;
    }

    bool contains(std::string_view s) const { return index_.count(std::string(s)) != 0; }

    static std::string normalize(std::string_view s)
    {
        std::string out;
        std::size_t i = 0;
        while (i < s.size()) {
            if (is_ws(s[i])) {
                bool nl = false;
                while (i < s.size() && is_ws(s[i])) {
                    nl = nl || s[i] == '\n';
                    ++i;
                }
                if (!out.empty() && i < s.size())
                    out += nl ? '\n' : ' ';
            } else {
                out += s[i++];
            }
        }
        return out;
    }

    TokenSeq tokenize(std::string_view query) const
    {
        const std::string s = normalize(query);
        TokenSeq out;
        std::size_t i = 0;
        while (i < s.size()) {
            std::size_t best_len = 0;
            TokenId best = pad;
            for (std::size_t len = std::min(max_word_len_, s.size() - i); len >= 2; --len) {
                auto it = words_.find(s.substr(i, len));
                if (it != words_.end()) {
                    best_len = len;
                    best = it->second;
                    break;
                }
            }
            if (best_len == 0) {
                const auto c = static_cast<unsigned char>(s[i]);
                if (c == ' ')
                    best = space;
                else if (c == '\n')
                    best = newline;
                else if (c >= '!' && c <= '~')
                    best = static_cast<TokenId>(4 + (c - '!'));
                else {
                    out.push_back(hi_base_ + (c >> 4));
                    out.push_back(lo_base_ + (c & 0xF));
                    ++i;
                    continue;
                }
                best_len = 1;
            }
            out.push_back(best);
            i += best_len;
        }
        return out;
    }

    /// Concatenates entries; <pad> and <eos> render as nothing.
    std::string detokenize(const TokenSeq& tokens) const
    {
        std::string out;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const TokenId t = tokens[i];
            if (t == pad || t == eos)
                continue;
            if (t >= hi_base_ && t < hi_base_ + 16) {
                int hi = t - hi_base_;
                int lo = 0;
                if (i + 1 < tokens.size() && tokens[i + 1] >= lo_base_ && tokens[i + 1] < lo_base_ + 16)
                    lo = tokens[++i] - lo_base_;
                out += static_cast<char>((hi << 4) | lo);
                continue;
            }
            if (t >= lo_base_ && t < lo_base_ + 16)
                continue; // orphan low nibble
            out += entry(t);
        }
        return out;
    }

    bool is_whitespace(TokenId t) const noexcept { return t == space || t == newline; }

private:
    static bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

    static std::string hex(int v) { return std::string(1, "0123456789ABCDEF"[v]); }

    static const std::vector<std::string_view>& words()
    {
        static const std::vector<std::string_view> w = {
            "det", "rank", "trace", "inv", "matrix", "vector", "vectors", "transpose", "the", "is", "of",
            "and", "so", "by", "row", "rows", "column", "columns", "pivot", "pivots", "eliminate",
            "elimination", "determinant", "product", "identity", "answer", "since", "each", "check",
            "recall", "restate", "we", "that", "with", "for", "are", "to", "in", "then", "has", "equals",
            "equal", "zero", "one", "two", "three", "four", "lower", "upper", "triangular", "unit",
            "diagonal", "independent", "dependent", "combination", "span", "nullspace", "solution",
            "particular", "free", "basis", "multiply", "compute", "therefore", "hence", "note", "again",
            "value", "values", "entries", "entry", "sum", "square", "linear", "problem",
            "find", "first", "second", "third", "step", "result",
            "because", "not", "all", "inverse", "term", "terms", "cyclic", "property",
            "holds", "evaluate", "evaluates", "computed", "substitute", "back", "nonzero", "invertible",
            "multiplicative", "factor", "factors", "as", "no",
            "if", "this", "form", "echelon", "reduced", "parameter", "consistent", "inconsistent",
            "det(", "inv(", "trace(", "rank(", "==", "<=", ">=", "->", "x^T", "^-1"};
        return w;
    }

    void add(std::string s)
    {
        index_.emplace(s, static_cast<TokenId>(entries_.size()));
        entries_.push_back(std::move(s));
    }

    void add_word(std::string s)
    {
        if (index_.count(s))
            return;
        max_word_len_ = std::max(max_word_len_, s.size());
        words_.emplace(s, static_cast<TokenId>(entries_.size()));
        add(std::move(s));
    }

    std::vector<std::string> entries_;
    std::unordered_map<std::string, TokenId> index_;
    std::unordered_map<std::string, TokenId> words_;
    std::size_t max_word_len_ = 1;
    TokenId hi_base_ = 0;
    TokenId lo_base_ = 0;
};

/// Process-wide shared vocabulary (immutable).
inline const Vocabulary& vocabulary()
{
    static const Vocabulary v;
    return v;
}

inline TokenSeq tokenize(std::string_view query) { return vocabulary().tokenize(query); }
inline std::string detokenize(const TokenSeq& tokens) { return vocabulary().detokenize(tokens); }

/// Number of non-whitespace tokens.
inline std::size_t content_token_count(const TokenSeq& tokens)
{
    std::size_t n = 0;
    for (TokenId t : tokens)
        n += vocabulary().is_whitespace(t) ? 0 : 1;
    return n;
}

} // namespace dcot

#endif
