#ifndef DCOT_DISCRIMINATOR_HPP
#define DCOT_DISCRIMINATOR_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "text.hpp"

namespace dcot {

namespace bm25 {
inline constexpr double k1 = 1.2;
inline constexpr double b = 0.75;
inline constexpr double k_sat = 2.0;

inline double idf(double n_docs, double df) { return std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5)); }
} // namespace bm25

/// Lower-cased alphanumeric runs plus the arithmetic operators as single-character terms.
inline std::vector<std::string> analyze(std::string_view s)
{
    std::vector<std::string> terms;
    std::string cur;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
            continue;
        }
        if (!cur.empty())
            terms.push_back(std::move(cur)), cur.clear();
        if (ch == '+' || ch == '-' || ch == '*' || ch == '/' || ch == '^' || ch == '=')
            terms.emplace_back(1, ch);
    }
    if (!cur.empty())
        terms.push_back(std::move(cur));
    return terms;
}

/// Lower-case, whitespace collapsed, trailing '?' / '.' dropped.
inline std::string normalize_question(std::string_view s)
{
    std::string out;
    bool pending_space = false;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out += ' ';
        pending_space = false;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    while (!out.empty() && (out.back() == '?' || out.back() == '.' || out.back() == ' '))
        out.pop_back();
    return out;
}

/*
 * Question/answer store scored with BM25 (k1 = 1.2, b = 0.75).
 *
 * Each fact's collection statistics (document count, mean length, document
 * frequency of its own terms) are frozen when the fact is inserted, so
 * appending a fact never changes the score of an existing one and the
 * best-match confidence can only grow. For a single-fact store this is
 * plain BM25.
 */
class FactStore {
public:
    struct Fact {
        std::string question;
        std::string answer;
        std::string normalized;
        std::map<std::string, int> tf;
        double length = 0.0;
        double n_docs = 0.0;       // collection size at insertion
        double avg_length = 0.0;   // mean length at insertion
        std::map<std::string, double> df; // df of this fact's terms at insertion
    };

    void add(std::string question, std::string answer)
    {
        Fact f;
        f.normalized = normalize_question(question);
        for (auto& term : analyze(question))
            ++f.tf[term];
        f.length = 0.0;
        for (const auto& [_, n] : f.tf)
            f.length += n;
        total_length_ += f.length;
        for (const auto& [term, _] : f.tf)
            ++df_[term];
        f.n_docs = static_cast<double>(facts_.size() + 1);
        f.avg_length = total_length_ / f.n_docs;
        for (const auto& [term, _] : f.tf)
            f.df[term] = df_[term];
        f.question = std::move(question);
        f.answer = std::move(answer);
        facts_.push_back(std::move(f));
    }

    const std::vector<Fact>& facts() const noexcept { return facts_; }
    bool empty() const noexcept { return facts_.empty(); }
    std::size_t size() const noexcept { return facts_.size(); }

    /// Current document frequency of a term over the whole store.
    int document_frequency(const std::string& term) const
    {
        auto it = df_.find(term);
        return it == df_.end() ? 0 : it->second;
    }

    double score(std::string_view query, std::size_t fact) const
    {
        const Fact& f = facts_.at(fact);
        auto terms = analyze(query);
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
        double s = 0.0;
        for (const auto& term : terms) {
            auto it = f.tf.find(term);
            if (it == f.tf.end())
                continue;
            const double tf = it->second;
            const double norm = bm25::k1 * (1.0 - bm25::b + bm25::b * f.length / f.avg_length);
            s += bm25::idf(f.n_docs, f.df.at(term)) * tf * (bm25::k1 + 1.0) / (tf + norm);
        }
        return s;
    }

    struct Match {
        std::size_t fact = 0;
        double p_fact = 0.0;
    };

    /// Best fact for the query; nullopt on an empty store.
    std::optional<Match> best_match(std::string_view query) const
    {
        if (facts_.empty())
            return std::nullopt;
        const std::string nq = normalize_question(query);
        for (std::size_t i = 0; i < facts_.size(); ++i)
            if (facts_[i].normalized == nq)
                return Match{i, 1.0};
        Match best;
        double best_score = -1.0;
        for (std::size_t i = 0; i < facts_.size(); ++i) {
            const double s = score(query, i);
            if (s > best_score) {
                best_score = s;
                best.fact = i;
            }
        }
        best.p_fact = best_score / (best_score + bm25::k_sat);
        return best;
    }

private:
    std::vector<Fact> facts_;
    std::map<std::string, int> df_;
    double total_length_ = 0.0;
};

/// Reads "question<TAB>answer" lines; blank lines are ignored.
inline FactStore parse_fact_corpus(std::string_view body)
{
    FactStore store;
    int line_no = 0;
    for (const auto& raw : text::split(body, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (text::trim(line).empty())
            continue;
        auto tab = line.find('\t');
        if (tab == std::string_view::npos)
            throw ParseError("fact line " + std::to_string(line_no) + ": expected question<TAB>answer");
        store.add(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
    }
    return store;
}

inline FactStore read_fact_corpus(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read fact corpus '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_fact_corpus(ss.str());
}

inline double fact_confidence(std::string_view query, const FactStore& store)
{
    auto m = store.best_match(query);
    return m ? m->p_fact : 0.0;
}

/*
 * Structural complexity of a query:
 *   binary operators + max ()/[] nesting depth + outermost [...] literals.
 * Queries with no digits, operators or brackets count as free text and
 * score ceil(words / 10).
 */
inline int complexity_score(std::string_view query)
{
    const std::string_view mathy = "0123456789+-*/^()[]=";
    if (query.find_first_of(mathy) == std::string_view::npos) {
        int words = 0;
        bool in_word = false;
        for (char ch : query) {
            const bool ws = std::isspace(static_cast<unsigned char>(ch)) != 0;
            if (!ws && !in_word)
                ++words;
            in_word = !ws;
        }
        return (words + 9) / 10;
    }
    int ops = 0, depth = 0, max_depth = 0, literals = 0, bracket_depth = 0;
    char prev = 0; // last non-space character
    for (char ch : query) {
        if (std::isspace(static_cast<unsigned char>(ch)))
            continue;
        const bool operand_before = prev != 0
            && (std::isalnum(static_cast<unsigned char>(prev)) || prev == ')' || prev == ']' || prev == '.');
        switch (ch) {
        case '*': case '/': case '^':
            ++ops;
            break;
        case '+': case '-':
            if (operand_before)
                ++ops;
            break;
        case '(':
            max_depth = std::max(max_depth, ++depth);
            break;
        case '[':
            if (bracket_depth++ == 0)
                ++literals;
            max_depth = std::max(max_depth, ++depth);
            break;
        case ')':
            depth = std::max(0, depth - 1);
            break;
        case ']':
            depth = std::max(0, depth - 1);
            bracket_depth = std::max(0, bracket_depth - 1);
            break;
        default:
            break;
        }
        prev = ch;
    }
    return ops + max_depth + literals;
}

enum class Decision { direct, needs_cot };

struct DiscriminatorVerdict {
    double p_fact = 0.0;
    int c_comp = 0;
    Decision decision = Decision::needs_cot;
    std::string answer; // set when decision == direct
};

/// The two-threshold case rule.
inline Decision decide(double p_fact, int c_comp, const DCoTConfig& cfg)
{
    return (p_fact >= cfg.p_fact_min && c_comp <= cfg.c_comp_max) ? Decision::direct : Decision::needs_cot;
}

inline DiscriminatorVerdict discriminate(std::string_view query, const FactStore& store, const DCoTConfig& cfg)
{
    DiscriminatorVerdict v;
    v.c_comp = complexity_score(query);
    auto m = store.best_match(query);
    v.p_fact = m ? m->p_fact : 0.0;
    v.decision = m ? decide(v.p_fact, v.c_comp, cfg) : Decision::needs_cot;
    if (v.decision == Decision::direct)
        v.answer = store.facts()[m->fact].answer;
    return v;
}

} // namespace dcot

#endif
