#ifndef DCOT_BACKEND_HPP
#define DCOT_BACKEND_HPP

#include <algorithm>
#include <cctype>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "model.hpp"
#include "scripted.hpp"
#include "types.hpp"
#include "vocab.hpp"

namespace dcot {

/// Generator behind the decoding loop. One instance per session.
class Backend {
public:
    virtual ~Backend() = default;

    /// Next raw block: at most `max_tokens` tokens, conditioned on `prefix`.
    virtual CoTSegment next_block(const TokenSeq& prefix, std::size_t block_size, std::size_t max_tokens) = 0;

    /// True once the backend has emitted its answer segment.
    virtual bool exhausted() const = 0;

    /// Reference sets of the segments still to come (empty when unknown).
    virtual std::vector<std::set<std::string>> later_references() const = 0;
};

/// |distinct segment tokens ∩ distinct oracle tokens| / |distinct oracle tokens|, whitespace ignored.
inline double answer_overlap_reward(const TokenSeq& segment, const TokenSeq& oracle)
{
    const auto& v = vocabulary();
    std::set<TokenId> want, have;
    for (TokenId t : oracle)
        if (!v.is_whitespace(t))
            want.insert(t);
    if (want.empty())
        return 0.0;
    for (TokenId t : segment)
        if (want.count(t))
            have.insert(t);
    return static_cast<double>(have.size()) / static_cast<double>(want.size());
}

/// Replays a ScriptedTrace one segment per block.
class ScriptedBackend : public Backend {
public:
    /// `signals` (optional) supplies token-level I_t for every replayed segment.
    explicit ScriptedBackend(ScriptedTrace trace, const TinyMoeModel* signals = nullptr)
        : trace_(std::move(trace)), signals_(signals)
    {
        check_trace(trace_);
    }

    CoTSegment next_block(const TokenSeq&, std::size_t, std::size_t max_tokens) override
    {
        CoTSegment seg = scripted_step(trace_, cursor_++);
        if (seg.tokens.size() > max_tokens) {
            seg.tokens.resize(max_tokens);
            seg.text = detokenize(seg.tokens);
        }
        if (signals_)
            seg.token_importance = signals_->token_signals(seg.tokens);
        else
            seg.token_importance.assign(seg.tokens.size(), seg.gating_score);
        return seg;
    }

    bool exhausted() const override { return cursor_ >= trace_.segments.size(); }

    std::vector<std::set<std::string>> later_references() const override
    {
        std::vector<std::set<std::string>> out;
        for (std::size_t i = cursor_; i < trace_.segments.size(); ++i)
            out.push_back(trace_.segments[i].references);
        return out;
    }

    const ScriptedTrace& trace() const noexcept { return trace_; }

private:
    ScriptedTrace trace_;
    const TinyMoeModel* signals_;
    std::size_t cursor_ = 0;
};

/// Identifiers assigned with "name =" (introduces) and earlier-introduced names used (references).
inline std::pair<std::set<std::string>, std::set<std::string>> extract_identifiers(
    std::string_view text, const std::set<std::string>& known)
{
    std::set<std::string> intro, refs;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (!(std::isalpha(c) || c == '_')) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
            ++j;
        std::string name(text.substr(i, j - i));
        std::size_t k = j;
        while (k < text.size() && text[k] == ' ')
            ++k;
        const bool assigned = k < text.size() && text[k] == '=' && (k + 1 >= text.size() || text[k + 1] != '=');
        if (assigned)
            intro.insert(name);
        else if (known.count(name))
            refs.insert(name);
        i = j;
    }
    return {intro, refs};
}

/*
 * Greedy decoding from the tiny MoE stack. A block ends at block_size
 * tokens, a newline, <eos> (which marks the answer segment) or the budget.
 */
class MoeBackend : public Backend {
public:
    MoeBackend(const TinyMoeModel& model, TokenSeq oracle_tokens)
        : model_(model), oracle_(std::move(oracle_tokens))
    {
    }

    CoTSegment next_block(const TokenSeq& prefix, std::size_t block_size, std::size_t max_tokens) override
    {
        const std::size_t limit = std::min(block_size, max_tokens);
        TokenSeq ctx = prefix;
        TokenSeq block;
        bool answered = false;
        while (block.size() < limit) {
            const TokenSeq window = tail(ctx);
            const ForwardResult f = model_.next_token_logits(window);
            TokenId best = Vocabulary::eos;
            for (std::size_t id = 1; id < f.logits.size(); ++id)
                if (f.logits[id] > f.logits[static_cast<std::size_t>(best)])
                    best = static_cast<TokenId>(id);
            if (best == Vocabulary::eos) {
                answered = true;
                break;
            }
            block.push_back(best);
            ctx.push_back(best);
            if (best == Vocabulary::newline)
                break;
        }

        CoTSegment seg;
        seg.id = step_++;
        seg.tokens = block;
        seg.text = detokenize(block);
        seg.level = answered ? Level::answer : Level::micro;
        if (!block.empty()) {
            const TokenSeq window = tail(ctx);
            const ForwardResult f = model_.forward(window);
            const std::size_t first = window.size() - block.size();
            double sum = 0.0;
            for (std::size_t p = first; p < window.size(); ++p) {
                seg.token_importance.push_back(f.records[p].importance_signal);
                sum += f.records[p].importance_signal;
            }
            seg.gating_score = std::clamp(sum / static_cast<double>(block.size()), 0.0, 1.0);
        }
        seg.partial_reward = answer_overlap_reward(block, oracle_);
        auto [intro, refs] = extract_identifiers(seg.text, known_);
        seg.introduces = std::move(intro);
        seg.references = std::move(refs);
        known_.insert(seg.introduces.begin(), seg.introduces.end());
        done_ = answered;
        return seg;
    }

    bool exhausted() const override { return done_; }

    std::vector<std::set<std::string>> later_references() const override { return {}; }

private:
    static TokenSeq tail(const TokenSeq& ctx)
    {
        if (ctx.size() <= kContextCap)
            return ctx;
        return TokenSeq(ctx.end() - static_cast<std::ptrdiff_t>(kContextCap), ctx.end());
    }

    const TinyMoeModel& model_;
    TokenSeq oracle_;
    std::set<std::string> known_;
    std::size_t step_ = 0;
    bool done_ = false;
};

} // namespace dcot

#endif
