#ifndef DCOT_CONTROLLER_HPP
#define DCOT_CONTROLLER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "backend.hpp"
#include "config.hpp"
#include "error.hpp"
#include "haro.hpp"
#include "rng.hpp"
#include "types.hpp"
#include "vocab.hpp"

namespace dcot {

/// tau_dyn = tau_0 + eta_thr * (r_t - r_bar), clamped to [0,1].
inline double dynamic_threshold(const RewardState& rewards, const DCoTConfig& cfg)
{
    if (rewards.empty())
        throw DomainError("dynamic_threshold: no reward observed yet");
    return std::clamp(cfg.tau_0 + cfg.eta_thr * (rewards.r_t - rewards.r_bar), 0.0, 1.0);
}

/// importance < tau -> prune; tau <= importance < tau + delta_sum -> summarize; else keep.
inline Verdict classify_segment(double importance, double tau_dyn, double delta_sum)
{
    if (importance < tau_dyn)
        return Verdict::prune;
    if (importance < tau_dyn + delta_sum)
        return Verdict::summarize;
    return Verdict::keep;
}

/// Extractive compression: the ceil(n/2) tokens with the highest I_t, in their original order.
inline CoTSegment summarize_segment(CoTSegment seg)
{
    const std::size_t n = seg.tokens.size();
    if (n == 0)
        return seg;
    std::vector<double> weight = seg.token_importance;
    weight.resize(n, 0.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
    const std::size_t keep = (n + 1) / 2;
    order.resize(keep);
    std::sort(order.begin(), order.end());
    TokenSeq tokens;
    std::vector<double> kept_weight;
    for (std::size_t i : order) {
        tokens.push_back(seg.tokens[i]);
        kept_weight.push_back(weight[i]);
    }
    seg.tokens = std::move(tokens);
    seg.token_importance = std::move(kept_weight);
    seg.text = detokenize(seg.tokens);
    seg.summarized = true;
    return seg;
}

/// True for answer segments, or when at least two later segments reference something this one introduces.
inline bool coherence_check(const CoTSegment& seg, std::span<const std::set<std::string>> later_references)
{
    if (seg.level == Level::answer)
        return true;
    if (seg.introduces.empty())
        return false;
    int referencing = 0;
    for (const auto& refs : later_references) {
        const bool hit = std::any_of(seg.introduces.begin(), seg.introduces.end(),
                                     [&](const std::string& id) { return refs.count(id) != 0; });
        referencing += hit ? 1 : 0;
    }
    return referencing >= 2;
}

struct CoherenceException {
    std::size_t segment_id = 0;
    std::string reason;

    bool operator==(const CoherenceException&) const = default;
};

/// Append-only store of retained segments, in generation order.
class ReasoningBuffer {
public:
    /*
     * keep -> append verbatim; summarize -> append the compressed segment;
     * prune -> append only with a coherence exception reason.
     */
    void update(const CoTSegment& seg, Verdict verdict, std::optional<std::string> exception = std::nullopt)
    {
        if (ids_.count(seg.id))
            throw IntegrityError("buffer already holds segment " + std::to_string(seg.id));
        switch (verdict) {
        case Verdict::keep:
            push(seg);
            break;
        case Verdict::summarize:
            push(seg.summarized ? seg : summarize_segment(seg));
            break;
        case Verdict::prune:
            if (exception) {
                push(seg);
                exceptions_.push_back({seg.id, *exception});
            }
            break;
        }
    }

    const std::vector<CoTSegment>& retained() const noexcept { return retained_; }
    const std::vector<CoherenceException>& coherence_exceptions() const noexcept { return exceptions_; }
    std::size_t size() const noexcept { return retained_.size(); }
    bool empty() const noexcept { return retained_.empty(); }

    /// Conditioning prefix: retained tokens, one newline between segments.
    TokenSeq select_tokens() const
    {
        TokenSeq out;
        for (const auto& s : retained_) {
            if (!out.empty())
                out.push_back(Vocabulary::newline);
            out.insert(out.end(), s.tokens.begin(), s.tokens.end());
        }
        return out;
    }

private:
    void push(const CoTSegment& seg)
    {
        ids_.insert(seg.id);
        retained_.push_back(seg);
    }

    std::vector<CoTSegment> retained_;
    std::vector<CoherenceException> exceptions_;
    std::set<std::size_t> ids_;
};

/// Reward of a candidate block: scripted value verbatim, otherwise answer-token overlap.
inline double partial_reward(const CoTSegment& seg, const TokenSeq* oracle_answer_tokens)
{
    if (!oracle_answer_tokens)
        return seg.partial_reward;
    return answer_overlap_reward(seg.tokens, *oracle_answer_tokens);
}

struct Adjustment {
    CoTSegment segment;      // as scored (verdict set; compressed when summarized)
    DecisionRecord decision;
    std::optional<PolicyChoice> choice;
    bool retained = false;
};

/*
 * Per-session pruning engine: scores each incoming block, applies the
 * dynamic threshold, consults the retention policy and updates the
 * progressive buffer. Single-threaded, one instance per session.
 */
class Controller {
public:
    Controller(const DCoTConfig& cfg, Mode mode, const PolicyParams& policy, SplitMix64* sampler = nullptr)
        : cfg_(cfg), mode_(mode), policy_(policy), sampler_(sampler)
    {
        thresholds_.tau = cfg.tau_0;
    }

    Adjustment adjust(CoTSegment seg, std::span<const std::set<std::string>> later_references)
    {
        Adjustment out;
        rewards_.observe(seg.partial_reward);
        seg.advantage = advantage_estimate(seg.partial_reward, rewards_);
        seg.importance = step_importance(seg.advantage, std::clamp(seg.gating_score, 0.0, 1.0), cfg_.alpha);
        const double tau_ema = observe_importance(thresholds_, seg.importance, cfg_);

        DecisionRecord rec;
        rec.segment_id = seg.id;
        rec.importance = seg.importance;
        rec.tau_ema = tau_ema;

        Verdict verdict = Verdict::keep;
        if (mode_ == Mode::long_cot_baseline) {
            rec.tau_dyn = -std::numeric_limits<double>::infinity();
        } else {
            rec.tau_dyn = dynamic_threshold(rewards_, cfg_);
            verdict = classify_segment(seg.importance, rec.tau_dyn, cfg_.delta_sum);
            if (verdict != Verdict::prune) {
                PolicyChoice c = decide_retention(policy_, seg.advantage, std::clamp(seg.gating_score, 0.0, 1.0), sampler_);
                if (c.chosen == 1) {
                    verdict = Verdict::prune;
                    rec.policy_discard = true;
                }
                out.choice = std::move(c);
            }
            // the answer is never compressed
            if (verdict == Verdict::summarize && seg.level == Level::answer)
                verdict = Verdict::keep;
        }

        std::optional<std::string> exception;
        if (verdict == Verdict::prune && coherence_check(seg, later_references))
            exception = seg.level == Level::answer ? "answer segment" : "referenced by later steps";

        seg.verdict = verdict;
        if (verdict == Verdict::summarize)
            seg = summarize_segment(std::move(seg));
        buffer_.update(seg, verdict, exception);

        rec.verdict = verdict;
        rec.exception_reason = exception.value_or("");
        out.retained = verdict != Verdict::prune || exception.has_value();
        rec.accepted_tokens = out.retained ? seg.tokens.size() : 0;
        out.decision = std::move(rec);
        out.segment = std::move(seg);
        return out;
    }

    const ReasoningBuffer& buffer() const noexcept { return buffer_; }
    const RewardState& rewards() const noexcept { return rewards_; }
    const ThresholdState& thresholds() const noexcept { return thresholds_; }
    Mode mode() const noexcept { return mode_; }

private:
    DCoTConfig cfg_;
    Mode mode_;
    PolicyParams policy_;
    SplitMix64* sampler_;
    ReasoningBuffer buffer_;
    RewardState rewards_;
    ThresholdState thresholds_;
};

/*
 * One controller step: SelectTokens (query + retained buffer tokens) ->
 * Generate (one block from the backend) -> Adjust (score and classify).
 * Throws BudgetStop when nothing of the budget remains.
 */
inline Adjustment adapt_tokens(Controller& controller, Backend& backend, const TokenSeq& query,
                               std::size_t budget_remaining, const DCoTConfig& cfg)
{
    if (budget_remaining == 0)
        throw BudgetStop("token budget exhausted");
    TokenSeq prefix = query;
    const TokenSeq selected = controller.buffer().select_tokens();
    if (!selected.empty()) {
        if (!prefix.empty())
            prefix.push_back(Vocabulary::newline);
        prefix.insert(prefix.end(), selected.begin(), selected.end());
    }
    CoTSegment raw = backend.next_block(prefix, static_cast<std::size_t>(cfg.block_size), budget_remaining);
    const auto later = backend.later_references();
    return controller.adjust(std::move(raw), later);
}

} // namespace dcot

#endif
