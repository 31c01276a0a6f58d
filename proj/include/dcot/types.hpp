#ifndef DCOT_TYPES_HPP
#define DCOT_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace dcot {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

enum class Level { macro, micro, answer };
enum class Verdict { keep, summarize, prune };
enum class Mode { dcot, long_cot_baseline };

inline std::string_view to_string(Level l)
{
    switch (l) {
    case Level::macro: return "macro";
    case Level::micro: return "micro";
    case Level::answer: return "answer";
    }
    return "?";
}

inline std::string_view to_string(Verdict v)
{
    switch (v) {
    case Verdict::keep: return "keep";
    case Verdict::summarize: return "summarize";
    case Verdict::prune: return "prune";
    }
    return "?";
}

inline std::string_view to_string(Mode m)
{
    return m == Mode::dcot ? "dcot" : "baseline";
}

inline Mode parse_mode(std::string_view s)
{
    if (s == "dcot")
        return Mode::dcot;
    if (s == "baseline" || s == "long_cot_baseline")
        return Mode::long_cot_baseline;
    throw ParseError("unknown mode '" + std::string(s) + "'");
}

/// One reasoning step.
struct CoTSegment {
    std::size_t id = 0;
    TokenSeq tokens;
    std::string text;
    double importance = 0.0;     // alpha*advantage + (1-alpha)*gating_score
    double advantage = 0.0;
    double gating_score = 0.0;
    double partial_reward = 0.0;
    Level level = Level::micro;
    Verdict verdict = Verdict::keep;
    std::set<std::string> introduces;
    std::set<std::string> references;
    std::vector<double> token_importance; // per-token I_t, parallel to tokens
    bool summarized = false;

    bool operator==(const CoTSegment&) const = default;
};

inline double mixed_importance(double alpha, double advantage, double gating)
{
    return alpha * advantage + (1.0 - alpha) * gating;
}

/// EMA threshold state for the historical-success threshold.
struct ThresholdState {
    double tau = 0.5;
    std::vector<double> indicator_window; // most recent importances, oldest first
    double r_bar = 0.0;
    std::size_t step = 0;
};

/// Partial rewards observed so far in one session.
struct RewardState {
    double r_t = 0.0;
    double r_bar = 0.0;
    std::vector<double> history;

    void observe(double r)
    {
        r_t = r;
        history.push_back(r);
        double sum = 0.0;
        for (double v : history)
            sum += v;
        r_bar = sum / static_cast<double>(history.size());
    }

    bool empty() const noexcept { return history.empty(); }
};

/// One per-segment decision, as appended to the session trace stream.
struct DecisionRecord {
    std::size_t segment_id = 0;
    double importance = 0.0;
    double tau_dyn = 0.0;
    double tau_ema = 0.0;
    Verdict verdict = Verdict::keep;
    std::string exception_reason; // non-empty when a pruned segment was retained
    bool policy_discard = false;
    std::size_t accepted_tokens = 0;

    bool operator==(const DecisionRecord&) const = default;
};

/// One recorded policy choice (candidate features plus the chosen index).
struct PolicyChoice {
    std::vector<double> adv;  // A feature per candidate
    std::vector<double> gate; // G feature per candidate
    std::size_t chosen = 0;
    double log_prob = 0.0;

    bool operator==(const PolicyChoice&) const = default;
};

enum class SessionStatus { ok, budget_stop, aborted };

inline std::string_view to_string(SessionStatus s)
{
    switch (s) {
    case SessionStatus::ok: return "ok";
    case SessionStatus::budget_stop: return "budget_stop";
    case SessionStatus::aborted: return "aborted";
    }
    return "?";
}

/// Full per-task record of one session.
struct SessionTrace {
    std::string task_id;
    Mode mode = Mode::dcot;
    std::uint64_t seed = 0;
    std::vector<CoTSegment> steps;         // every generated segment with its verdict
    std::vector<DecisionRecord> decisions; // parallel to steps
    std::vector<std::size_t> final_order;  // segment ids of the assembled chain
    std::vector<PolicyChoice> choices;
    std::size_t token_count = 0;
    std::size_t step_count = 0;
    double wall_time_ms = 0.0;
    std::string final_answer;
    bool low_confidence = false;
    bool direct = false;
    double episode_reward = 0.0;
    double r_sem = 0.0;
    double r_struct = 0.0;
    SessionStatus status = SessionStatus::ok;
    std::string error;
    std::string assembly_report;
};

} // namespace dcot

#endif
