#ifndef DCOT_HARO_HPP
#define DCOT_HARO_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "types.hpp"
#include "vocab.hpp"

namespace dcot {

/// I(c) = alpha * A(c) + (1 - alpha) * G(c); both inputs must lie in [0,1].
inline double step_importance(double advantage, double gating, double alpha)
{
    if (!(advantage >= 0.0 && advantage <= 1.0) || !(gating >= 0.0 && gating <= 1.0))
        throw DomainError("step_importance: advantage and gating must lie in [0,1]");
    return mixed_importance(alpha, advantage, gating);
}

/// Squashed reward deviation: 0.5 + 0.5 * tanh(2 (r_t - r_bar)).
inline double advantage_estimate(double r_t, const RewardState& rewards)
{
    if (rewards.empty())
        throw DomainError("advantage_estimate: no reward observed yet");
    return 0.5 + 0.5 * std::tanh(2.0 * (r_t - rewards.r_bar));
}

/*
 * tau_t = gamma * tau_{t-1} + (1 - gamma) * (1/N) * #{ I_j > tau_{t-1} }
 *
 * Strict '>' in the indicator. A convex combination of values in [0,1], so
 * tau stays in [0,1].
 */
inline double ema_threshold_update(ThresholdState& state, std::span<const double> window, double gamma_ema)
{
    if (window.empty())
        throw DomainError("ema_threshold_update: empty importance window");
    std::size_t above = 0;
    for (double v : window)
        above += v > state.tau ? 1 : 0;
    const double frac = static_cast<double>(above) / static_cast<double>(window.size());
    state.tau = std::clamp(gamma_ema * state.tau + (1.0 - gamma_ema) * frac, 0.0, 1.0);
    ++state.step;
    return state.tau;
}

/// Appends an importance to the bounded window and applies one EMA update over it.
inline double observe_importance(ThresholdState& state, double importance, const DCoTConfig& cfg)
{
    state.indicator_window.push_back(importance);
    const auto cap = static_cast<std::size_t>(cfg.window_n);
    if (state.indicator_window.size() > cap)
        state.indicator_window.erase(state.indicator_window.begin(),
                                     state.indicator_window.end() - static_cast<std::ptrdiff_t>(cap));
    return ema_threshold_update(state, state.indicator_window, cfg.gamma_ema);
}

/// Position of the candidate with the largest strictly positive margin I - tau (lowest id wins ties).
inline std::optional<std::size_t> select_step(std::span<const CoTSegment> candidates, double tau)
{
    std::optional<std::size_t> best;
    double best_margin = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double margin = candidates[i].importance - tau;
        if (margin <= 0.0)
            continue;
        if (!best || margin > best_margin
            || (margin == best_margin && candidates[i].id < candidates[*best].id)) {
            best = i;
            best_margin = margin;
        }
    }
    return best;
}

/*
 * Answer normalization for the semantic reward: lower-case and drop a
 * leading "label =" prefix ("det = 1" -> "1"). Whitespace tokens are
 * ignored when comparing.
 */
inline std::string normalize_answer(std::string_view s)
{
    std::string low = text::lower(text::trim(s));
    auto eq = low.find('=');
    if (eq != std::string::npos && eq > 0 && (eq + 1 >= low.size() || low[eq + 1] != '=')) {
        auto label = text::trim(std::string_view(low).substr(0, eq));
        const bool word = !label.empty() && std::all_of(label.begin(), label.end(), [](unsigned char c) {
            return std::isalnum(c) || c == '_' || c == ' ';
        });
        if (word)
            low = std::string(text::trim(std::string_view(low).substr(eq + 1)));
    }
    return low;
}

/// Token-level F1 between normalized answer and oracle (multiset overlap).
inline double semantic_reward(std::string_view answer, std::string_view oracle)
{
    const std::string a = normalize_answer(answer);
    const std::string o = normalize_answer(oracle);
    if (a == o)
        return 1.0;
    std::map<TokenId, int> ca, co;
    int na = 0, no = 0;
    for (TokenId t : tokenize(a))
        if (!vocabulary().is_whitespace(t))
            ++ca[t], ++na;
    for (TokenId t : tokenize(o))
        if (!vocabulary().is_whitespace(t))
            ++co[t], ++no;
    if (na == 0 && no == 0)
        return 1.0;
    if (na == 0 || no == 0)
        return 0.0;
    int common = 0;
    for (const auto& [t, n] : ca) {
        auto it = co.find(t);
        if (it != co.end())
            common += std::min(n, it->second);
    }
    if (common == 0)
        return 0.0;
    const double precision = static_cast<double>(common) / na;
    const double recall = static_cast<double>(common) / no;
    return 2.0 * precision * recall / (precision + recall);
}

/// 1 - 2 * tokens / budget, clamped to [-1, 1].
inline double structural_reward(std::size_t token_count, int token_budget)
{
    return std::clamp(1.0 - 2.0 * static_cast<double>(token_count) / token_budget, -1.0, 1.0);
}

/// correctness - mu_cost * tokens / budget, with correctness = semantic_reward(answer, oracle).
inline double episode_reward(double correctness, std::size_t token_count, const DCoTConfig& cfg)
{
    return correctness - cfg.mu_cost * (static_cast<double>(token_count) / cfg.token_budget);
}

/// Learnable controller parameters (Theta_CoT) plus the REINFORCE baseline.
struct PolicyParams {
    double w_adv = 0.0;
    double w_gate = 0.0;
    double bias = 0.0;
    double baseline = 0.0;
    std::size_t episodes = 0; // observations folded into the baseline

    std::array<double, 3> weights() const noexcept { return {w_adv, w_gate, bias}; }

    void set_weights(const std::array<double, 3>& w) noexcept
    {
        w_adv = w[0];
        w_gate = w[1];
        bias = w[2];
    }

    bool finite() const noexcept
    {
        return std::isfinite(w_adv) && std::isfinite(w_gate) && std::isfinite(bias) && std::isfinite(baseline);
    }

    bool operator==(const PolicyParams&) const = default;
};

using Gradient = std::array<double, 3>;

/// Softmax probabilities of w_adv*A + w_gate*G + bias over the candidates.
inline std::vector<double> choice_probabilities(const PolicyParams& p, std::span<const double> adv,
                                                std::span<const double> gate)
{
    if (adv.empty() || adv.size() != gate.size())
        throw DomainError("choice_probabilities: candidate features must be non-empty and aligned");
    std::vector<double> z(adv.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = p.w_adv * adv[i] + p.w_gate * gate[i] + p.bias;
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        total += v;
    }
    for (auto& v : z)
        v /= total;
    return z;
}

/// log pi_theta(chosen); computed with log-sum-exp.
inline double choice_logprob(const PolicyParams& p, std::span<const double> adv, std::span<const double> gate,
                             std::size_t chosen)
{
    if (adv.empty() || adv.size() != gate.size() || chosen >= adv.size())
        throw DomainError("choice_logprob: bad candidate set");
    std::vector<double> z(adv.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = p.w_adv * adv[i] + p.w_gate * gate[i] + p.bias;
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z)
        total += std::exp(v - zmax);
    return z[chosen] - zmax - std::log(total);
}

inline double choice_logprob(const PolicyParams& p, const PolicyChoice& c)
{
    return choice_logprob(p, c.adv, c.gate, c.chosen);
}

/// d log pi(chosen) / d (w_adv, w_gate, bias) = f_chosen - E_pi[f].
inline Gradient grad_logprob(const PolicyParams& p, const PolicyChoice& c)
{
    const auto probs = choice_probabilities(p, c.adv, c.gate);
    double ea = 0.0, eg = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        ea += probs[i] * c.adv[i];
        eg += probs[i] * c.gate[i];
    }
    return {c.adv[c.chosen] - ea, c.gate[c.chosen] - eg, 0.0};
}

struct EpisodeRecord {
    std::vector<PolicyChoice> choices;
    double r_sem = 0.0;
    double r_struct = 0.0;
    double r_episode = 0.0;
    Gradient gradient{0.0, 0.0, 0.0};
};

/// REINFORCE with baseline: (R_sem + lambda * R_struct - baseline) * sum of grad log pi.
inline Gradient policy_gradient(const EpisodeRecord& episode, const PolicyParams& params, double lambda_struct)
{
    const double centered = episode.r_sem + lambda_struct * episode.r_struct - params.baseline;
    Gradient g{0.0, 0.0, 0.0};
    for (const auto& c : episode.choices) {
        const Gradient gl = grad_logprob(params, c);
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += gl[i];
    }
    for (auto& v : g)
        v *= centered;
    return g;
}

/// Sum over recorded choices of log pi_theta; the objective whose gradient grad_logprob sums.
inline double episode_logprob(const PolicyParams& params, const EpisodeRecord& episode)
{
    double total = 0.0;
    for (const auto& c : episode.choices)
        total += choice_logprob(params, c);
    return total;
}

namespace detail {

inline bool ratios_within(const PolicyParams& candidate, std::span<const PolicyChoice> choices,
                          std::span<const double> old_logp, double clip)
{
    for (std::size_t i = 0; i < choices.size(); ++i) {
        const double ratio = std::exp(choice_logprob(candidate, choices[i]) - old_logp[i]);
        if (ratio < 1.0 - clip || ratio > 1.0 + clip)
            return false;
    }
    return true;
}

} // namespace detail

/*
 * Theta <- Theta + eta_lr * g, shrunk by bisection on the step length (at
 * most 20 halvings) until every recorded choice's probability ratio
 * pi_new / pi_old lies in [1 - ppo_clip, 1 + ppo_clip]. `old_params` is the
 * policy the choices were recorded under. The baseline is left untouched.
 */
inline PolicyParams clipped_update(const PolicyParams& params, const Gradient& gradient,
                                   const PolicyParams& old_params, std::span<const PolicyChoice> choices,
                                   const DCoTConfig& cfg)
{
    for (double g : gradient)
        if (!std::isfinite(g))
            throw NumericError("clipped_update: non-finite gradient");
    std::vector<double> old_logp;
    old_logp.reserve(choices.size());
    for (const auto& c : choices)
        old_logp.push_back(choice_logprob(old_params, c));

    const auto base = params.weights();
    auto stepped = [&](double scale) {
        PolicyParams p = params;
        std::array<double, 3> w = base;
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] += scale * cfg.eta_lr * gradient[i];
        p.set_weights(w);
        return p;
    };

    PolicyParams full = stepped(1.0);
    if (detail::ratios_within(full, choices, old_logp, cfg.ppo_clip))
        return full;
    if (!detail::ratios_within(params, choices, old_logp, cfg.ppo_clip))
        return params;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 20; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (detail::ratios_within(stepped(mid), choices, old_logp, cfg.ppo_clip))
            lo = mid;
        else
            hi = mid;
    }
    return stepped(lo);
}

/// Folds one return into the running-mean baseline (clamped to [-1, 1]).
inline void update_baseline(PolicyParams& p, double episode_return)
{
    ++p.episodes;
    p.baseline += (episode_return - p.baseline) / static_cast<double>(p.episodes);
    p.baseline = std::clamp(p.baseline, -1.0, 1.0);
}

/// Retain/discard decision for one step. Candidate 0 = retain (A, G), candidate 1 = discard (1-A, 1-G).
inline PolicyChoice retain_choice_features(double advantage, double gating)
{
    PolicyChoice c;
    c.adv = {advantage, 1.0 - advantage};
    c.gate = {gating, 1.0 - gating};
    return c;
}

/// Greedy: argmax with lowest-index tie-break. Sampling: draw from pi_theta.
inline PolicyChoice decide_retention(const PolicyParams& p, double advantage, double gating, SplitMix64* sampler)
{
    PolicyChoice c = retain_choice_features(advantage, gating);
    const auto probs = choice_probabilities(p, c.adv, c.gate);
    if (sampler)
        c.chosen = sampler->uniform() < probs[0] ? 0 : 1;
    else
        c.chosen = probs[1] > probs[0] ? 1 : 0;
    c.log_prob = choice_logprob(p, c);
    return c;
}

} // namespace dcot

#endif
