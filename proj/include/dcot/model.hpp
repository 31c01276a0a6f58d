#ifndef DCOT_MODEL_HPP
#define DCOT_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "types.hpp"
#include "vocab.hpp"

namespace dcot {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    void fill_uniform(SplitMix64& rng, double lo, double hi)
    {
        for (auto& v : data_)
            v = rng.uniform(lo, hi);
    }

    /// this (rows x cols) times x (cols) -> rows
    Vec apply(std::span<const double> x) const
    {
        Vec y(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols_; ++c)
                acc += (*this)(r, c) * x[c];
            y[r] = acc;
        }
        return y;
    }

    bool operator==(const Mat&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline constexpr std::size_t kModelDim = 32;
inline constexpr std::size_t kHeads = 4;
inline constexpr std::size_t kLayers = 2;
inline constexpr std::size_t kContextCap = 256;

/// Sinusoidal positional encoding: P[pos][2i] = sin(pos / 10000^(2i/d)), P[pos][2i+1] = cos(...).
inline double positional_encoding(std::size_t pos, std::size_t dim, std::size_t d_model = kModelDim)
{
    const double i2 = static_cast<double>(dim - dim % 2);
    const double angle = static_cast<double>(pos) / std::pow(10000.0, i2 / static_cast<double>(d_model));
    return dim % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

struct RouterOutput {
    Vec scores;                       // a_{t,e}, softmax-normalized
    std::vector<std::size_t> active;  // top_k expert ids, by descending score then ascending id
};

/// Softmax over router logits followed by TopK with lowest-index tie-break.
inline RouterOutput route_logits(std::span<const double> logits, std::size_t top_k)
{
    if (logits.empty() || top_k == 0 || top_k > logits.size())
        throw DomainError("route: top_k must be in [1, n_experts]");
    for (double z : logits)
        if (!std::isfinite(z))
            throw NumericError("route: non-finite router logit");
    RouterOutput out;
    const double zmax = *std::max_element(logits.begin(), logits.end());
    out.scores.resize(logits.size());
    double total = 0.0;
    for (std::size_t e = 0; e < logits.size(); ++e) {
        out.scores[e] = std::exp(logits[e] - zmax);
        total += out.scores[e];
    }
    for (auto& s : out.scores)
        s /= total;
    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.scores[a] > out.scores[b]; });
    out.active.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k));
    return out;
}

/// Two-layer ReLU feed-forward expert f_e.
struct Expert {
    Mat w1; // hidden x d
    Vec b1;
    Mat w2; // d x hidden
    Vec b2;

    Vec operator()(std::span<const double> u) const
    {
        Vec h = w1.apply(u);
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = std::max(0.0, h[i] + b1[i]);
        Vec y = w2.apply(h);
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += b2[i];
        return y;
    }
};

/// h'_t = sum over active experts of a_{t,e} * f_e(u_t). `expert(e, u)` evaluates f_e.
template <class ExpertFn>
Vec moe_forward(std::span<const double> u, const RouterOutput& routed, ExpertFn&& expert)
{
    Vec out(u.size(), 0.0);
    for (std::size_t e : routed.active) {
        const Vec fe = expert(e, u);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += routed.scores[e] * fe[i];
    }
    return out;
}

/// Attention maps of one forward pass: one L x L row-stochastic matrix per (layer, head).
using AttentionMaps = std::vector<Mat>;

/*
 * beta_t: mean attention paid to position t by the later query positions,
 * averaged over every map. Zero when no later position exists.
 */
inline double attention_received(const AttentionMaps& maps, std::size_t t)
{
    if (maps.empty())
        throw IndexError("attention_received: no attention maps");
    const std::size_t len = maps.front().rows();
    if (t >= len)
        throw IndexError("attention_received: position " + std::to_string(t) + " out of range");
    if (t + 1 == len)
        return 0.0;
    double acc = 0.0;
    for (const auto& m : maps)
        for (std::size_t q = t + 1; q < len; ++q)
            acc += m(q, t);
    const double beta = acc / static_cast<double>(maps.size() * (len - t - 1));
    return std::clamp(beta, 0.0, 1.0);
}

/// I_t = gamma_mix * gating_sum + (1 - gamma_mix) * beta_t
inline double token_importance_signal(double gamma_mix, double gating_sum, double beta)
{
    return gamma_mix * gating_sum + (1.0 - gamma_mix) * beta;
}

struct TokenRecord {
    TokenId token = 0;
    std::size_t position = 0;
    double gating_sum = 0.0;         // mean over layers of the active router mass
    double attention_received = 0.0; // beta_t
    double importance_signal = 0.0;  // I_t
};

struct ForwardResult {
    Vec logits;                                  // next-token logits after the last position
    std::vector<TokenRecord> records;            // one per input position
    AttentionMaps attention;                     // layer-major, then head
    std::vector<std::vector<RouterOutput>> routes; // [layer][position]
};

struct LayerParams {
    Mat wq, wk, wv, wo; // d x d
    Mat router;         // n_experts x d
    std::vector<Expert> experts;
};

struct ModelParams {
    std::size_t vocab_size = 0;
    std::size_t n_experts = 0;
    std::size_t top_k = 0;
    Mat embedding; // vocab x d
    std::vector<LayerParams> layers;
};

/// Draws every weight from uniform(-0.1, 0.1) in a fixed order.
inline ModelParams init_params(std::size_t vocab_size, std::size_t n_experts, std::size_t top_k, std::uint64_t seed)
{
    constexpr double r = 0.1;
    constexpr std::size_t d = kModelDim;
    constexpr std::size_t hidden = 2 * kModelDim;
    SplitMix64 rng(seed);
    ModelParams p;
    p.vocab_size = vocab_size;
    p.n_experts = n_experts;
    p.top_k = top_k;
    p.embedding = Mat(vocab_size, d);
    p.embedding.fill_uniform(rng, -r, r);
    for (std::size_t l = 0; l < kLayers; ++l) {
        LayerParams lp;
        for (Mat* m : {&lp.wq, &lp.wk, &lp.wv, &lp.wo}) {
            *m = Mat(d, d);
            m->fill_uniform(rng, -r, r);
        }
        lp.router = Mat(n_experts, d);
        lp.router.fill_uniform(rng, -r, r);
        for (std::size_t e = 0; e < n_experts; ++e) {
            Expert ex{Mat(hidden, d), Vec(hidden), Mat(d, hidden), Vec(d)};
            ex.w1.fill_uniform(rng, -r, r);
            for (auto& b : ex.b1)
                b = rng.uniform(-r, r);
            ex.w2.fill_uniform(rng, -r, r);
            for (auto& b : ex.b2)
                b = rng.uniform(-r, r);
            lp.experts.push_back(std::move(ex));
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

namespace detail {

inline Vec layer_norm(std::span<const double> x)
{
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x)
        mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x)
        var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = (x[i] - mean) * inv;
    return y;
}

} // namespace detail

/*
 * Minimal pre-norm MoE transformer: d_model 32, 4 heads, 2 layers, causal
 * self-attention, a routed expert feed-forward block per layer and logits
 * tied to the embedding table. Immutable after construction; forward passes
 * allocate their own scratch and may run concurrently.
 */
class TinyMoeModel {
public:
    TinyMoeModel(const DCoTConfig& cfg, std::uint64_t seed)
        : params_(init_params(vocabulary().size(), static_cast<std::size_t>(cfg.n_experts),
                              static_cast<std::size_t>(cfg.top_k), seed)),
          gamma_mix_(cfg.gamma_mix)
    {
    }

    const ModelParams& params() const noexcept { return params_; }

    /// X = E(T) + P
    Mat embed(const TokenSeq& tokens) const
    {
        Mat x(tokens.size(), kModelDim);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const TokenId id = tokens[t];
            if (id < 0 || static_cast<std::size_t>(id) >= params_.vocab_size)
                throw IndexError("embed: token id " + std::to_string(id) + " outside vocabulary");
            auto e = params_.embedding.row(static_cast<std::size_t>(id));
            for (std::size_t j = 0; j < kModelDim; ++j)
                x(t, j) = e[j] + positional_encoding(t, j);
        }
        return x;
    }

    RouterOutput route(std::size_t layer, std::span<const double> u) const
    {
        for (double v : u)
            if (!std::isfinite(v))
                throw NumericError("route: non-finite hidden state");
        const Vec logits = params_.layers.at(layer).router.apply(u);
        return route_logits(logits, params_.top_k);
    }

    Vec expert(std::size_t layer, std::size_t e, std::span<const double> u) const
    {
        return params_.layers.at(layer).experts.at(e)(u);
    }

    ForwardResult forward(const TokenSeq& prefix) const
    {
        if (prefix.size() > kContextCap)
            throw CapacityError("context overflow: " + std::to_string(prefix.size()) + " > "
                                + std::to_string(kContextCap) + " tokens");
        if (prefix.empty())
            throw DomainError("forward: empty prefix");
        const std::size_t len = prefix.size();
        constexpr std::size_t dh = kModelDim / kHeads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        ForwardResult out;
        Mat x = embed(prefix);
        std::vector<double> gating(len, 0.0);

        for (std::size_t l = 0; l < kLayers; ++l) {
            const LayerParams& lp = params_.layers[l];
            Mat q(len, kModelDim), k(len, kModelDim), v(len, kModelDim);
            for (std::size_t t = 0; t < len; ++t) {
                const Vec n = detail::layer_norm(x.row(t));
                const Vec qt = lp.wq.apply(n), kt = lp.wk.apply(n), vt = lp.wv.apply(n);
                std::copy(qt.begin(), qt.end(), q.row(t).begin());
                std::copy(kt.begin(), kt.end(), k.row(t).begin());
                std::copy(vt.begin(), vt.end(), v.row(t).begin());
            }
            Mat mixed(len, kModelDim);
            for (std::size_t h = 0; h < kHeads; ++h) {
                Mat att(len, len);
                for (std::size_t qi = 0; qi < len; ++qi) {
                    double zmax = -INFINITY;
                    for (std::size_t ki = 0; ki <= qi; ++ki) {
                        double s = 0.0;
                        for (std::size_t j = h * dh; j < (h + 1) * dh; ++j)
                            s += q(qi, j) * k(ki, j);
                        att(qi, ki) = s * scale;
                        zmax = std::max(zmax, att(qi, ki));
                    }
                    double total = 0.0;
                    for (std::size_t ki = 0; ki <= qi; ++ki) {
                        att(qi, ki) = std::exp(att(qi, ki) - zmax);
                        total += att(qi, ki);
                    }
                    for (std::size_t ki = 0; ki <= qi; ++ki)
                        att(qi, ki) /= total;
                    for (std::size_t ki = 0; ki <= qi; ++ki)
                        for (std::size_t j = h * dh; j < (h + 1) * dh; ++j)
                            mixed(qi, j) += att(qi, ki) * v(ki, j);
                }
                out.attention.push_back(std::move(att));
            }
            for (std::size_t t = 0; t < len; ++t) {
                const Vec o = lp.wo.apply(mixed.row(t));
                for (std::size_t j = 0; j < kModelDim; ++j)
                    x(t, j) += o[j];
            }

            std::vector<RouterOutput> routes;
            routes.reserve(len);
            for (std::size_t t = 0; t < len; ++t) {
                const Vec u = detail::layer_norm(x.row(t));
                RouterOutput r = route(l, u);
                const Vec h = moe_forward(u, r, [&](std::size_t e, std::span<const double> in) {
                    return lp.experts[e](in);
                });
                for (std::size_t j = 0; j < kModelDim; ++j)
                    x(t, j) += h[j];
                double mass = 0.0;
                for (std::size_t e : r.active)
                    mass += r.scores[e];
                gating[t] += mass / static_cast<double>(kLayers);
                routes.push_back(std::move(r));
            }
            out.routes.push_back(std::move(routes));
        }

        const Vec last = detail::layer_norm(x.row(len - 1));
        out.logits = params_.embedding.apply(last);
        for (double z : out.logits)
            if (!std::isfinite(z))
                throw NumericError("forward: non-finite logit");

        out.records.resize(len);
        for (std::size_t t = 0; t < len; ++t) {
            TokenRecord& rec = out.records[t];
            rec.token = prefix[t];
            rec.position = t;
            rec.gating_sum = std::clamp(gating[t], 0.0, 1.0);
            rec.attention_received = attention_received(out.attention, t);
            rec.importance_signal = token_importance_signal(gamma_mix_, rec.gating_sum, rec.attention_received);
        }
        return out;
    }

    /// Next-token logits after `prefix`, plus per-position signals.
    ForwardResult next_token_logits(const TokenSeq& prefix) const { return forward(prefix); }

    /// Per-token I_t of a standalone token sequence (truncated to the context cap).
    std::vector<double> token_signals(const TokenSeq& tokens) const
    {
        if (tokens.empty())
            return {};
        TokenSeq window(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(std::min(tokens.size(), kContextCap)));
        const ForwardResult f = forward(window);
        std::vector<double> out(tokens.size(), 0.0);
        for (std::size_t t = 0; t < window.size(); ++t)
            out[t] = f.records[t].importance_signal;
        return out;
    }

private:
    ModelParams params_;
    double gamma_mix_;
};

} // namespace dcot

#endif
