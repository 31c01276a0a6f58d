#ifndef DCOT_CONFIG_HPP
#define DCOT_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "error.hpp"
#include "text.hpp"

namespace dcot {

/// Every tunable scalar of the engine. Construct through validate_config().
struct DCoTConfig {
    double alpha = 0.5;         // advantage vs gating mix in step importance
    double gamma_ema = 0.9;     // EMA attenuation of the historical threshold
    double gamma_mix = 0.7;     // gating vs attention mix in token importance
    double eta_thr = 0.1;       // reward sensitivity of the dynamic threshold
    double eta_lr = 0.01;       // policy learning rate; 0 freezes the policy
    double lambda_struct = 0.5; // structural reward weight
    double tau_0 = 0.5;         // base threshold
    int n_experts = 4;
    int top_k = 2;
    int block_size = 4;
    int window_n = 16;
    double p_fact_min = 0.85;
    int c_comp_max = 3;
    double ppo_clip = 0.2;
    int step_cap = 8;
    int token_budget = 320;
    double delta_sum = 0.1;
    double mu_cost = 0.2;
    std::uint64_t seed = 0;

    bool operator==(const DCoTConfig&) const = default;
};

/// Whether p_fact_min / c_comp_max may be set from the raw field map.
enum class ThresholdOverride { forbidden, allowed };

namespace detail {

inline void check_unit(double v, const char* name)
{
    if (!(v >= 0.0 && v <= 1.0))
        throw ConfigError(std::string(name) + " ∉ [0,1] (got " + text::format_double(v) + ")");
}

inline void check_nonneg(double v, const char* name)
{
    if (!(v >= 0.0) || v == std::numeric_limits<double>::infinity())
        throw ConfigError(std::string(name) + " must be finite and >= 0 (got " + text::format_double(v) + ")");
}

inline void check_positive(double v, const char* name)
{
    if (!(v > 0.0) || v == std::numeric_limits<double>::infinity())
        throw ConfigError(std::string(name) + " must be finite and > 0 (got " + text::format_double(v) + ")");
}

inline void check_min(long long v, long long lo, const char* name)
{
    if (v < lo)
        throw ConfigError(std::string(name) + " must be >= " + std::to_string(lo) + " (got " + std::to_string(v) + ")");
}

inline int parse_int(const std::string& s, const char* name)
{
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || v < INT32_MIN || v > INT32_MAX)
        throw ConfigError(std::string(name) + ": not an integer: '" + s + "'");
    return static_cast<int>(v);
}

inline double parse_real(const std::string& s, const char* name)
{
    try {
        return text::parse_double(s, name);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

} // namespace detail

/// Checks every interval constraint; throws ConfigError naming the field and its bound.
inline void check_config(const DCoTConfig& c)
{
    using namespace detail;
    check_unit(c.alpha, "alpha");
    check_unit(c.gamma_ema, "gamma_ema");
    check_unit(c.gamma_mix, "gamma_mix");
    check_nonneg(c.eta_thr, "eta_thr");
    check_nonneg(c.eta_lr, "eta_lr");
    check_nonneg(c.lambda_struct, "lambda_struct");
    check_unit(c.tau_0, "tau_0");
    check_min(c.n_experts, 1, "n_experts");
    check_min(c.top_k, 1, "top_k");
    if (c.top_k > c.n_experts)
        throw ConfigError("top_k > n_experts (" + std::to_string(c.top_k) + " > " + std::to_string(c.n_experts) + ")");
    check_min(c.block_size, 1, "block_size");
    check_min(c.window_n, 1, "window_n");
    check_unit(c.p_fact_min, "p_fact_min");
    check_min(c.c_comp_max, 0, "c_comp_max");
    check_positive(c.ppo_clip, "ppo_clip");
    check_min(c.step_cap, 1, "step_cap");
    check_min(c.token_budget, 1, "token_budget");
    check_nonneg(c.delta_sum, "delta_sum");
    check_nonneg(c.mu_cost, "mu_cost");
}

/*
 * Builds a config from a field map. Absent fields take the documented
 * defaults; unknown fields are rejected. The discriminator thresholds may
 * only differ from 0.85 / 3 when `thresholds` is ThresholdOverride::allowed.
 */
inline DCoTConfig validate_config(const std::map<std::string, std::string>& raw,
                                  ThresholdOverride thresholds = ThresholdOverride::forbidden)
{
    using namespace detail;
    DCoTConfig c;
    for (const auto& [key, value] : raw) {
        const char* k = key.c_str();
        if (key == "alpha") c.alpha = parse_real(value, k);
        else if (key == "gamma_ema") c.gamma_ema = parse_real(value, k);
        else if (key == "gamma_mix") c.gamma_mix = parse_real(value, k);
        else if (key == "eta_thr") c.eta_thr = parse_real(value, k);
        else if (key == "eta_lr") c.eta_lr = parse_real(value, k);
        else if (key == "lambda_struct") c.lambda_struct = parse_real(value, k);
        else if (key == "tau_0") c.tau_0 = parse_real(value, k);
        else if (key == "n_experts") c.n_experts = parse_int(value, k);
        else if (key == "top_k") c.top_k = parse_int(value, k);
        else if (key == "block_size") c.block_size = parse_int(value, k);
        else if (key == "window_n") c.window_n = parse_int(value, k);
        else if (key == "ppo_clip") c.ppo_clip = parse_real(value, k);
        else if (key == "step_cap") c.step_cap = parse_int(value, k);
        else if (key == "token_budget") c.token_budget = parse_int(value, k);
        else if (key == "delta_sum") c.delta_sum = parse_real(value, k);
        else if (key == "mu_cost") c.mu_cost = parse_real(value, k);
        else if (key == "seed") {
            try {
                c.seed = text::parse_u64(value, k);
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
        } else if (key == "p_fact_min" || key == "c_comp_max") {
            const DCoTConfig fixed;
            if (key == "p_fact_min")
                c.p_fact_min = parse_real(value, k);
            else
                c.c_comp_max = parse_int(value, k);
            if (thresholds != ThresholdOverride::allowed
                && (c.p_fact_min != fixed.p_fact_min || c.c_comp_max != fixed.c_comp_max))
                throw ConfigError(key + " is fixed (0.85 / 3); pass the explicit discriminator override flag to change it");
        } else {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    check_config(c);
    return c;
}

/// key=value lines in declaration order; parse_config_text(serialize_config(c)) == c.
inline std::string serialize_config(const DCoTConfig& c)
{
    std::ostringstream out;
    auto real = [&](const char* k, double v) { out << k << '=' << text::format_double(v) << '\n'; };
    auto integer = [&](const char* k, long long v) { out << k << '=' << v << '\n'; };
    real("alpha", c.alpha);
    real("gamma_ema", c.gamma_ema);
    real("gamma_mix", c.gamma_mix);
    real("eta_thr", c.eta_thr);
    real("eta_lr", c.eta_lr);
    real("lambda_struct", c.lambda_struct);
    real("tau_0", c.tau_0);
    integer("n_experts", c.n_experts);
    integer("top_k", c.top_k);
    integer("block_size", c.block_size);
    integer("window_n", c.window_n);
    real("p_fact_min", c.p_fact_min);
    integer("c_comp_max", c.c_comp_max);
    real("ppo_clip", c.ppo_clip);
    integer("step_cap", c.step_cap);
    integer("token_budget", c.token_budget);
    real("delta_sum", c.delta_sum);
    real("mu_cost", c.mu_cost);
    out << "seed=" << c.seed << '\n';
    return out.str();
}

/// Reads flat key=value text; '#' starts a comment, blank lines are ignored.
inline std::map<std::string, std::string> parse_config_fields(std::string_view body)
{
    std::map<std::string, std::string> raw;
    int line_no = 0;
    for (const auto& line : text::split(body, '\n')) {
        ++line_no;
        auto l = text::trim(line);
        if (auto hash = l.find('#'); hash != std::string_view::npos)
            l = text::trim(l.substr(0, hash));
        if (l.empty())
            continue;
        auto eq = l.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        raw[std::string(text::trim(l.substr(0, eq)))] = std::string(text::trim(l.substr(eq + 1)));
    }
    return raw;
}

inline DCoTConfig parse_config_text(std::string_view body,
                                    ThresholdOverride thresholds = ThresholdOverride::forbidden)
{
    return validate_config(parse_config_fields(body), thresholds);
}

inline std::map<std::string, std::string> read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_fields(ss.str());
}

} // namespace dcot

#endif
