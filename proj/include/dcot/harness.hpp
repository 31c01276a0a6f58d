#ifndef DCOT_HARNESS_HPP
#define DCOT_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "decoder.hpp"
#include "discriminator.hpp"
#include "error.hpp"
#include "haro.hpp"
#include "model.hpp"
#include "suite.hpp"
#include "text.hpp"
#include "types.hpp"

namespace dcot {

struct ReportRow {
    std::string task_id;
    Mode mode = Mode::dcot;
    double wall_time_ms = 0.0;
    std::size_t step_count = 0;
    std::size_t token_count = 0;
    bool correct = false;
    double episode_reward = 0.0;
    SessionStatus status = SessionStatus::ok;

    bool aborted() const noexcept { return status == SessionStatus::aborted; }
    bool operator==(const ReportRow&) const = default;
};

struct MetricSummary {
    double max = 0.0;
    double mean = 0.0;
    double median = 0.0;
    bool operator==(const MetricSummary&) const = default;
};

struct ModeAggregate {
    Mode mode = Mode::dcot;
    std::size_t rows = 0;    // non-aborted rows summarized
    std::size_t aborted = 0;
    MetricSummary wall_time_ms, step_count, token_count;
    std::size_t total_tokens = 0;
    std::size_t correct = 0;
    bool operator==(const ModeAggregate&) const = default;
};

struct RunReport {
    std::vector<ReportRow> rows;
    std::vector<std::string> traces; // serialized session traces, parallel to rows
    DCoTConfig config;
    std::uint64_t seed = 0;

    bool any_aborted() const
    {
        return std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.aborted(); });
    }
};

inline MetricSummary summarize_metric(std::vector<double> v)
{
    MetricSummary s;
    if (v.empty())
        return s;
    double sum = 0.0;
    for (double x : v)
        sum += x;
    s.mean = sum / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    s.max = v.back();
    const std::size_t n = v.size();
    s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return s;
}

/// Per-mode max/mean/median over rows that were not aborted, modes in first-appearance order.
inline std::vector<ModeAggregate> aggregate(const std::vector<ReportRow>& rows)
{
    std::vector<ModeAggregate> out;
    for (const auto& r : rows)
        if (std::none_of(out.begin(), out.end(), [&](const ModeAggregate& a) { return a.mode == r.mode; }))
        {
            ModeAggregate a;
            a.mode = r.mode;
            out.push_back(a);
        }
    for (auto& a : out) {
        std::vector<double> wall, steps, tokens;
        for (const auto& r : rows) {
            if (r.mode != a.mode)
                continue;
            if (r.aborted()) {
                ++a.aborted;
                continue;
            }
            ++a.rows;
            wall.push_back(r.wall_time_ms);
            steps.push_back(static_cast<double>(r.step_count));
            tokens.push_back(static_cast<double>(r.token_count));
            a.total_tokens += r.token_count;
            a.correct += r.correct ? 1 : 0;
        }
        a.wall_time_ms = summarize_metric(wall);
        a.step_count = summarize_metric(steps);
        a.token_count = summarize_metric(tokens);
    }
    return out;
}

// ------------------------------------------------------------ running

struct RunOptions {
    std::vector<Mode> modes{Mode::dcot, Mode::long_cot_baseline};
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    PolicyParams policy{};
    const FactStore* facts = nullptr;
};

inline std::uint64_t task_seed(std::uint64_t seed, std::size_t task_index) { return seed ^ task_index; }

inline ReportRow row_from_trace(const SessionTrace& t)
{
    ReportRow r;
    r.task_id = t.task_id;
    r.mode = t.mode;
    r.wall_time_ms = t.wall_time_ms;
    r.step_count = t.step_count;
    r.token_count = t.token_count;
    r.correct = t.status != SessionStatus::aborted && t.r_sem == 1.0;
    r.episode_reward = t.episode_reward;
    r.status = t.status;
    return r;
}

/// One session of `task` in `mode`. Failures before or during the session come back as an aborted trace.
inline SessionTrace run_task(const Task& task, std::size_t index, Mode mode, const DCoTConfig& cfg,
                             std::uint64_t seed, const SessionOptions& opts)
{
    SessionTrace trace;
    trace.task_id = task.id;
    trace.mode = mode;
    trace.seed = task_seed(seed, index);
    try {
        const TinyMoeModel model(cfg, trace.seed);
        auto backend = make_backend(task, model);
        const SessionInput input{task.id, task.prompt, oracle_answer(task), trace.seed};
        return run_session(input, mode, *backend, cfg, opts);
    } catch (const std::exception& e) {
        trace.status = SessionStatus::aborted;
        trace.error = e.what();
        trace.low_confidence = true;
        return trace;
    }
}

/*
 * Every task in every requested mode, one row per (task, mode) in suite
 * order. Up to `jobs` sessions run concurrently; each result lands in its
 * own slot, so the report does not depend on scheduling.
 */
inline RunReport run_suite(const std::vector<Task>& tasks, const DCoTConfig& cfg, const RunOptions& opt)
{
    check_config(cfg);
    if (opt.modes.empty())
        throw ConfigError("run_suite: no modes requested");
    const std::size_t n = tasks.size() * opt.modes.size();
    std::vector<SessionTrace> results(n);
    SessionOptions sopts;
    sopts.facts = opt.facts;
    sopts.policy = opt.policy;

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            const std::size_t ti = k / opt.modes.size();
            results[k] = run_task(tasks[ti], ti, opt.modes[k % opt.modes.size()], cfg, opt.seed, sopts);
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, std::max<std::size_t>(n, 1));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    RunReport report;
    report.config = cfg;
    report.seed = opt.seed;
    for (const auto& t : results) {
        report.rows.push_back(row_from_trace(t));
        report.traces.push_back(serialize_trace(t, false));
    }
    return report;
}

// ------------------------------------------------------------ training

struct TrainOptions {
    std::uint64_t seed = 0;
    PolicyParams initial{};
    const FactStore* facts = nullptr;
};

struct TrainResult {
    PolicyParams params;                   // last finite parameters
    std::vector<double> curve;             // R_episode of the greedy policy after each update
    std::vector<double> sampled;           // R_episode of the sampled training episode
    std::vector<std::string> log;          // one line per episode
    bool diverged = false;
    std::string error;
};

/*
 * Episode e runs a dcot session of task e mod |tasks| with retention
 * sampled from the current policy, then applies one clipped REINFORCE
 * step and folds the return into the baseline. The learning curve records
 * the same task replayed greedily under the updated policy. eta_lr = 0
 * freezes the baseline as well. Invalid tasks are skipped; a non-finite
 * gradient or parameter stops training at the last finite checkpoint.
 */
inline TrainResult train(const std::vector<Task>& tasks, std::size_t episodes, const DCoTConfig& cfg,
                         const TrainOptions& opt = {})
{
    if (episodes < 1)
        throw DomainError("train: episodes must be >= 1");
    check_config(cfg);
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i].invalid.empty())
            usable.push_back(i);
    if (usable.empty())
        throw DomainError("train: suite has no runnable task");

    TrainResult out;
    out.params = opt.initial;
    if (!out.params.finite())
        throw NumericError("train: initial parameters are not finite");
    SessionOptions sopts;
    sopts.facts = opt.facts;
    sopts.sample_policy = true;
    SessionOptions greedy;
    greedy.facts = opt.facts;

    for (std::size_t e = 0; e < episodes; ++e) {
        const std::size_t ti = usable[e % usable.size()];
        sopts.policy = out.params;
        const std::uint64_t episode_seed = opt.seed ^ (static_cast<std::uint64_t>(e) << 32);
        const SessionTrace t = run_task(tasks[ti], ti, Mode::dcot, cfg, episode_seed, sopts);
        if (t.status == SessionStatus::aborted) {
            out.diverged = true;
            out.error = "episode " + std::to_string(e) + " (" + t.task_id + ") aborted: " + t.error;
            break;
        }
        EpisodeRecord ep;
        ep.choices = t.choices;
        ep.r_sem = t.r_sem;
        ep.r_struct = t.r_struct;
        ep.r_episode = t.episode_reward;
        try {
            ep.gradient = policy_gradient(ep, out.params, cfg.lambda_struct);
            PolicyParams next = clipped_update(out.params, ep.gradient, out.params, ep.choices, cfg);
            if (cfg.eta_lr > 0.0)
                update_baseline(next, ep.r_sem + cfg.lambda_struct * ep.r_struct);
            if (!next.finite())
                throw NumericError("non-finite parameters");
            out.params = next;
        } catch (const NumericError& err) {
            out.diverged = true;
            out.error = "episode " + std::to_string(e) + ": " + err.what();
            break;
        }
        greedy.policy = out.params;
        const SessionTrace g = run_task(tasks[ti], ti, Mode::dcot, cfg, opt.seed, greedy);
        out.sampled.push_back(ep.r_episode);
        out.curve.push_back(g.episode_reward);
        std::ostringstream line;
        line << "episode=" << e << " task=" << t.task_id << " r_episode=" << text::format_double(ep.r_episode)
             << " greedy_r_episode=" << text::format_double(g.episode_reward)
             << " r_sem=" << text::format_double(ep.r_sem) << " r_struct=" << text::format_double(ep.r_struct)
             << " tokens=" << t.token_count << " w_adv=" << text::format_double(out.params.w_adv)
             << " w_gate=" << text::format_double(out.params.w_gate)
             << " bias=" << text::format_double(out.params.bias)
             << " baseline=" << text::format_double(out.params.baseline);
        out.log.push_back(line.str());
    }
    return out;
}

inline double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t count)
{
    if (count == 0 || begin + count > v.size())
        throw DomainError("window_mean: window outside the curve");
    double s = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i)
        s += v[i];
    return s / static_cast<double>(count);
}

inline std::string serialize_policy(const PolicyParams& p)
{
    return "w_adv=" + text::format_double(p.w_adv) + "\nw_gate=" + text::format_double(p.w_gate)
        + "\nbias=" + text::format_double(p.bias) + "\nbaseline=" + text::format_double(p.baseline)
        + "\nepisodes=" + std::to_string(p.episodes) + "\n";
}

inline PolicyParams parse_policy(std::string_view body)
{
    PolicyParams p;
    for (const auto& [k, v] : parse_config_fields(body)) {
        if (k == "w_adv") p.w_adv = text::parse_double(v, k);
        else if (k == "w_gate") p.w_gate = text::parse_double(v, k);
        else if (k == "bias") p.bias = text::parse_double(v, k);
        else if (k == "baseline") p.baseline = text::parse_double(v, k);
        else if (k == "episodes") p.episodes = text::parse_u64(v, k);
        else throw ParseError("unknown policy field '" + k + "'");
    }
    if (!p.finite())
        throw NumericError("policy parameters are not finite");
    return p;
}

// ------------------------------------------------------------ files

namespace csv {

inline std::string field(std::string_view s)
{
    if (s.find_first_of(",\"\r\n") == std::string_view::npos)
        return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

/// RFC 4180 records; quoted fields may span lines.
inline std::vector<std::vector<std::string>> parse(std::string_view body)
{
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string cur;
    bool quoted = false, field_started = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < body.size() && body[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
            continue;
        }
        if (c == '"' && !field_started && cur.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            rec.push_back(std::move(cur));
            cur.clear();
            field_started = false;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < body.size() && body[i + 1] == '\n')
                ++i;
            rec.push_back(std::move(cur));
            cur.clear();
            field_started = false;
            records.push_back(std::move(rec));
            rec.clear();
        } else {
            cur += c;
            field_started = true;
        }
    }
    if (quoted)
        throw ParseError("csv: unterminated quoted field");
    if (field_started || !rec.empty()) {
        rec.push_back(std::move(cur));
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace csv

inline const std::vector<std::string>& csv_header()
{
    static const std::vector<std::string> h = {"task_id", "mode", "wall_time_ms", "step_count",
                                               "token_count", "correct", "episode_reward", "status"};
    return h;
}

inline std::string render_csv(const std::vector<ReportRow>& rows)
{
    std::string out;
    const auto& h = csv_header();
    for (std::size_t i = 0; i < h.size(); ++i)
        out += (i ? "," : "") + h[i];
    out += "\r\n";
    for (const auto& r : rows) {
        out += csv::field(r.task_id) + ',' + std::string(to_string(r.mode)) + ','
            + text::format_double(r.wall_time_ms) + ',' + std::to_string(r.step_count) + ','
            + std::to_string(r.token_count) + ',' + (r.correct ? "1" : "0") + ','
            + text::format_double(r.episode_reward) + ',' + std::string(to_string(r.status)) + "\r\n";
    }
    return out;
}

inline SessionStatus parse_status(std::string_view s)
{
    for (SessionStatus st : {SessionStatus::ok, SessionStatus::budget_stop, SessionStatus::aborted})
        if (to_string(st) == s)
            return st;
    throw ParseError("unknown status '" + std::string(s) + "'");
}

inline std::vector<ReportRow> parse_csv(std::string_view body)
{
    const auto records = csv::parse(body);
    if (records.empty() || records.front() != csv_header())
        throw ParseError("run.csv: missing or unexpected header");
    std::vector<ReportRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& f = records[i];
        const std::string where = "run.csv record " + std::to_string(i + 1);
        if (f.size() != csv_header().size())
            throw ParseError(where + ": expected 8 fields, got " + std::to_string(f.size()));
        ReportRow r;
        r.task_id = f[0];
        r.mode = parse_mode(f[1]);
        r.wall_time_ms = text::parse_double(f[2], "wall_time_ms");
        r.step_count = text::parse_u64(f[3], "step_count");
        r.token_count = text::parse_u64(f[4], "token_count");
        if (f[5] != "0" && f[5] != "1")
            throw ParseError(where + ": correct must be 0 or 1");
        r.correct = f[5] == "1";
        r.episode_reward = text::parse_double(f[6], "episode_reward");
        r.status = parse_status(f[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string render_comparison(const std::vector<ReportRow>& rows)
{
    std::ostringstream out;
    auto cell = [](std::string s, std::size_t w) {
        if (s.size() < w)
            s.insert(0, w - s.size(), ' ');
        return s;
    };
    out << cell("mode", 18) << cell("metric", 14) << cell("max", 12) << cell("mean", 12) << cell("median", 12)
        << '\n';
    for (const auto& a : aggregate(rows)) {
        const std::pair<const char*, const MetricSummary*> metrics[] = {
            {"wall_time_ms", &a.wall_time_ms}, {"step_count", &a.step_count}, {"token_count", &a.token_count}};
        for (const auto& [name, m] : metrics)
            out << cell(std::string(to_string(a.mode)), 18) << cell(name, 14)
                << cell(text::format_fixed(m->max, 3), 12) << cell(text::format_fixed(m->mean, 3), 12)
                << cell(text::format_fixed(m->median, 3), 12) << '\n';
    }
    out << '\n';
    for (const auto& a : aggregate(rows))
        out << to_string(a.mode) << ": rows=" << a.rows << " aborted=" << a.aborted
            << " total_tokens=" << a.total_tokens << " correct=" << a.correct << '\n';
    return out.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view body)
{
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << body) || !out.flush())
        throw IoError("cannot write '" + path.string() + "'");
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory '" + dir.string() + "'");
}

/// run.csv, comparison.txt (with config snapshot and seed) and traces.log under `dir`.
inline void emit_report(const RunReport& report, const std::filesystem::path& dir)
{
    ensure_dir(dir);
    write_file(dir / "run.csv", render_csv(report.rows));
    std::string cmp = "seed=" + std::to_string(report.seed) + "\n\n" + render_comparison(report.rows)
        + "\nconfig:\n" + serialize_config(report.config);
    write_file(dir / "comparison.txt", cmp);
    std::string traces;
    for (const auto& t : report.traces)
        traces += t;
    write_file(dir / "traces.log", traces);
}

inline void emit_training(const TrainResult& result, const std::filesystem::path& dir)
{
    ensure_dir(dir);
    std::string log;
    for (const auto& l : result.log)
        log += l + '\n';
    if (result.diverged)
        log += "aborted: " + result.error + '\n';
    write_file(dir / "training.log", log);
    write_file(dir / "policy.txt", serialize_policy(result.params));
}

} // namespace dcot

#endif
