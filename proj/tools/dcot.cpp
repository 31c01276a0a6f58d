#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcot/dcot.hpp"

namespace {

struct Common {
    std::string suite;
    std::string config;
    std::string facts;
    std::string policy;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    bool override_discriminator = false;
    std::string out = "out";
};

dcot::DCoTConfig load_config(const Common& c)
{
    std::map<std::string, std::string> raw;
    if (!c.config.empty())
        raw = dcot::read_config_file(c.config);
    for (const auto& kv : c.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw dcot::ConfigError("--set expects key=value, got '" + kv + "'");
        raw[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    auto cfg = dcot::validate_config(raw, c.override_discriminator ? dcot::ThresholdOverride::allowed
                                                                   : dcot::ThresholdOverride::forbidden);
    if (c.seed)
        cfg.seed = *c.seed;
    return cfg;
}

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--suite", c.suite, "task suite file")->required();
    cmd->add_option("--config", c.config, "key=value configuration file");
    cmd->add_option("--set", c.sets, "override one configuration key (key=value)");
    cmd->add_option("--seed", c.seed, "base seed (defaults to the configured seed)");
    cmd->add_option("--facts", c.facts, "fact corpus for the discriminator (question<TAB>answer)");
    cmd->add_option("--policy", c.policy, "policy parameters file");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_flag("--override-discriminator", c.override_discriminator,
                  "allow p_fact_min / c_comp_max to differ from their defaults");
}

std::optional<dcot::FactStore> load_facts(const Common& c)
{
    if (c.facts.empty())
        return std::nullopt;
    return dcot::read_fact_corpus(c.facts);
}

dcot::PolicyParams load_policy(const Common& c)
{
    if (c.policy.empty())
        return {};
    return dcot::parse_policy(dcot::read_file(c.policy));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"dcot - dynamic chain-of-thought benchmark harness"};
    app.require_subcommand(1);

    Common run_opts;
    std::string mode = "both";
    std::size_t jobs = 1;
    auto* run = app.add_subcommand("run", "run a suite in dcot and/or baseline mode");
    add_common(run, run_opts);
    run->add_option("--mode", mode, "dcot | baseline | both")->check(CLI::IsMember({"dcot", "baseline", "both"}));
    run->add_option("--jobs", jobs, "concurrent sessions")->check(CLI::PositiveNumber);

    Common train_opts;
    std::size_t episodes = 0;
    auto* tr = app.add_subcommand("train", "train the retention policy with clipped REINFORCE");
    add_common(tr, train_opts);
    tr->add_option("--episodes", episodes, "number of episodes")->required();

    std::string in_dir;
    auto* report = app.add_subcommand("report", "print the comparison table of a finished run");
    report->add_option("--in", in_dir, "directory holding run.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const auto cfg = load_config(run_opts);
            const auto tasks = dcot::read_suite(run_opts.suite);
            const auto facts = load_facts(run_opts);
            dcot::RunOptions opt;
            opt.seed = cfg.seed;
            opt.jobs = jobs;
            opt.policy = load_policy(run_opts);
            opt.facts = facts ? &*facts : nullptr;
            if (mode == "dcot")
                opt.modes = {dcot::Mode::dcot};
            else if (mode == "baseline")
                opt.modes = {dcot::Mode::long_cot_baseline};
            const auto rep = dcot::run_suite(tasks, cfg, opt);
            dcot::emit_report(rep, run_opts.out);
            std::cout << dcot::render_comparison(rep.rows);
            for (const auto& r : rep.rows)
                if (r.aborted())
                    std::cerr << "aborted: " << r.task_id << " (" << dcot::to_string(r.mode) << ")\n";
            return rep.any_aborted() ? 1 : 0;
        }
        if (tr->parsed()) {
            const auto cfg = load_config(train_opts);
            const auto tasks = dcot::read_suite(train_opts.suite);
            const auto facts = load_facts(train_opts);
            dcot::TrainOptions opt;
            opt.seed = cfg.seed;
            opt.initial = load_policy(train_opts);
            opt.facts = facts ? &*facts : nullptr;
            const auto result = dcot::train(tasks, episodes, cfg, opt);
            dcot::emit_training(result, train_opts.out);
            std::cout << dcot::serialize_policy(result.params);
            if (result.diverged) {
                std::cerr << "training aborted: " << result.error << '\n';
                return 1;
            }
            return 0;
        }
        if (report->parsed()) {
            const auto rows = dcot::parse_csv(dcot::read_file(std::filesystem::path(in_dir) / "run.csv"));
            std::cout << dcot::render_comparison(rows);
            for (const auto& r : rows)
                if (r.aborted())
                    return 1;
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
