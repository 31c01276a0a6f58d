#include <gtest/gtest.h>

#include <dcot/dcot.hpp>

#include <filesystem>

using namespace dcot;

namespace {

std::string data(const std::string& rel) { return std::string(DCOT_DATA_DIR) + "/" + rel; }

std::vector<Task> default_suite() { return read_suite(data("default_suite.txt")); }
std::vector<Task> scripted_suite() { return read_suite(data("scripted_suite.txt")); }

std::string strip_wall(const std::vector<ReportRow>& rows)
{
    std::vector<ReportRow> copy = rows;
    for (auto& r : copy)
        r.wall_time_ms = 0.0;
    return render_csv(copy);
}

std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("dcot_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST(Suite, ShippedSuitesParse)
{
    const auto tasks = default_suite();
    EXPECT_GE(tasks.size(), 30u);
    for (const auto& t : tasks) {
        EXPECT_TRUE(t.invalid.empty()) << t.id << ": " << t.invalid;
        EXPECT_NO_THROW(oracle_answer(t)) << t.id;
    }
    EXPECT_EQ(scripted_suite().size(), 10u);
}

TEST(Suite, OracleAnswersOfAppendixTasks)
{
    std::map<std::string, std::string> by_id;
    for (const auto& t : default_suite())
        by_id[t.id] = oracle_answer(t);
    EXPECT_EQ(by_id.at("det-lu"), "1");
    EXPECT_EQ(by_id.at("rank-3a"), "2");
    EXPECT_EQ(by_id.at("det-u"), "4");
    EXPECT_EQ(by_id.at("det-rep"), "0");
    EXPECT_EQ(by_id.at("lc-none"), "inconsistent");
    EXPECT_EQ(by_id.at("f-sum"), "5");
}

TEST(Suite, ScriptedAnswersAgreeWithOracles)
{
    const auto q1 = parse_vector("[3/5,4/5,0]");
    const auto q2 = parse_vector("[-4/5,3/5,0]");
    RMatrix m(3, 3);
    for (std::size_t r = 0; r < 3; ++r) {
        m(r, 0) = q1[r];
        m(r, 1) = Rational(2) * q2[r];
        m(r, 2) = Rational(3) * q1[r] + Rational(4) * q2[r];
    }
    const RMatrix l = parse_matrix("[[1,0,0,0],[-1,1,0,0],[0,3,1,0],[1,0,0,1]]");
    const RMatrix u = parse_matrix("[[2,0,1,1],[0,-1,0,-1],[0,0,-2,1],[0,0,0,1]]");
    const std::map<std::string, std::string> expected = {
        {"s01", "det = " + to_string(det(evaluate_product({{l, false}, {u, false}, {l, true}, {u, true}})))},
        {"s02", "rank = " + std::to_string(rank(m))},
        {"s03", "trace = " + to_string(trace_identity_check(parse_matrix("[[1,2],[3,4]]"), parse_vector("[1,2]")).value)},
        {"s04", "solution = "
                    + format_combination(solve_combination(
                        {parse_vector("[1,0,2]"), parse_vector("[1,2,4]"), parse_vector("[1,-1,3]"),
                         parse_vector("[1,1,1]")},
                        parse_vector("[4,-1,5]")))},
        {"s05", "det = " + to_string(det(parse_matrix("[[2,5,7],[0,3,-1],[0,0,1/2]]")))},
        {"s06", "value = " + to_string(evaluate_arithmetic("(7-3)*(2+5)/2"))},
        {"s07", "det = " + to_string(det(inverse(parse_matrix("[[2,1],[1,1]]"))))},
        {"s08", "rank = " + std::to_string(rank(parse_matrix("[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]")))},
        {"s09", "solution = "
                    + format_combination(solve_combination({parse_vector("[1]"), parse_vector("[2]")},
                                                           parse_vector("[3]")))},
        {"s10", "det = " + to_string(det(parse_matrix("[[0,1,0],[0,0,1],[1,0,0]]")))},
    };
    for (const auto& t : scripted_suite())
        EXPECT_EQ(oracle_answer(t), expected.at(t.id)) << t.id;
}

TEST(Suite, LineErrorsCarryLineNumbers)
{
    try {
        parse_suite("# comment\nid=a kind=arith_eval expr=\"1+1\"\n\nid=b kind=bogus expr=1\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("suite line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_suite("id=a kind=rank A=[[1]] colour=red\n"), ParseError);
    EXPECT_THROW(parse_suite("kind=rank A=[[1]]\n"), ParseError);
    EXPECT_THROW(parse_suite("id=a kind=rank A=[[1]]\nid=a kind=rank A=[[2]]\n"), ParseError);
    EXPECT_THROW(parse_suite("id=a kind=rank backend=scripted A=[[1]]\n"), ParseError);
    EXPECT_THROW(parse_suite("id=a kind=\"rank A=[[1]]\n"), ParseError);
}

TEST(Suite, PayloadErrorsOnlyFlagTheTask)
{
    const auto tasks = parse_suite("id=ok kind=arith_eval expr=\"2+3\"\n"
                                   "id=bad kind=determinant expr=\"[[1,2,3],[4,5,6]]\"\n"
                                   "id=big kind=rank A=[[1,2,3,4,5]]\n"
                                   "id=div kind=arith_eval expr=\"1/0\"\n");
    ASSERT_EQ(tasks.size(), 4u);
    EXPECT_TRUE(tasks[0].invalid.empty());
    EXPECT_FALSE(tasks[1].invalid.empty());
    EXPECT_FALSE(tasks[2].invalid.empty());
    EXPECT_FALSE(tasks[3].invalid.empty());
    EXPECT_EQ(tasks[0].prompt, "arith_eval 2+3");
}

TEST(RunSuite, OneRowPerTaskAndMode)
{
    const auto tasks = default_suite();
    const RunReport r = run_suite(tasks, DCoTConfig{}, RunOptions{});
    EXPECT_EQ(r.rows.size(), 2 * tasks.size());
    EXPECT_EQ(r.traces.size(), r.rows.size());
    EXPECT_FALSE(r.any_aborted());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        EXPECT_EQ(r.rows[2 * i].task_id, tasks[i].id);
        EXPECT_EQ(r.rows[2 * i].mode, Mode::dcot);
        EXPECT_EQ(r.rows[2 * i + 1].mode, Mode::long_cot_baseline);
    }
    RunOptions only;
    only.modes = {Mode::dcot};
    EXPECT_EQ(run_suite(tasks, DCoTConfig{}, only).rows.size(), tasks.size());
}

TEST(RunSuite, DeterministicAcrossRunsAndJobCounts)
{
    const auto tasks = default_suite();
    const FactStore facts = read_fact_corpus(data("facts.tsv"));
    RunOptions a;
    a.seed = 77;
    a.facts = &facts;
    RunOptions b = a;
    b.jobs = 4;
    const RunReport x = run_suite(tasks, DCoTConfig{}, a);
    const RunReport y = run_suite(tasks, DCoTConfig{}, a);
    const RunReport z = run_suite(tasks, DCoTConfig{}, b);
    EXPECT_EQ(strip_wall(x.rows), strip_wall(y.rows));
    EXPECT_EQ(strip_wall(x.rows), strip_wall(z.rows));
    EXPECT_EQ(x.traces, y.traces);
    EXPECT_EQ(x.traces, z.traces);
}

TEST(RunSuite, MalformedTaskIsIsolated)
{
    auto tasks = parse_suite("id=a kind=arith_eval expr=\"2+3\"\n"
                             "id=bad kind=determinant expr=\"[[1,2,3],[4,5,6]]\"\n"
                             "id=c kind=rank A=[[1,2],[2,4]]\n");
    RunOptions opt;
    opt.modes = {Mode::dcot};
    const RunReport r = run_suite(tasks, DCoTConfig{}, opt);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.rows[0].status, SessionStatus::ok);
    EXPECT_EQ(r.rows[1].status, SessionStatus::aborted);
    EXPECT_FALSE(r.rows[1].correct);
    EXPECT_EQ(r.rows[2].status, SessionStatus::ok);
    EXPECT_TRUE(r.rows[0].correct && r.rows[2].correct);
    EXPECT_TRUE(r.any_aborted());
}

TEST(RunSuite, DcotDominatesOnDefaultSuite)
{
    const auto tasks = default_suite();
    const FactStore facts = read_fact_corpus(data("facts.tsv"));
    RunOptions opt;
    opt.facts = &facts;
    const RunReport r = run_suite(tasks, DCoTConfig{}, opt);
    std::size_t tok_d = 0, tok_b = 0, max_d = 0, max_b = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const ReportRow& d = r.rows[2 * i];
        const ReportRow& b = r.rows[2 * i + 1];
        EXPECT_LE(d.token_count, b.token_count) << d.task_id;
        EXPECT_LE(d.step_count, b.step_count) << d.task_id;
        EXPECT_TRUE(d.correct) << d.task_id;
        tok_d += d.token_count;
        tok_b += b.token_count;
        max_d = std::max(max_d, d.step_count);
        max_b = std::max(max_b, b.step_count);
    }
    EXPECT_LT(tok_d, tok_b);
    EXPECT_LE(max_d, max_b);
}

TEST(Aggregate, MatchesRecomputation)
{
    std::vector<ReportRow> rows;
    SplitMix64 rng(4);
    for (int i = 0; i < 21; ++i) {
        ReportRow r;
        r.task_id = "t" + std::to_string(i / 2);
        r.mode = i % 2 ? Mode::long_cot_baseline : Mode::dcot;
        r.step_count = rng.below(9);
        r.token_count = rng.below(300);
        r.wall_time_ms = rng.uniform();
        r.correct = rng.below(2);
        r.status = i == 4 ? SessionStatus::aborted : SessionStatus::ok;
        rows.push_back(r);
    }
    for (const ModeAggregate& a : aggregate(rows)) {
        std::vector<double> steps;
        std::size_t total = 0, correct = 0;
        for (const auto& r : rows)
            if (r.mode == a.mode && !r.aborted()) {
                steps.push_back(static_cast<double>(r.step_count));
                total += r.token_count;
                correct += r.correct ? 1 : 0;
            }
        std::sort(steps.begin(), steps.end());
        EXPECT_EQ(a.step_count.max, steps.back());
        const double median = steps.size() % 2 ? steps[steps.size() / 2]
                                               : 0.5 * (steps[steps.size() / 2 - 1] + steps[steps.size() / 2]);
        EXPECT_EQ(a.step_count.median, median);
        EXPECT_EQ(a.total_tokens, total);
        EXPECT_EQ(a.correct, correct);
    }
    const MetricSummary s = summarize_metric({3.0, 1.0, 2.0, 10.0});
    EXPECT_EQ(s.max, 10.0);
    EXPECT_EQ(s.mean, 4.0);
    EXPECT_EQ(s.median, 2.5);
}

TEST(Csv, HeaderRowsAndRoundTrip)
{
    const auto tasks = default_suite();
    RunReport r = run_suite(tasks, DCoTConfig{}, RunOptions{});
    r.rows[3].task_id = "needs, \"quoting\"";
    const std::string body = render_csv(r.rows);
    std::size_t lines = 0;
    for (std::size_t p = body.find("\r\n"); p != std::string::npos; p = body.find("\r\n", p + 2))
        ++lines;
    EXPECT_EQ(lines, r.rows.size() + 1);
    EXPECT_EQ(body.rfind("task_id,mode,wall_time_ms,step_count,token_count,correct,episode_reward,status\r\n", 0), 0u);
    EXPECT_NE(body.find("\"needs, \"\"quoting\"\"\""), std::string::npos);
    const auto back = parse_csv(body);
    ASSERT_EQ(back.size(), r.rows.size());
    for (std::size_t i = 0; i < back.size(); ++i)
        EXPECT_EQ(back[i], r.rows[i]) << i;
}

TEST(Csv, RejectsMalformed)
{
    EXPECT_THROW(parse_csv("a,b\r\n"), ParseError);
    EXPECT_THROW(csv::parse("\"open"), ParseError);
}

TEST(Comparison, ListsRowMaxima)
{
    const auto tasks = scripted_suite();
    const RunReport r = run_suite(tasks, DCoTConfig{}, RunOptions{});
    const std::string table = render_comparison(r.rows);
    std::size_t max_d = 0, max_b = 0;
    for (const auto& row : r.rows)
        (row.mode == Mode::dcot ? max_d : max_b) = std::max(row.mode == Mode::dcot ? max_d : max_b, row.step_count);
    for (const auto& a : aggregate(r.rows))
        EXPECT_EQ(a.step_count.max, static_cast<double>(a.mode == Mode::dcot ? max_d : max_b));
    EXPECT_NE(table.find("step_count"), std::string::npos);
    EXPECT_NE(table.find(text::format_double(static_cast<double>(max_b))), std::string::npos);
}

TEST(EmitReport, WritesAllFiles)
{
    const auto dir = temp_dir("emit");
    const RunReport r = run_suite(scripted_suite(), DCoTConfig{}, RunOptions{});
    emit_report(r, dir);
    for (const char* f : {"run.csv", "comparison.txt", "traces.log"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_EQ(parse_csv(read_file(dir / "run.csv")), r.rows);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(emit_report(r, "/proc/definitely/not/writable"), IoError);
}

TEST(Train, Preconditions)
{
    const auto tasks = scripted_suite();
    EXPECT_THROW(train(tasks, 0, DCoTConfig{}), DomainError);
}

TEST(Train, ZeroLearningRateFreezesParameters)
{
    DCoTConfig cfg;
    cfg.eta_lr = 0.0;
    TrainOptions opt;
    opt.initial.w_adv = 0.25;
    opt.initial.bias = -0.125;
    const TrainResult r = train(scripted_suite(), 30, cfg, opt);
    EXPECT_EQ(r.params, opt.initial);
    EXPECT_EQ(r.curve.size(), 30u);
    EXPECT_EQ(r.log.size(), 30u);
    EXPECT_FALSE(r.diverged);
}

TEST(Train, DeterministicAndLogged)
{
    const auto tasks = scripted_suite();
    const TrainResult a = train(tasks, 20, DCoTConfig{});
    const TrainResult b = train(tasks, 20, DCoTConfig{});
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.curve, b.curve);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(a.log.front().rfind("episode=0 ", 0), 0u) << a.log.front();
    EXPECT_EQ(a.params.episodes, 20u);
}

TEST(Policy, RoundTrip)
{
    PolicyParams p;
    p.w_adv = 0.1 + 1e-17;
    p.w_gate = -3.5;
    p.bias = 1.0 / 3.0;
    p.baseline = 0.42;
    p.episodes = 300;
    EXPECT_EQ(parse_policy(serialize_policy(p)), p);
    EXPECT_THROW(parse_policy("w_adv=1\nfoo=2\n"), ParseError);
}

TEST(WindowMean, Bounds)
{
    const std::vector<double> v = {1, 2, 3, 4};
    EXPECT_EQ(window_mean(v, 1, 2), 2.5);
    EXPECT_THROW(window_mean(v, 3, 2), DomainError);
}
