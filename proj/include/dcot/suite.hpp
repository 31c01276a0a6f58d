#ifndef DCOT_SUITE_HPP
#define DCOT_SUITE_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "backend.hpp"
#include "config.hpp"
#include "error.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "rational.hpp"
#include "scripted.hpp"
#include "text.hpp"

namespace dcot {

enum class TaskKind { arith_eval, determinant, rank, trace_identity, linear_combination, scripted };
enum class BackendKind { worked, moe, scripted };

inline std::string_view to_string(TaskKind k)
{
    switch (k) {
    case TaskKind::arith_eval: return "arith_eval";
    case TaskKind::determinant: return "determinant";
    case TaskKind::rank: return "rank";
    case TaskKind::trace_identity: return "trace_identity";
    case TaskKind::linear_combination: return "linear_combination";
    case TaskKind::scripted: return "scripted";
    }
    return "?";
}

inline TaskKind parse_task_kind(std::string_view s)
{
    for (TaskKind k : {TaskKind::arith_eval, TaskKind::determinant, TaskKind::rank, TaskKind::trace_identity,
                       TaskKind::linear_combination, TaskKind::scripted})
        if (to_string(k) == s)
            return k;
    throw ParseError("unknown task kind '" + std::string(s) + "'");
}

inline std::string_view to_string(BackendKind b)
{
    switch (b) {
    case BackendKind::worked: return "worked";
    case BackendKind::moe: return "moe";
    case BackendKind::scripted: return "scripted";
    }
    return "?";
}

inline constexpr std::size_t kMaxTaskDim = 4;

struct Task {
    std::string id;
    std::string prompt;
    TaskKind kind = TaskKind::arith_eval;
    BackendKind backend = BackendKind::worked;

    std::string expr;                   // arith_eval
    std::vector<MatrixFactor> factors;  // determinant: product of (possibly inverted) factors
    RMatrix matrix;                     // rank, trace_identity
    RVector x;                          // trace_identity, linear_combination target
    std::vector<RVector> vectors;       // linear_combination
    std::optional<ScriptedTrace> trace; // scripted
    std::string trace_path;

    std::size_t line = 0;
    std::string invalid; // non-empty: the task cannot run and its rows are flagged
};

namespace detail {

inline void check_dims(const RMatrix& m, const std::string& what)
{
    if (m.rows() == 0 || m.cols() == 0 || m.rows() > kMaxTaskDim || m.cols() > kMaxTaskDim)
        throw ShapeError(what + " must be between 1x1 and 4x4 (got " + std::to_string(m.rows()) + "x"
                         + std::to_string(m.cols()) + ")");
}

} // namespace detail

/// Canonical oracle string: reduced rationals, "(a,b,c)" vectors, "+sK*(..)" free directions.
inline std::string oracle_answer(const Task& task)
{
    switch (task.kind) {
    case TaskKind::arith_eval: return to_string(evaluate_arithmetic(task.expr));
    case TaskKind::determinant: return to_string(det(evaluate_product(task.factors)));
    case TaskKind::rank: return std::to_string(rank(task.matrix));
    case TaskKind::trace_identity: {
        const TraceIdentity r = trace_identity_check(task.matrix, task.x);
        if (!r.equal)
            throw IntegrityError("trace identity failed for task " + task.id);
        return to_string(r.value);
    }
    case TaskKind::linear_combination: return format_combination(solve_combination(task.vectors, task.x));
    case TaskKind::scripted:
        if (!task.trace)
            throw IntegrityError("scripted task " + task.id + " has no trace");
        return task.trace->final_answer();
    }
    throw IntegrityError("unknown task kind");
}

// ------------------------------------------------------------ worked traces

namespace detail {

struct TraceBuilder {
    ScriptedTrace trace;

    void step(std::string text, std::set<std::string> introduces = {}, std::set<std::string> references = {},
              double importance = 0.9, double reward = 0.8)
    {
        trace.segments.push_back({std::move(text), importance, reward, false, false, std::move(introduces),
                                  std::move(references)});
    }
    void redundant(std::string text, std::set<std::string> references = {})
    {
        trace.segments.push_back({std::move(text), 0.1, 0.1, true, false, {}, std::move(references)});
    }
    ScriptedTrace answer(std::string text, std::set<std::string> references)
    {
        trace.segments.push_back({std::move(text), 0.9, 1.0, false, true, {}, std::move(references)});
        check_trace(trace);
        return std::move(trace);
    }
};

inline std::string pivots_text(const std::vector<std::size_t>& cols)
{
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i)
        out += (i ? "," : "") + std::to_string(cols[i] + 1);
    return out.empty() ? "none" : out;
}

} // namespace detail

/*
 * Step-by-step trace of the exact oracle computation. Each trace opens by
 * restating the problem and re-checks before answering; those two kinds of
 * steps are marked redundant and carry low importance and reward.
 */
inline ScriptedTrace worked_trace(const Task& task)
{
    detail::TraceBuilder b;
    const std::string answer = oracle_answer(task);
    switch (task.kind) {
    case TaskKind::arith_eval: {
        b.redundant("restate: evaluate the expression " + task.expr);
        b.step("v = " + task.expr, {"v"});
        b.step("compute: v = " + answer, {}, {"v"});
        b.redundant("check again: the value is " + answer, {"v"});
        return b.answer("value = " + answer, {"v"});
    }
    case TaskKind::determinant: {
        b.redundant("restate: find the determinant of the product");
        std::set<std::string> ds;
        std::string product;
        const std::size_t shown = std::min<std::size_t>(task.factors.size(), 4);
        for (std::size_t i = 0; i < task.factors.size(); ++i) {
            const auto& f = task.factors[i];
            const Rational d = det(f.matrix);
            const std::string name = "d" + std::to_string(i + 1);
            const std::string value = f.inverted ? to_string(Rational(1) / d) : to_string(d);
            if (i < shown) {
                b.step(name + " = " + (f.inverted ? "1 / det of factor " : "det of factor ") + std::to_string(i + 1)
                           + " = " + value,
                       {name});
                ds.insert(name);
            }
            product += (i ? " * " : "") + value;
        }
        b.step("D = " + product + " = " + answer + " since det is multiplicative", {"D"}, ds);
        b.redundant("check again: the determinant of the product is " + answer, {"D"});
        return b.answer("det = " + answer, {"D"});
    }
    case TaskKind::rank: {
        const RowEchelon e = rref(task.matrix);
        b.redundant("restate: find the rank of the matrix");
        b.step("R = reduced row echelon form, pivots in columns " + detail::pivots_text(e.pivot_cols), {"R"});
        b.step("r = number of pivots of R = " + answer, {"r"}, {"R"});
        b.redundant("check again: the rank equals the number of pivot rows", {"r"});
        return b.answer("rank = " + answer, {"r"});
    }
    case TaskKind::trace_identity: {
        const TraceIdentity r = trace_identity_check(task.matrix, task.x);
        b.redundant("restate: compare trace(A x x^T) with x^T A x");
        b.step("y = A x = " + format_vector(task.matrix * task.x), {"y"});
        b.step("q = x^T y = " + to_string(r.quadratic), {"q"}, {"y"});
        b.step("t = trace(A x x^T) = " + to_string(r.trace_axxt) + " by the cyclic property", {"t"}, {"q"});
        b.redundant("check again: trace(x x^T A) = " + to_string(r.trace_xxta), {"t"});
        return b.answer("trace = " + answer, {"q", "t"});
    }
    case TaskKind::linear_combination: {
        const CombinationSolution s = solve_combination(task.vectors, task.x);
        b.redundant("restate: find all combinations of the vectors equal to x");
        b.step("M = matrix with the vectors as columns", {"M"});
        b.step("E = reduced echelon form of [M | x]", {"E"}, {"M"});
        if (!s.consistent)
            return b.answer("solution = inconsistent", {"E"});
        b.step("p = particular solution " + format_vector(s.particular), {"p"}, {"E"});
        std::string basis;
        for (std::size_t k = 0; k < s.nullspace.size(); ++k)
            basis += (k ? " " : "") + format_vector(s.nullspace[k]);
        b.step("n = nullspace basis " + (basis.empty() ? std::string("none") : basis), {"n"}, {"E"});
        b.redundant("check again: substitute back, M p = x", {"p"});
        return b.answer("solution = " + answer, {"p", "n"});
    }
    case TaskKind::scripted:
        return *task.trace;
    }
    throw IntegrityError("unknown task kind");
}

/// Session backend of a task. `model` supplies token signals (scripted, worked) or generation (moe).
inline std::unique_ptr<Backend> make_backend(const Task& task, const TinyMoeModel& model)
{
    if (!task.invalid.empty())
        throw DomainError("task " + task.id + ": " + task.invalid);
    switch (task.backend) {
    case BackendKind::moe: return std::make_unique<MoeBackend>(model, tokenize(oracle_answer(task)));
    case BackendKind::scripted:
        if (!task.trace)
            throw DomainError("task " + task.id + " has no scripted trace");
        return std::make_unique<ScriptedBackend>(*task.trace, &model);
    case BackendKind::worked: return std::make_unique<ScriptedBackend>(worked_trace(task), &model);
    }
    throw IntegrityError("unknown backend");
}

// ------------------------------------------------------------ suite files

/*
 * One task per line, blank lines and '#' comments ignored:
 *
 *   id=det-lu kind=determinant prompt="..." expr="[[..]]*inv([[..]])"
 *   id=r3 kind=rank A=[[1/2,1],[..]]
 *   id=tr kind=trace_identity A=[[..]] x=[..]
 *   id=lc kind=linear_combination vectors=[[..],[..]] x=[..]
 *   id=a1 kind=arith_eval expr="2+3"
 *   id=s1 kind=scripted trace=traces/s1.trace
 *
 * Optional backend=worked|moe|scripted. A line that does not split into
 * fields, lacks id/kind or names an unknown kind or field fails the whole
 * suite with its line number; a bad payload only marks that task invalid.
 */
inline std::vector<Task> parse_suite(std::string_view body, const std::filesystem::path& base_dir = {})
{
    std::vector<Task> tasks;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    for (const auto& raw : text::split(body, '\n')) {
        ++line_no;
        const std::string_view line = text::trim(raw);
        if (line.empty() || line.front() == '#')
            continue;
        auto fail = [&](const std::string& why) -> ParseError {
            return ParseError("suite line " + std::to_string(line_no) + ": " + why);
        };
        std::vector<std::pair<std::string, std::string>> fields;
        try {
            fields = text::parse_fields(line);
        } catch (const ParseError& e) {
            throw fail(e.what());
        }
        Task task;
        task.line = line_no;
        std::map<std::string, std::string> f;
        for (auto& [k, v] : fields) {
            static const std::set<std::string> known = {"id", "kind", "prompt", "backend", "expr", "A",
                                                        "x", "vectors", "trace"};
            if (!known.count(k))
                throw fail("unknown field '" + k + "'");
            if (!f.emplace(k, v).second)
                throw fail("duplicate field '" + k + "'");
        }
        if (!f.count("id") || f["id"].empty())
            throw fail("missing id");
        if (!f.count("kind"))
            throw fail("missing kind");
        task.id = f["id"];
        if (!seen.insert(task.id).second)
            throw fail("duplicate task id '" + task.id + "'");
        try {
            task.kind = parse_task_kind(f["kind"]);
        } catch (const ParseError& e) {
            throw fail(e.what());
        }
        task.prompt = f.count("prompt") ? f["prompt"] : std::string();
        task.backend = task.kind == TaskKind::scripted ? BackendKind::scripted : BackendKind::worked;
        if (f.count("backend")) {
            const std::string& b = f["backend"];
            if (b == "worked" && task.kind != TaskKind::scripted)
                task.backend = BackendKind::worked;
            else if (b == "moe")
                task.backend = BackendKind::moe;
            else if (b == "scripted" && task.kind == TaskKind::scripted)
                task.backend = BackendKind::scripted;
            else
                throw fail("backend '" + b + "' does not apply to kind " + std::string(to_string(task.kind)));
        }

        try {
            auto need = [&](const char* key) -> const std::string& {
                auto it = f.find(key);
                if (it == f.end())
                    throw ParseError(std::string("missing field '") + key + "'");
                return it->second;
            };
            switch (task.kind) {
            case TaskKind::arith_eval:
                task.expr = need("expr");
                evaluate_arithmetic(task.expr);
                break;
            case TaskKind::determinant:
                task.expr = need("expr");
                task.factors = parse_matrix_product(task.expr);
                for (const auto& fac : task.factors) {
                    detail::check_dims(fac.matrix, "determinant factor");
                    if (!fac.matrix.square())
                        throw ShapeError("determinant factor is not square");
                }
                evaluate_product(task.factors);
                break;
            case TaskKind::rank:
                task.matrix = parse_matrix(need("A"));
                detail::check_dims(task.matrix, "A");
                break;
            case TaskKind::trace_identity:
                task.matrix = parse_matrix(need("A"));
                task.x = parse_vector(need("x"));
                detail::check_dims(task.matrix, "A");
                if (!task.matrix.square() || task.matrix.rows() != task.x.size())
                    throw ShapeError("A must be n x n with n = len(x)");
                break;
            case TaskKind::linear_combination: {
                const RMatrix cols = parse_matrix(need("vectors"));
                task.x = parse_vector(need("x"));
                detail::check_dims(cols, "vectors");
                for (std::size_t r = 0; r < cols.rows(); ++r) {
                    RVector v(cols.cols());
                    for (std::size_t c = 0; c < cols.cols(); ++c)
                        v[c] = cols(r, c);
                    if (v.size() != task.x.size())
                        throw ShapeError("vector length differs from x");
                    task.vectors.push_back(std::move(v));
                }
                break;
            }
            case TaskKind::scripted: {
                task.trace_path = need("trace");
                std::filesystem::path p(task.trace_path);
                if (p.is_relative() && !base_dir.empty())
                    p = base_dir / p;
                task.trace = read_scripted_trace(p.string());
                break;
            }
            }
            if (task.prompt.empty())
                task.prompt = std::string(to_string(task.kind)) + " " + task.expr;
        } catch (const Error& e) {
            task.invalid = e.what();
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

inline std::vector<Task> read_suite(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read suite '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_suite(ss.str(), std::filesystem::path(path).parent_path());
}

} // namespace dcot

#endif
