#ifndef DCOT_DECODER_HPP
#define DCOT_DECODER_HPP

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "assembly.hpp"
#include "backend.hpp"
#include "config.hpp"
#include "controller.hpp"
#include "discriminator.hpp"
#include "error.hpp"
#include "haro.hpp"
#include "rng.hpp"
#include "text.hpp"
#include "types.hpp"
#include "vocab.hpp"

namespace dcot {

/// Accepted token blocks C_t plus the decoding position and budget.
struct ChainState {
    TokenSeq query;                 // conditioning prompt
    std::vector<TokenSeq> blocks;   // accepted blocks, in order
    std::size_t t = 0;              // blocks processed (accepted or pruned)
    std::size_t budget_remaining = 0;
    std::size_t total_tokens = 0;

    ChainState() = default;
    ChainState(TokenSeq q, const DCoTConfig& cfg)
        : query(std::move(q)), budget_remaining(static_cast<std::size_t>(cfg.token_budget))
    {
    }
};

/// Raw block T_{t+1}: at most min(block_size, budget) tokens for generated text, the whole next segment (budget-clamped) for replay.
inline CoTSegment decode_block(const ChainState& chain, Backend& backend, const DCoTConfig& cfg)
{
    if (chain.t >= static_cast<std::size_t>(cfg.step_cap))
        throw SessionStop("step cap reached");
    if (chain.budget_remaining == 0)
        throw SessionStop("token budget exhausted");
    TokenSeq prefix = chain.query;
    for (const auto& b : chain.blocks) {
        if (!prefix.empty())
            prefix.push_back(Vocabulary::newline);
        prefix.insert(prefix.end(), b.begin(), b.end());
    }
    return backend.next_block(prefix, static_cast<std::size_t>(cfg.block_size), chain.budget_remaining);
}

/// C_{t+1} = C_t ∪ T_{t+1}. An empty (fully pruned) block only advances t.
inline void expand_chain(ChainState& chain, const TokenSeq& accepted, const DCoTConfig& cfg)
{
    if (chain.t >= static_cast<std::size_t>(cfg.step_cap))
        throw SessionStop("step cap reached");
    if (accepted.size() > chain.budget_remaining)
        throw BudgetStop("block of " + std::to_string(accepted.size()) + " tokens exceeds remaining budget "
                         + std::to_string(chain.budget_remaining));
    ++chain.t;
    if (accepted.empty())
        return;
    chain.blocks.push_back(accepted);
    chain.budget_remaining -= accepted.size();
    chain.total_tokens += accepted.size();
}

/// F(t+1): macro/micro tags of a block and its macro segments ordered by reward.
struct RefinedBlock {
    std::vector<std::size_t> macro;   // ids, reward order
    std::vector<std::size_t> micro;   // ids, generation order
    std::vector<double> rewards;      // parallel to macro
};

inline RefinedBlock refine_step(std::span<const CoTSegment> block)
{
    RefinedBlock out;
    const MacroMicroSplit split = assemble_split(block);
    out.macro = reward_map(split.c_macro);
    for (std::size_t id : out.macro)
        for (const auto& s : split.c_macro)
            if (s.id == id)
                out.rewards.push_back(s.partial_reward);
    for (const auto& s : split.c_micro)
        out.micro.push_back(s.id);
    return out;
}

struct SessionInput {
    std::string task_id;
    std::string prompt;
    std::string oracle_answer;
    std::uint64_t seed = 0;
};

struct SessionOptions {
    const FactStore* facts = nullptr; // discriminator source; null behaves as an empty store
    PolicyParams policy{};
    bool sample_policy = false;       // training: draw retention choices from pi_theta
};

/*
 * One reasoning session. dcot: discriminator gate, then the
 * decode -> adjust -> expand -> refine loop until the answer, the step cap
 * or the budget; baseline: no gate and every block kept. The assembled
 * chain yields the final answer and the episode reward.
 */
inline SessionTrace run_session(const SessionInput& input, Mode mode, Backend& backend, const DCoTConfig& cfg,
                                const SessionOptions& opts = {})
{
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    SessionTrace trace;
    trace.task_id = input.task_id;
    trace.mode = mode;
    trace.seed = input.seed;

    auto finish = [&] {
        trace.r_sem = semantic_reward(trace.final_answer, input.oracle_answer);
        trace.r_struct = structural_reward(trace.token_count, cfg.token_budget);
        trace.episode_reward = episode_reward(trace.r_sem, trace.token_count, cfg);
        trace.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    };

    if (mode == Mode::dcot) {
        static const FactStore empty_store;
        const auto verdict = discriminate(input.prompt, opts.facts ? *opts.facts : empty_store, cfg);
        if (verdict.decision == Decision::direct) {
            trace.direct = true;
            trace.final_answer = verdict.answer;
            trace.token_count = tokenize(verdict.answer).size();
            trace.step_count = 0;
            trace.assembly_report = "  direct: p_fact=" + text::format_double(verdict.p_fact)
                + " c_comp=" + std::to_string(verdict.c_comp) + '\n';
            finish();
            return trace;
        }
    }

    SplitMix64 rng(input.seed);
    Controller controller(cfg, mode, opts.policy, opts.sample_policy ? &rng : nullptr);
    ChainState chain(tokenize(input.prompt), cfg);
    bool answered = false;
    try {
        while (!backend.exhausted() && chain.t < static_cast<std::size_t>(cfg.step_cap)) {
            if (chain.budget_remaining == 0) {
                trace.status = SessionStatus::budget_stop;
                break;
            }
            Adjustment adj = adapt_tokens(controller, backend, chain.query, chain.budget_remaining, cfg);
            expand_chain(chain, adj.retained ? adj.segment.tokens : TokenSeq{}, cfg);
            answered = adj.segment.level == Level::answer;
            if (adj.choice)
                trace.choices.push_back(*adj.choice);
            trace.decisions.push_back(adj.decision);
            trace.steps.push_back(std::move(adj.segment));
            if (answered)
                break;
        }
        if (!answered && chain.budget_remaining == 0)
            trace.status = SessionStatus::budget_stop;
    } catch (const BudgetStop&) {
        trace.status = SessionStatus::budget_stop;
    } catch (const SessionStop&) {
    } catch (const std::exception& e) {
        trace.status = SessionStatus::aborted;
        trace.error = e.what();
    }

    const auto& retained = controller.buffer().retained();
    trace.step_count = retained.size();
    trace.token_count = chain.total_tokens;
    const AssembledChain assembled = assemble(retained);
    for (const auto& s : assembled.c_final)
        trace.final_order.push_back(s.id);
    if (assembled.answer) {
        trace.final_answer = assembled.answer->text;
        trace.low_confidence = assembled.answer->low_confidence;
    } else {
        trace.low_confidence = true;
    }
    trace.assembly_report = render_assembly(assembled);
    finish();
    return trace;
}

/*
 * One record per session:
 *
 *   session task=.. mode=.. seed=.. status=.. direct=.. steps=.. tokens=.. reward=.. r_sem=.. r_struct=..
 *           low_confidence=.. wall_ms=.. answer=".." [error=".."]
 *   step id=.. level=.. importance=.. tau_dyn=.. tau_ema=.. verdict=.. policy_discard=.. accepted=.. exception=".." text=".."
 *   final order=<ids>
 *   <assembly report lines>
 *   end
 *
 * With `with_wall_time` false the wall_ms field is omitted, which makes
 * replays byte-comparable.
 */
inline std::string serialize_trace(const SessionTrace& t, bool with_wall_time = true)
{
    std::ostringstream out;
    out << "session task=" << t.task_id << " mode=" << to_string(t.mode) << " seed=" << t.seed
        << " status=" << to_string(t.status) << " direct=" << (t.direct ? 1 : 0) << " steps=" << t.step_count
        << " tokens=" << t.token_count << " reward=" << text::format_double(t.episode_reward)
        << " r_sem=" << text::format_double(t.r_sem) << " r_struct=" << text::format_double(t.r_struct)
        << " low_confidence=" << (t.low_confidence ? 1 : 0);
    if (with_wall_time)
        out << " wall_ms=" << text::format_fixed(t.wall_time_ms, 3);
    out << " answer=" << text::quote(t.final_answer);
    if (!t.error.empty())
        out << " error=" << text::quote(t.error);
    out << '\n';
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const CoTSegment& s = t.steps[i];
        const DecisionRecord& d = t.decisions[i];
        out << "step id=" << s.id << " level=" << to_string(s.level)
            << " importance=" << text::format_double(d.importance)
            << " tau_dyn=" << (std::isinf(d.tau_dyn) ? std::string("-inf") : text::format_double(d.tau_dyn))
            << " tau_ema=" << text::format_double(d.tau_ema) << " verdict=" << to_string(d.verdict)
            << " policy_discard=" << (d.policy_discard ? 1 : 0) << " accepted=" << d.accepted_tokens
            << " exception=" << text::quote(d.exception_reason) << " text=" << text::quote(s.text) << '\n';
    }
    out << "final order=";
    for (std::size_t i = 0; i < t.final_order.size(); ++i)
        out << (i ? "," : "") << t.final_order[i];
    out << '\n' << t.assembly_report << "end\n";
    return out.str();
}

} // namespace dcot

#endif
