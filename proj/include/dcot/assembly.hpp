#ifndef DCOT_ASSEMBLY_HPP
#define DCOT_ASSEMBLY_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "text.hpp"
#include "types.hpp"

namespace dcot {

struct MacroMicroSplit {
    std::vector<CoTSegment> c_macro;
    std::vector<CoTSegment> c_micro;
    std::map<std::size_t, std::size_t> parent; // micro id -> macro id
};

/// Importance cut for macro segments: sorted[min(n-1, ceil(0.75 n))] (0-based), i.e. the top quarter.
inline double macro_cut(std::span<const CoTSegment> segs)
{
    std::vector<double> imp;
    imp.reserve(segs.size());
    for (const auto& s : segs)
        imp.push_back(s.importance);
    std::sort(imp.begin(), imp.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(imp.size())));
    return imp[std::min(imp.size() - 1, rank)];
}

/*
 * Macro: importance at or above the cut, plus every answer segment.
 * Micro: the rest, each attached to the nearest preceding non-answer macro
 * (falling back to the first non-answer macro, then to the answer).
 */
inline MacroMicroSplit assemble_split(std::span<const CoTSegment> buffer)
{
    MacroMicroSplit out;
    if (buffer.empty())
        return out;
    const double cut = macro_cut(buffer);
    std::vector<bool> is_macro(buffer.size());
    std::optional<std::size_t> first_plain, answer;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        is_macro[i] = buffer[i].level == Level::answer || buffer[i].importance >= cut;
        if (!is_macro[i])
            continue;
        if (buffer[i].level == Level::answer) {
            if (!answer)
                answer = buffer[i].id;
        } else if (!first_plain) {
            first_plain = buffer[i].id;
        }
    }
    std::optional<std::size_t> last_plain;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        CoTSegment s = buffer[i];
        if (is_macro[i]) {
            if (s.level != Level::answer) {
                s.level = Level::macro;
                last_plain = s.id;
            }
            out.c_macro.push_back(std::move(s));
        } else {
            s.level = Level::micro;
            out.parent[s.id] = last_plain ? *last_plain : first_plain ? *first_plain : *answer;
            out.c_micro.push_back(std::move(s));
        }
    }
    return out;
}

/// Macro ids by descending partial reward; ties keep generation order.
inline std::vector<std::size_t> reward_map(std::span<const CoTSegment> c_macro)
{
    std::vector<const CoTSegment*> order;
    for (const auto& s : c_macro)
        order.push_back(&s);
    std::stable_sort(order.begin(), order.end(), [](const CoTSegment* a, const CoTSegment* b) {
        if (a->partial_reward != b->partial_reward)
            return a->partial_reward > b->partial_reward;
        return a->id < b->id;
    });
    std::vector<std::size_t> ids;
    for (const auto* s : order)
        ids.push_back(s->id);
    return ids;
}

/// Macro segments in reward order, each followed by its micro segments (generation order); answer last.
inline std::vector<CoTSegment> refine(const MacroMicroSplit& split, std::span<const std::size_t> ranking)
{
    std::map<std::size_t, const CoTSegment*> macro_by_id;
    for (const auto& s : split.c_macro)
        macro_by_id[s.id] = &s;
    std::map<std::size_t, std::vector<const CoTSegment*>> children;
    for (const auto& s : split.c_micro)
        children[split.parent.at(s.id)].push_back(&s);
    for (auto& [_, list] : children)
        std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->id < b->id; });

    std::vector<CoTSegment> out;
    std::vector<const CoTSegment*> answers;
    auto emit = [&](const CoTSegment* m) {
        auto it = children.find(m->id);
        if (m->level == Level::answer) {
            if (it != children.end())
                for (auto* c : it->second)
                    out.push_back(*c);
            out.push_back(*m);
            return;
        }
        out.push_back(*m);
        if (it != children.end())
            for (auto* c : it->second)
                out.push_back(*c);
    };
    for (std::size_t id : ranking) {
        const CoTSegment* m = macro_by_id.at(id);
        if (m->level == Level::answer)
            answers.push_back(m);
        else
            emit(m);
    }
    for (auto* a : answers)
        emit(a);
    return out;
}

struct FinalAnswer {
    std::string text;
    bool low_confidence = false;
};

/// Answer segment text, else the last macro segment's text flagged low-confidence.
inline FinalAnswer output_answer(std::span<const CoTSegment> c_final)
{
    if (c_final.empty())
        throw NoAnswerError("no reasoning segment survived; nothing to answer from");
    for (auto it = c_final.rbegin(); it != c_final.rend(); ++it)
        if (it->level == Level::answer)
            return {it->text, false};
    for (auto it = c_final.rbegin(); it != c_final.rend(); ++it)
        if (it->level == Level::macro)
            return {it->text, true};
    return {c_final.back().text, true};
}

struct AssembledChain {
    std::vector<CoTSegment> c_macro;
    std::vector<CoTSegment> c_micro;
    std::vector<std::size_t> ranking;
    std::vector<CoTSegment> c_final;
    std::optional<FinalAnswer> answer;
};

inline AssembledChain assemble(std::span<const CoTSegment> buffer)
{
    AssembledChain chain;
    MacroMicroSplit split = assemble_split(buffer);
    chain.ranking = reward_map(split.c_macro);
    chain.c_final = refine(split, chain.ranking);
    if (!chain.c_final.empty())
        chain.answer = output_answer(chain.c_final);
    chain.c_macro = std::move(split.c_macro);
    chain.c_micro = std::move(split.c_micro);
    return chain;
}

/// Human-readable section: macro headers, indented micro lines, final answer.
inline std::string render_assembly(const AssembledChain& chain)
{
    std::ostringstream out;
    for (const auto& s : chain.c_final) {
        std::string line = s.text;
        std::replace(line.begin(), line.end(), '\n', ' ');
        if (s.level == Level::micro)
            out << "    - [" << s.id << "] " << line << '\n';
        else if (s.level == Level::answer)
            out << "  ANSWER [" << s.id << "] " << line << '\n';
        else
            out << "  # [" << s.id << "] " << line << '\n';
    }
    if (chain.answer)
        out << "  final: " << chain.answer->text << (chain.answer->low_confidence ? " (low confidence)" : "") << '\n';
    else
        out << "  final: <no answer>\n";
    return out.str();
}

} // namespace dcot

#endif
