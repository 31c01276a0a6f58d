#ifndef DCOT_SCRIPTED_HPP
#define DCOT_SCRIPTED_HPP

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "text.hpp"
#include "types.hpp"
#include "vocab.hpp"

namespace dcot {

struct SegmentSpec {
    std::string text;
    double true_importance = 0.0;
    double reward = 0.0;
    bool redundant = false;
    bool answer = false;
    std::set<std::string> introduces;
    std::set<std::string> references;

    bool operator==(const SegmentSpec&) const = default;
};

/// Ground-truth reasoning trace replayed by the scripted backend.
struct ScriptedTrace {
    std::vector<SegmentSpec> segments;

    const std::string& final_answer() const
    {
        for (const auto& s : segments)
            if (s.answer)
                return s.text;
        throw IntegrityError("scripted trace has no answer segment");
    }

    bool operator==(const ScriptedTrace&) const = default;
};

namespace detail {

inline std::set<std::string> parse_ident_list(const std::string& v)
{
    std::set<std::string> out;
    if (v.empty())
        return out;
    for (auto& id : text::split(v, ','))
        if (!id.empty())
            out.insert(id);
    return out;
}

inline std::string join_idents(const std::set<std::string>& ids)
{
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty())
            out += ',';
        out += id;
    }
    return out;
}

} // namespace detail

/// Throws IntegrityError unless there is exactly one answer (last) and every reference was introduced earlier.
inline void check_trace(const ScriptedTrace& trace)
{
    std::size_t answers = 0;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < trace.segments.size(); ++i) {
        const auto& s = trace.segments[i];
        if (!(s.true_importance >= 0.0 && s.true_importance <= 1.0))
            throw IntegrityError("segment " + std::to_string(i) + ": importance outside [0,1]");
        if (!(s.reward >= 0.0 && s.reward <= 1.0))
            throw IntegrityError("segment " + std::to_string(i) + ": reward outside [0,1]");
        for (const auto& r : s.references)
            if (!seen.count(r))
                throw IntegrityError("segment " + std::to_string(i) + " references '" + r
                                     + "' before it is introduced");
        seen.insert(s.introduces.begin(), s.introduces.end());
        answers += s.answer ? 1 : 0;
    }
    if (answers != 1)
        throw IntegrityError("scripted trace must contain exactly one answer segment (found "
                             + std::to_string(answers) + ")");
    if (!trace.segments.back().answer)
        throw IntegrityError("the answer segment must be the last record");
}

/*
 * Trace file format, one record per line ('#' comments and blank lines skipped):
 *
 *   step   importance=<r> reward=<r> redundant=<0|1> introduces=<a,b> references=<c> text="<escaped>"
 *   answer importance=<r> reward=<r> redundant=0 introduces=... references=... text="..."
 *
 * Fields must appear in exactly this order; the last record is the answer.
 */
inline ScriptedTrace parse_scripted_trace(std::string_view body)
{
    static const std::vector<std::string> order = {"importance", "reward", "redundant", "introduces",
                                                   "references", "text"};
    ScriptedTrace trace;
    int line_no = 0;
    for (const auto& raw : text::split(body, '\n')) {
        ++line_no;
        auto line = text::trim(raw);
        if (line.empty() || line.front() == '#')
            continue;
        const std::string where = "trace line " + std::to_string(line_no) + ": ";
        auto sp = line.find_first_of(" \t");
        const std::string kind(line.substr(0, sp));
        if (kind != "step" && kind != "answer")
            throw ParseError(where + "unknown record kind '" + kind + "'");
        std::vector<std::pair<std::string, std::string>> fields;
        try {
            fields = text::parse_fields(sp == std::string_view::npos ? std::string_view{} : line.substr(sp));
        } catch (const ParseError& e) {
            throw ParseError(where + e.what());
        }
        if (fields.size() != order.size())
            throw ParseError(where + "expected " + std::to_string(order.size()) + " fields");
        for (std::size_t i = 0; i < order.size(); ++i)
            if (fields[i].first != order[i])
                throw ParseError(where + "unknown or misplaced field '" + fields[i].first + "' (expected '"
                                 + order[i] + "')");
        SegmentSpec s;
        try {
            s.true_importance = text::parse_double(fields[0].second, "importance");
            s.reward = text::parse_double(fields[1].second, "reward");
        } catch (const ParseError& e) {
            throw ParseError(where + e.what());
        }
        if (fields[2].second != "0" && fields[2].second != "1")
            throw ParseError(where + "redundant must be 0 or 1");
        s.redundant = fields[2].second == "1";
        s.introduces = detail::parse_ident_list(fields[3].second);
        s.references = detail::parse_ident_list(fields[4].second);
        s.text = fields[5].second;
        s.answer = kind == "answer";
        trace.segments.push_back(std::move(s));
    }
    if (trace.segments.empty())
        throw ParseError("empty scripted trace");
    try {
        check_trace(trace);
    } catch (const IntegrityError& e) {
        throw ParseError(e.what());
    }
    return trace;
}

inline std::string serialize_scripted_trace(const ScriptedTrace& trace)
{
    std::ostringstream out;
    for (const auto& s : trace.segments) {
        out << (s.answer ? "answer" : "step") << " importance=" << text::format_double(s.true_importance)
            << " reward=" << text::format_double(s.reward) << " redundant=" << (s.redundant ? 1 : 0)
            << " introduces=" << detail::join_idents(s.introduces)
            << " references=" << detail::join_idents(s.references) << " text=" << text::quote(s.text) << '\n';
    }
    return out.str();
}

inline ScriptedTrace read_scripted_trace(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read trace file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_scripted_trace(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// Candidate segment t of a scripted trace. Importance and advantage are left for the controller.
inline CoTSegment scripted_step(const ScriptedTrace& trace, std::size_t t)
{
    if (t >= trace.segments.size())
        throw IndexError("scripted_step: t=" + std::to_string(t) + " >= trace length "
                         + std::to_string(trace.segments.size()));
    const SegmentSpec& s = trace.segments[t];
    CoTSegment seg;
    seg.id = t;
    seg.text = s.text;
    seg.tokens = tokenize(s.text);
    seg.gating_score = s.true_importance;
    seg.partial_reward = s.reward;
    seg.level = s.answer ? Level::answer : Level::micro;
    seg.introduces = s.introduces;
    seg.references = s.references;
    return seg;
}

} // namespace dcot

#endif
