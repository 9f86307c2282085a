#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "caucot/errors.hpp"

namespace caucot {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class DomainTag { math, physics, knowledge, other };
enum class StepStatus { original, causalized, exhausted };
enum class Provenance { dataset, synthetic, causalized };
enum class ParentStrategy { linear, full_history, explicit_parents };

inline std::string to_string(DomainTag t) {
    switch (t) {
        case DomainTag::math: return "math";
        case DomainTag::physics: return "physics";
        case DomainTag::knowledge: return "knowledge";
        default: return "other";
    }
}

inline DomainTag domain_tag_from_string(const std::string& s) {
    if (s == "math") return DomainTag::math;
    if (s == "physics") return DomainTag::physics;
    if (s == "knowledge") return DomainTag::knowledge;
    return DomainTag::other;
}

inline std::string to_string(StepStatus s) {
    switch (s) {
        case StepStatus::original: return "original";
        case StepStatus::causalized: return "causalized";
        default: return "exhausted";
    }
}

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::dataset: return "dataset";
        case Provenance::synthetic: return "synthetic";
        default: return "causalized";
    }
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "synthetic") return Provenance::synthetic;
    if (s == "causalized") return Provenance::causalized;
    return Provenance::dataset;
}

inline std::string to_string(ParentStrategy s) {
    switch (s) {
        case ParentStrategy::linear: return "linear";
        case ParentStrategy::explicit_parents: return "explicit";
        default: return "full_history";
    }
}

inline ParentStrategy parent_strategy_from_string(const std::string& s) {
    if (s == "linear") return ParentStrategy::linear;
    if (s == "explicit") return ParentStrategy::explicit_parents;
    if (s == "full_history") return ParentStrategy::full_history;
    throw ConfigInvalid("unknown parent strategy: " + s);
}

// Exogenous problem statement. gold_answer may be empty for corpora that
// only annotate the error location.
struct Question {
    std::string id;
    std::string text;
    std::string gold_answer;
    DomainTag domain_tag = DomainTag::other;

    bool operator==(const Question&) const = default;
};

// Exogenous system prompt; empty means 0-shot. Fixed for a pipeline run.
struct Instruction {
    std::string text;

    bool operator==(const Instruction&) const = default;
};

struct Step {
    int index = 0;  // 1-based
    std::string text;
    std::vector<int> parent_indices;  // used by ParentStrategy::explicit_parents
    StepStatus status = StepStatus::original;

    bool operator==(const Step&) const = default;
};

// Intermediate answer a step commits to.
struct StepAnswer {
    int step_index = 0;
    std::string answer_fragment;
    bool extracted = false;

    bool operator==(const StepAnswer&) const = default;
};

struct ReasoningChain {
    Question question;
    Instruction instruction;
    std::vector<Step> steps;
    std::string final_answer;
    bool final_answer_extracted = false;
    Provenance provenance = Provenance::dataset;

    bool operator==(const ReasoningChain&) const = default;

    int size() const { return static_cast<int>(steps.size()); }

    const Step& step(int i) const {
        if (i < 1 || i > size()) {
            throw IndexOutOfRange("step index " + std::to_string(i) + " not in 1.." +
                                  std::to_string(size()));
        }
        return steps[static_cast<std::size_t>(i - 1)];
    }

    Step& step(int i) {
        return const_cast<Step&>(static_cast<const ReasoningChain&>(*this).step(i));
    }

    // Enforces the construction invariants: contiguous 1..n indices, non-empty
    // texts, parents strictly preceding their step.
    void validate() const {
        if (steps.empty()) throw EmptyChain("chain has no steps");
        if (question.id.empty()) throw MalformedCase("question id is empty");
        if (question.text.empty()) throw MalformedCase("question text is empty");
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const Step& s = steps[k];
            if (s.index != static_cast<int>(k) + 1) {
                throw MalformedCase("step indices not contiguous at position " + std::to_string(k));
            }
            if (s.text.empty()) throw MalformedCase("step " + std::to_string(s.index) + " is empty");
            for (int p : s.parent_indices) {
                if (p < 1 || p >= s.index) {
                    throw MalformedCase("step " + std::to_string(s.index) +
                                        " has invalid parent " + std::to_string(p));
                }
            }
        }
    }
};

// One corpus record: a chain plus the dataset-level annotations that do not
// belong to the SCM itself.
struct CorpusCase {
    ReasoningChain chain;
    int label = -1;  // 1-based index of the first erroneous step, -1 if none
    std::string subset;

    bool operator==(const CorpusCase&) const = default;
};

namespace detail {

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

// Trailing "[...]" convention used by the step-annotated math corpora: the
// text after the last '[' carries the committed answer, usually as
// "[The answer is X." or just "[X".
inline std::optional<std::string> bracket_answer(const std::string& text) {
    const auto pos = text.rfind('[');
    if (pos == std::string::npos) return std::nullopt;
    std::string region = trim(text.substr(pos + 1));
    while (!region.empty() && (region.back() == '.' || region.back() == ']')) {
        region.pop_back();
        region = trim(region);
    }
    const auto is_pos = region.rfind(" is ");
    if (is_pos != std::string::npos) region = trim(region.substr(is_pos + 4));
    if (region.empty()) return std::nullopt;
    return region;
}

inline bool has_digit(const std::string& s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Last whitespace-delimited token that carries a value (contains a digit or
// is currency-prefixed), stripped of surrounding punctuation.
inline std::optional<std::string> trailing_value_token(const std::string& text) {
    std::string t = trim(text);
    while (!t.empty() && (t.back() == '.' || t.back() == ',' || t.back() == ']' || t.back() == ')')) {
        t.pop_back();
        t = trim(t);
    }
    const auto sp = t.find_last_of(" \t\n");
    std::string tok = (sp == std::string::npos) ? t : t.substr(sp + 1);
    while (!tok.empty() && (tok.front() == '(' || tok.front() == '[')) tok.erase(tok.begin());
    if (tok.empty()) return std::nullopt;
    if (has_digit(tok) || tok.front() == '$') return tok;
    return std::nullopt;
}

}  // namespace detail

// Answer committed by a step: bracketed value first, else the trailing
// numeric token, else the whole step text.
inline StepAnswer extract_step_answer(const ReasoningChain& chain, int i) {
    const std::string& text = chain.step(i).text;
    if (auto b = detail::bracket_answer(text)) return {i, *b, true};
    if (auto t = detail::trailing_value_token(text)) return {i, *t, true};
    return {i, detail::trim(text), false};
}

inline std::string extract_final_answer(const ReasoningChain& chain) {
    return extract_step_answer(chain, chain.size()).answer_fragment;
}

// Parent set of step i under the given strategy. Always a subset of
// {1..i-1}; the chain's step order is the SCM's topological order.
inline std::vector<int> extract_parents(const ReasoningChain& chain, int i, ParentStrategy strategy) {
    if (i < 1 || i > chain.size()) {
        throw IndexOutOfRange("step index " + std::to_string(i) + " not in 1.." +
                              std::to_string(chain.size()));
    }
    std::vector<int> out;
    switch (strategy) {
        case ParentStrategy::linear:
            if (i > 1) out.push_back(i - 1);
            break;
        case ParentStrategy::full_history:
            for (int p = 1; p < i; ++p) out.push_back(p);
            break;
        case ParentStrategy::explicit_parents:
            out = chain.step(i).parent_indices;
            std::sort(out.begin(), out.end());
            break;
    }
    return out;
}

// Parent text block inserted into the scoring/causalizing prompts.
inline std::string render_parent_context(const ReasoningChain& chain, const std::vector<int>& parents) {
    std::vector<int> ordered = parents;
    std::sort(ordered.begin(), ordered.end());
    std::string out;
    for (std::size_t k = 0; k < ordered.size(); ++k) {
        if (k > 0) out += '\n';
        out += "Step " + std::to_string(ordered[k]) + ": " + chain.step(ordered[k]).text;
    }
    return out;
}

namespace detail {

inline const json* find_field(const json& j, std::initializer_list<const char*> aliases) {
    for (const char* a : aliases) {
        if (auto it = j.find(a); it != j.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

}  // namespace detail

// Parses one dataset record. Field aliases accepted: problem|question,
// steps|solution_steps, final_answer|answer, id|case_id, subset|source|dataset.
inline CorpusCase parse_case(const json& record) {
    if (!record.is_object()) throw MalformedCase("case record is not a JSON object");

    CorpusCase out;
    ReasoningChain& chain = out.chain;

    const json* id = detail::find_field(record, {"id", "case_id"});
    if (!id || !id->is_string() || id->get<std::string>().empty()) {
        throw MalformedCase("missing or empty id");
    }
    chain.question.id = id->get<std::string>();

    const json* problem = detail::find_field(record, {"problem", "question"});
    if (!problem || !problem->is_string() || problem->get<std::string>().empty()) {
        throw MalformedCase("missing problem text");
    }
    chain.question.text = problem->get<std::string>();

    if (const json* gold = detail::find_field(record, {"gold_answer"})) {
        chain.question.gold_answer = gold->get<std::string>();
    }
    if (const json* tag = detail::find_field(record, {"domain_tag"})) {
        chain.question.domain_tag = domain_tag_from_string(tag->get<std::string>());
    }

    const json* steps = detail::find_field(record, {"steps", "solution_steps"});
    if (!steps || !steps->is_array()) throw MalformedCase("missing steps array");
    if (steps->empty()) throw EmptyChain("case has zero steps");

    const json* parents = detail::find_field(record, {"parents"});
    int idx = 0;
    for (const json& s : *steps) {
        if (!s.is_string() || s.get<std::string>().empty()) {
            throw MalformedCase("step " + std::to_string(idx + 1) + " is not a non-empty string");
        }
        Step step;
        step.index = ++idx;
        step.text = s.get<std::string>();
        if (parents && parents->is_array() &&
            static_cast<std::size_t>(idx - 1) < parents->size()) {
            for (const json& p : (*parents)[static_cast<std::size_t>(idx - 1)]) {
                step.parent_indices.push_back(p.get<int>());
            }
        }
        chain.steps.push_back(std::move(step));
    }

    if (const json* fa = detail::find_field(record, {"final_answer", "answer"})) {
        chain.final_answer = fa->get<std::string>();
        chain.final_answer_extracted = false;
    } else {
        chain.final_answer = extract_final_answer(chain);
        chain.final_answer_extracted = true;
    }

    if (const json* label = detail::find_field(record, {"label"})) out.label = label->get<int>();
    if (const json* subset = detail::find_field(record, {"subset", "source", "dataset"})) {
        out.subset = subset->get<std::string>();
    }
    if (const json* prov = detail::find_field(record, {"provenance"})) {
        chain.provenance = provenance_from_string(prov->get<std::string>());
    }

    chain.validate();
    return out;
}

inline ReasoningChain parse_chain(const json& record) {
    return parse_case(record).chain;
}

inline ordered_json serialize_case(const CorpusCase& c) {
    ordered_json j;
    j["id"] = c.chain.question.id;
    j["problem"] = c.chain.question.text;
    ordered_json steps = ordered_json::array();
    bool any_parents = false;
    for (const Step& s : c.chain.steps) {
        steps.push_back(s.text);
        any_parents = any_parents || !s.parent_indices.empty();
    }
    j["steps"] = std::move(steps);
    if (!c.chain.final_answer_extracted) j["final_answer"] = c.chain.final_answer;
    if (!c.chain.question.gold_answer.empty()) j["gold_answer"] = c.chain.question.gold_answer;
    j["label"] = c.label;
    j["domain_tag"] = to_string(c.chain.question.domain_tag);
    if (!c.subset.empty()) j["subset"] = c.subset;
    j["provenance"] = to_string(c.chain.provenance);
    if (any_parents) {
        ordered_json parents = ordered_json::array();
        for (const Step& s : c.chain.steps) parents.push_back(s.parent_indices);
        j["parents"] = std::move(parents);
    }
    return j;
}

}  // namespace caucot
