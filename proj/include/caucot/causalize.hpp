#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "caucot/backend.hpp"
#include "caucot/chain.hpp"
#include "caucot/config.hpp"
#include "caucot/detail/hash.hpp"
#include "caucot/scoring.hpp"

namespace caucot {

struct AgentRole {
    enum class Source { tag_table, override_cli };
    std::string label;
    Source source = Source::tag_table;
};

// Role-playing persona for the causalizing query. The table keys off the
// question's domain tag; an explicit override always wins.
inline AgentRole infer_agent_role(const Question& q,
                                  const std::optional<std::string>& override_label = {}) {
    if (override_label && !override_label->empty()) {
        return {*override_label, AgentRole::Source::override_cli};
    }
    switch (q.domain_tag) {
        case DomainTag::math: return {"mathematician", AgentRole::Source::tag_table};
        case DomainTag::physics: return {"physicist", AgentRole::Source::tag_table};
        case DomainTag::knowledge: return {"domain expert", AgentRole::Source::tag_table};
        default: return {"expert problem solver", AgentRole::Source::tag_table};
    }
}

namespace detail {

// "1. text" / "2) text" item starts; other lines continue the current item.
inline std::vector<std::string> parse_numbered_list(const std::string& text) {
    std::vector<std::string> items;
    std::size_t pos = 0;
    std::string current;
    bool in_item = false;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        const std::string line =
            text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        std::size_t k = 0;
        while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) ++k;
        std::size_t d = k;
        while (d < line.size() && is_digit(line[d])) ++d;
        const bool item_start =
            d > k && d < line.size() && (line[d] == '.' || line[d] == ')');
        if (item_start) {
            if (in_item && !trim(current).empty()) items.push_back(trim(current));
            std::size_t body = d + 1;
            while (body < line.size() && line[body] == ' ') ++body;
            current = line.substr(body);
            in_item = true;
        } else if (in_item) {
            current += '\n';
            current += line;
        }
        if (eol == std::string::npos) break;
        pos = eol + 1;
    }
    if (in_item && !trim(current).empty()) items.push_back(trim(current));
    return items;
}

}  // namespace detail

// Causalizing process: asks the agent for replacement candidates for the
// failing step. A completion without list structure yields itself as the
// single candidate.
inline std::vector<std::string> propose_candidates(ScoringBackend& backend, const AgentRole& agent,
                                                   const Question& q, const std::string& c_pa_text,
                                                   const std::string& c_dot_text, int n_candidates,
                                                   const Instruction& is, const CauCoTConfig& cfg) {
    Bindings b;
    b["agent"] = agent.label;
    b["Q"] = q.text;
    b["c_pa_i"] = c_pa_text;
    b["c_dot_i"] = c_dot_text;

    BackendRequest req;
    req.prompt = render_prompt(prompt_template(TemplateName::causalize), b);
    req.mode = RequestMode::generate;
    req.samples = 1;
    req.temperature = cfg.temperature;
    req.top_p = cfg.top_p;
    req.seed = cfg.seed;
    req.system = is.text;

    const BackendResponse resp = backend.complete(req);
    if (resp.completions.empty()) throw GenerationEmpty("causalizing returned no completion");
    const std::string completion = resp.completions.front();
    if (detail::trim(completion).empty()) {
        throw GenerationEmpty("causalizing returned a blank completion");
    }

    std::vector<std::string> candidates = detail::parse_numbered_list(completion);
    if (candidates.empty()) candidates.push_back(detail::trim(completion));
    if (static_cast<int>(candidates.size()) > n_candidates) {
        candidates.resize(static_cast<std::size_t>(n_candidates));
    }
    return candidates;
}

struct RefineChoice {
    std::string text;
    int index = 1;  // 1-based position in the candidate list
    bool parse_failed = false;
};

// Refine process: the agent picks one candidate. Singleton lists short-
// circuit; an unparseable choice falls back to candidate 1 with a warning
// flag so the audit log records it.
inline RefineChoice refine_select(ScoringBackend& backend, const AgentRole& agent,
                                  const Question& q, const std::vector<std::string>& candidates,
                                  const Instruction& is, const CauCoTConfig& cfg) {
    if (candidates.empty()) throw GenerationEmpty("refine requires at least one candidate");
    if (candidates.size() == 1) return {candidates.front(), 1, false};

    std::string enumerated;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (k > 0) enumerated += '\n';
        enumerated += std::to_string(k + 1) + ". " + candidates[k];
    }

    Bindings b;
    b["agent"] = agent.label;
    b["Q"] = q.text;
    b["candidates"] = enumerated;

    BackendRequest req;
    req.prompt = render_prompt(prompt_template(TemplateName::refine), b);
    req.mode = RequestMode::generate;
    req.samples = 1;
    req.temperature = cfg.temperature;
    req.top_p = cfg.top_p;
    req.seed = cfg.seed;
    req.system = is.text;

    const BackendResponse resp = backend.complete(req);
    const std::string completion = resp.completions.empty() ? "" : resp.completions.front();

    // Last standalone integer within [1, k] names the chosen candidate;
    // digits glued to letters (as in step references like "r3") don't count.
    std::optional<int> chosen;
    const int k_max = static_cast<int>(candidates.size());
    std::size_t i = 0;
    while (i < completion.size()) {
        if (!detail::is_digit(completion[i])) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < completion.size() && detail::is_digit(completion[i])) ++i;
        const bool letter_before = start > 0 && detail::is_alpha(completion[start - 1]);
        const bool letter_after = i < completion.size() && detail::is_alpha(completion[i]);
        if (!letter_before && !letter_after && i - start <= 6) {
            const long v = std::stol(completion.substr(start, i - start));
            if (v >= 1 && v <= k_max) chosen = static_cast<int>(v);
        }
    }
    if (!chosen) return {candidates.front(), 1, true};
    return {candidates[static_cast<std::size_t>(*chosen - 1)], *chosen, false};
}

// One audit line per (chain, step, loop) event; loop 0 is the initial
// scoring pass, loops >= 1 are repair iterations.
struct AuditRecord {
    std::string chain_id;
    int step = 0;
    int loop = 0;
    std::string phase;  // "fsce" | "cace" | "repair"
    std::vector<std::string> prompt_hashes;
    std::vector<int> raw_scores;
    double gamma_a = -1.0;
    double gamma_l = -1.0;
    double gamma_cot = -1.0;
    double gamma_fs = -1.0;
    bool causal = false;
    std::string replacement;
    bool refine_parse_failed = false;

    ordered_json to_json() const {
        ordered_json j;
        j["chain_id"] = chain_id;
        j["step"] = step;
        j["loop"] = loop;
        j["phase"] = phase;
        j["prompt_hashes"] = prompt_hashes;
        j["raw_scores"] = raw_scores;
        if (gamma_fs >= 0.0) j["gamma_fs"] = gamma_fs;
        if (gamma_a >= 0.0) j["gamma_a"] = gamma_a;
        if (gamma_l >= 0.0) j["gamma_l"] = gamma_l;
        if (gamma_cot >= 0.0) j["gamma_cot"] = gamma_cot;
        j["causal"] = causal;
        if (!replacement.empty()) j["replacement"] = replacement;
        if (refine_parse_failed) j["refine_parse_failed"] = true;
        return j;
    }
};

struct StepScoresSnapshot {
    double gamma_a = -1.0;
    double gamma_l = -1.0;
    double gamma_cot = -1.0;
    double gamma_fs = -1.0;

    double gated_value() const { return gamma_fs >= 0.0 ? gamma_fs : gamma_cot; }
};

struct StepLog {
    int index = 0;
    int loops_used = 0;
    StepScoresSnapshot scores_before;
    StepScoresSnapshot scores_after;
    StepStatus status = StepStatus::original;
    bool causal = false;
};

enum class CausalizeStatus { Success, Exhausted };

inline std::string to_string(CausalizeStatus s) {
    return s == CausalizeStatus::Success ? "Success" : "Exhausted";
}

struct CausalizeOutcome {
    ReasoningChain chain;
    std::vector<StepLog> step_log;
    CausalizeStatus status = CausalizeStatus::Success;
    int total_loops = 0;
    int generate_calls = 0;
    int score_calls = 0;
    std::vector<AuditRecord> audit;
};

// Chains still carrying at least one non-causal step after a scoring pass.
struct PendingEntry {
    std::string chain_id;
    int first_noncausal = -1;
};

struct PendingSet {
    std::vector<PendingEntry> entries;

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

inline PendingSet build_pending_set(
    const std::vector<std::pair<std::string, ChainScoreTable>>& scored) {
    PendingSet out;
    for (const auto& [id, table] : scored) {
        if (table.first_noncausal > 0) out.entries.push_back({id, table.first_noncausal});
    }
    return out;
}

namespace detail {

inline std::string prompt_hash(const std::string& prompt) {
    return hex64(fnv1a64(prompt));
}

struct GateScore {
    StepScoresSnapshot snapshot;
    std::vector<int> raw;
    std::vector<std::string> hashes;
    bool causal = false;
};

// Scores the gate relevant for step i: FSCE for step 1, CACE otherwise.
inline GateScore score_gate(ScoringBackend& backend, const Instruction& is, const Question& q,
                            const ReasoningChain& chain, int i, const CauCoTConfig& cfg,
                            int* score_calls) {
    GateScore out;
    if (i == 1) {
        FirstStepScore fs = estimate_gamma_fs(backend, is, q, chain, cfg);
        *score_calls += 1;
        out.snapshot.gamma_fs = fs.gamma_fs;
        out.raw = fs.raw_samples;
        Bindings b{{"Q", q.text}, {"c_1", chain.step(1).text}};
        out.hashes.push_back(prompt_hash(render_prompt(prompt_template(TemplateName::gamma_fs), b)));
        out.causal = fs.gamma_fs >= cfg.effective_epsilon();
    } else {
        CausalScores s = score_step(backend, is, q, chain, i, cfg);
        *score_calls += 2;
        out.snapshot.gamma_a = s.gamma_a;
        out.snapshot.gamma_l = s.gamma_l;
        out.snapshot.gamma_cot = s.gamma_cot;
        out.raw = s.samples_answer;
        out.raw.insert(out.raw.end(), s.samples_logic.begin(), s.samples_logic.end());
        const Bindings b = step_bindings(q, chain, i, cfg.parent_strategy);
        out.hashes.push_back(prompt_hash(render_prompt(prompt_template(TemplateName::gamma_a), b)));
        out.hashes.push_back(prompt_hash(render_prompt(prompt_template(TemplateName::gamma_l), b)));
        out.causal = verdict(s.gamma_cot, cfg.sigma).causal;
    }
    return out;
}

}  // namespace detail

struct StepRepairResult {
    int loops_used = 0;
    StepStatus status = StepStatus::original;
    StepScoresSnapshot final_scores;
    bool causal = false;
};

// Repair loop for one non-causal step: propose candidates, refine-select,
// replace the step text, re-score, until the verdict flips or max_loops is
// spent. The chain is edited in place.
inline StepRepairResult causalize_step(ScoringBackend& backend, const Instruction& is,
                                       const Question& q, ReasoningChain& chain, int i,
                                       const CauCoTConfig& cfg, const AgentRole& agent,
                                       CausalizeOutcome& out) {
    StepRepairResult result;
    for (int loop = 1; loop <= cfg.max_loops; ++loop) {
        const std::string c_pa =
            render_parent_context(chain, extract_parents(chain, i, cfg.parent_strategy));
        const std::string failing = chain.step(i).text;

        const std::vector<std::string> candidates =
            propose_candidates(backend, agent, q, c_pa, failing, cfg.n_candidates, is, cfg);
        out.generate_calls += 1;
        RefineChoice choice = refine_select(backend, agent, q, candidates, is, cfg);
        if (candidates.size() > 1) out.generate_calls += 1;

        chain.step(i).text = choice.text;
        chain.step(i).status = StepStatus::causalized;

        const detail::GateScore rescored =
            detail::score_gate(backend, is, q, chain, i, cfg, &out.score_calls);

        AuditRecord rec;
        rec.chain_id = q.id;
        rec.step = i;
        rec.loop = loop;
        rec.phase = "repair";
        rec.prompt_hashes = rescored.hashes;
        rec.raw_scores = rescored.raw;
        rec.gamma_a = rescored.snapshot.gamma_a;
        rec.gamma_l = rescored.snapshot.gamma_l;
        rec.gamma_cot = rescored.snapshot.gamma_cot;
        rec.gamma_fs = rescored.snapshot.gamma_fs;
        rec.causal = rescored.causal;
        rec.replacement = choice.text;
        rec.refine_parse_failed = choice.parse_failed;
        out.audit.push_back(std::move(rec));

        result.loops_used = loop;
        result.final_scores = rescored.snapshot;
        result.causal = rescored.causal;
        if (rescored.causal) {
            result.status = StepStatus::causalized;
            return result;
        }
    }
    result.status = StepStatus::exhausted;
    chain.step(i).status = StepStatus::exhausted;
    return result;
}

struct RunCauCoTOptions {
    std::optional<std::string> agent_override;
};

// The CauCoT loop over one chain: FSCE gate on step 1, then per-step CACE
// verdicts in index order, repairing through the causalize/refine queries
// while a step stays below its threshold. Later steps always see the latest
// (possibly repaired) parent texts.
inline CausalizeOutcome run_caucot(ScoringBackend& backend, const Instruction& is,
                                   const ReasoningChain& input, const CauCoTConfig& cfg,
                                   const RunCauCoTOptions& options = {}) {
    input.validate();
    cfg.validate();

    CausalizeOutcome out;
    out.chain = input;
    const Question& q = out.chain.question;
    const AgentRole agent = infer_agent_role(q, options.agent_override);

    bool all_causal = true;
    bool any_repair = false;

    for (int i = 1; i <= out.chain.size(); ++i) {
        StepLog log;
        log.index = i;

        const detail::GateScore initial =
            detail::score_gate(backend, is, q, out.chain, i, cfg, &out.score_calls);
        log.scores_before = initial.snapshot;
        log.scores_after = initial.snapshot;
        log.causal = initial.causal;

        AuditRecord rec;
        rec.chain_id = q.id;
        rec.step = i;
        rec.loop = 0;
        rec.phase = i == 1 ? "fsce" : "cace";
        rec.prompt_hashes = initial.hashes;
        rec.raw_scores = initial.raw;
        rec.gamma_a = initial.snapshot.gamma_a;
        rec.gamma_l = initial.snapshot.gamma_l;
        rec.gamma_cot = initial.snapshot.gamma_cot;
        rec.gamma_fs = initial.snapshot.gamma_fs;
        rec.causal = initial.causal;
        out.audit.push_back(std::move(rec));

        if (!initial.causal) {
            const StepRepairResult repair =
                causalize_step(backend, is, q, out.chain, i, cfg, agent, out);
            any_repair = true;
            log.loops_used = repair.loops_used;
            log.scores_after = repair.final_scores;
            log.status = repair.status;
            log.causal = repair.causal;
            out.total_loops += repair.loops_used;
            if (!repair.causal) all_causal = false;
        }

        out.step_log.push_back(std::move(log));
    }

    out.status = all_causal ? CausalizeStatus::Success : CausalizeStatus::Exhausted;
    if (any_repair) {
        out.chain.final_answer = extract_final_answer(out.chain);
        out.chain.final_answer_extracted = true;
        out.chain.provenance = Provenance::causalized;
    }
    return out;
}

}  // namespace caucot
