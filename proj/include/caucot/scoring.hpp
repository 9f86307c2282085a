#pragma once

#include <string>
#include <vector>

#include "caucot/backend.hpp"
#include "caucot/chain.hpp"
#include "caucot/config.hpp"
#include "caucot/errors.hpp"
#include "caucot/prompts.hpp"

namespace caucot {

// Per-step causal effect estimates, all normalized to [0,1].
// gamma_cot = alpha * gamma_a + beta * gamma_l.
struct CausalScores {
    double gamma_a = 0.0;
    double gamma_l = 0.0;
    double gamma_cot = 0.0;
    std::vector<int> samples_answer;  // raw 0-100 scores kept per sample
    std::vector<int> samples_logic;

    int sample_count() const { return static_cast<int>(samples_answer.size()); }
};

struct FirstStepScore {
    double gamma_fs = 0.0;
    std::vector<int> raw_samples;

    int sample_count() const { return static_cast<int>(raw_samples.size()); }
};

struct CausalVerdict {
    bool causal = false;
};

struct ComponentEstimate {
    double value = 0.0;
    std::vector<int> raw_samples;
};

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Renders the template, appends the score-format suffix, collects m samples
// and returns the mean of the parseable ones divided by 100. Unparseable
// samples are dropped; if every sample fails, that is an error rather than
// a fabricated default.
inline ComponentEstimate score_component(ScoringBackend& backend, TemplateName tpl,
                                         const Bindings& bindings, const Instruction& is,
                                         const CauCoTConfig& cfg) {
    BackendRequest req;
    req.prompt = render_prompt(prompt_template(tpl), bindings);
    req.prompt += "\n\n";
    req.prompt += kScoreFormatSuffix;
    req.mode = RequestMode::score;
    req.samples = cfg.expectation_samples_m;
    req.temperature = cfg.temperature;
    req.top_p = cfg.top_p;
    req.seed = cfg.seed;
    req.system = is.text;

    const BackendResponse resp = backend.complete(req);
    ComponentEstimate out;
    for (const std::string& completion : resp.completions) {
        try {
            out.raw_samples.push_back(parse_score(completion));
        } catch (const ParseFailure&) {
            // dropped
        }
    }
    if (out.raw_samples.empty()) {
        throw AllSamplesUnparseable("all " + std::to_string(resp.completions.size()) +
                                    " samples for " + to_string(tpl) + " were unparseable");
    }
    double sum = 0.0;
    for (int s : out.raw_samples) sum += s;
    out.value = clamp01(sum / static_cast<double>(out.raw_samples.size()) / 100.0);
    return out;
}

inline Bindings step_bindings(const Question& q, const ReasoningChain& chain, int i,
                              ParentStrategy strategy) {
    Bindings b;
    b["Q"] = q.text;
    b["c_i"] = chain.step(i).text;
    b["c_pa_i"] = render_parent_context(chain, extract_parents(chain, i, strategy));
    return b;
}

}  // namespace detail

// Answer-based causal effect of c^pa_i (Eq-9 analogue, prompt-scored).
inline ComponentEstimate estimate_gamma_a(ScoringBackend& backend, const Instruction& is,
                                          const Question& q, const ReasoningChain& chain, int i,
                                          const CauCoTConfig& cfg) {
    return detail::score_component(backend, TemplateName::gamma_a,
                                   detail::step_bindings(q, chain, i, cfg.parent_strategy), is,
                                   cfg);
}

// Logic-based causal effect of c^pa_i.
inline ComponentEstimate estimate_gamma_l(ScoringBackend& backend, const Instruction& is,
                                          const Question& q, const ReasoningChain& chain, int i,
                                          const CauCoTConfig& cfg) {
    return detail::score_component(backend, TemplateName::gamma_l,
                                   detail::step_bindings(q, chain, i, cfg.parent_strategy), is,
                                   cfg);
}

// First-step causal effect: impact of c_1 on answering Q at all.
inline FirstStepScore estimate_gamma_fs(ScoringBackend& backend, const Instruction& is,
                                        const Question& q, const ReasoningChain& chain,
                                        const CauCoTConfig& cfg) {
    if (chain.size() < 1) throw EmptyChain("cannot score an empty chain");
    Bindings b;
    b["Q"] = q.text;
    b["c_1"] = chain.step(1).text;
    const ComponentEstimate est =
        detail::score_component(backend, TemplateName::gamma_fs, b, is, cfg);
    return {est.value, est.raw_samples};
}

inline double combine_cace(double gamma_a, double gamma_l, double alpha, double beta) {
    if (std::fabs(alpha + beta - 1.0) > 1e-9) {
        throw ConfigInvalid("alpha + beta must equal 1 to combine CACE");
    }
    return alpha * gamma_a + beta * gamma_l;
}

// Causal iff gamma >= sigma; the boundary counts as causal (the repair loop
// runs only while gamma stays strictly below the threshold).
inline CausalVerdict verdict(double gamma_cot, double sigma) {
    return {gamma_cot >= sigma};
}

struct StepScoreRow {
    int index = 0;
    CausalScores scores;
    bool causal = false;
};

struct ChainScoreTable {
    FirstStepScore first_step;
    bool first_step_causal = false;
    std::vector<StepScoreRow> rows;  // steps 2..n
    int first_noncausal = -1;        // 1-based, -1 = fully causal
};

inline CausalScores score_step(ScoringBackend& backend, const Instruction& is, const Question& q,
                               const ReasoningChain& chain, int i, const CauCoTConfig& cfg) {
    CausalScores out;
    try {
        ComponentEstimate a = estimate_gamma_a(backend, is, q, chain, i, cfg);
        ComponentEstimate l = estimate_gamma_l(backend, is, q, chain, i, cfg);
        out.gamma_a = a.value;
        out.gamma_l = l.value;
        out.samples_answer = std::move(a.raw_samples);
        out.samples_logic = std::move(l.raw_samples);
    } catch (const BackendError& e) {
        throw StepScoringError(i, e.what());
    } catch (const AllSamplesUnparseable& e) {
        throw StepScoringError(i, e.what());
    } catch (const UnregisteredCase& e) {
        throw StepScoringError(i, e.what());
    }
    out.gamma_cot = combine_cace(out.gamma_a, out.gamma_l, cfg.alpha, cfg.beta);
    return out;
}

// Scores the whole chain: gamma_fs for step 1, (gamma_a, gamma_l, gamma_cot)
// for steps 2..n, verdicts against epsilon/sigma. No mutation.
inline ChainScoreTable score_chain(ScoringBackend& backend, const Instruction& is,
                                   const Question& q, const ReasoningChain& chain,
                                   const CauCoTConfig& cfg) {
    chain.validate();
    cfg.validate();

    ChainScoreTable table;
    try {
        table.first_step = estimate_gamma_fs(backend, is, q, chain, cfg);
    } catch (const BackendError& e) {
        throw StepScoringError(1, e.what());
    } catch (const AllSamplesUnparseable& e) {
        throw StepScoringError(1, e.what());
    } catch (const UnregisteredCase& e) {
        throw StepScoringError(1, e.what());
    }
    table.first_step_causal = table.first_step.gamma_fs >= cfg.effective_epsilon();
    if (!table.first_step_causal) table.first_noncausal = 1;

    for (int i = 2; i <= chain.size(); ++i) {
        StepScoreRow row;
        row.index = i;
        row.scores = score_step(backend, is, q, chain, i, cfg);
        row.causal = verdict(row.scores.gamma_cot, cfg.sigma).causal;
        if (!row.causal && table.first_noncausal < 0) table.first_noncausal = i;
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace caucot
