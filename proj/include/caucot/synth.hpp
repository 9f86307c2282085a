#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caucot/backend.hpp"
#include "caucot/chain.hpp"
#include "caucot/detail/hash.hpp"
#include "caucot/errors.hpp"

namespace caucot {

enum class ErrorKind { measure, collider, sensitivity, mediation };

inline std::string to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::measure: return "measure";
        case ErrorKind::collider: return "collider";
        case ErrorKind::sensitivity: return "sensitivity";
        default: return "mediation";
    }
}

inline ErrorKind error_kind_from_string(const std::string& s) {
    if (s == "measure") return ErrorKind::measure;
    if (s == "collider") return ErrorKind::collider;
    if (s == "sensitivity") return ErrorKind::sensitivity;
    if (s == "mediation") return ErrorKind::mediation;
    throw SpecInvalid("unknown error kind: " + s);
}

struct SynthSpec {
    int n_steps = 5;
    std::int64_t value_lo = 2;
    std::int64_t value_hi = 9;
    std::uint64_t seed = 0;
    std::optional<ErrorKind> error_kind;
    std::optional<int> error_step;

    void validate() const {
        if (n_steps < 3 || n_steps > 8) throw SpecInvalid("n_steps must be in 3..8");
        if (value_lo < 1 || value_hi < value_lo) {
            throw SpecInvalid("value range must satisfy 1 <= lo <= hi");
        }
        if (error_step && (*error_step < 1 || *error_step > n_steps)) {
            throw SpecInvalid("error_step out of range");
        }
        if (error_kind &&
            (*error_kind == ErrorKind::collider || *error_kind == ErrorKind::mediation)) {
            if (n_steps < 3) throw SpecInvalid("collider/mediation need n_steps >= 3");
            if (error_step && *error_step < 3) {
                throw SpecInvalid("collider/mediation need error_step >= 3");
            }
        }
    }
};

struct GroundTruth {
    std::string chain_id;
    std::int64_t clean_answer = 0;
    int error_step = -1;
    std::optional<ErrorKind> error_kind;
    std::string corrected_step_text;
    std::string error_step_text;
};

namespace synth_detail {

enum class Op { add, sub, mul };

inline char op_char(Op op) { return op == Op::add ? '+' : (op == Op::sub ? '-' : '*'); }

struct Operand {
    bool is_ref = false;
    std::int64_t literal = 0;
    int ref = 0;  // 1-based step index when is_ref

    std::string render() const {
        return is_ref ? "r" + std::to_string(ref) : std::to_string(literal);
    }
};

struct Expr {
    Operand lhs;
    Op op = Op::add;
    Operand rhs;

    std::string render() const {
        return lhs.render() + " " + std::string(1, op_char(op)) + " " + rhs.render();
    }
};

inline std::int64_t resolve(const Operand& o, const std::vector<std::int64_t>& values) {
    if (!o.is_ref) return o.literal;
    return values.at(static_cast<std::size_t>(o.ref - 1));
}

inline std::int64_t apply(Op op, std::int64_t a, std::int64_t b) {
    switch (op) {
        case Op::add: return a + b;
        case Op::sub: return a - b;
        default: return a * b;
    }
}

inline std::string step_text(const Expr& e, std::int64_t value) {
    return "compute " + e.render() + " = " + std::to_string(value);
}

// Parses "compute <operand> <op> <operand> = <value>".
inline Expr parse_step_expr(const std::string& text, int step_index, std::int64_t* stated) {
    const std::string prefix = "compute ";
    if (text.rfind(prefix, 0) != 0) {
        throw NotSynthetic("step " + std::to_string(step_index) + " is not in compute form");
    }
    const auto eq = text.rfind(" = ");
    if (eq == std::string::npos) {
        throw NotSynthetic("step " + std::to_string(step_index) + " lacks '= value'");
    }
    const std::string expr_part = text.substr(prefix.size(), eq - prefix.size());
    const std::string value_part = text.substr(eq + 3);

    auto parse_operand = [&](const std::string& tok) -> Operand {
        Operand o;
        if (!tok.empty() && tok[0] == 'r') {
            o.is_ref = true;
            try {
                o.ref = std::stoi(tok.substr(1));
            } catch (...) {
                throw NotSynthetic("bad reference operand: " + tok);
            }
            if (o.ref < 1 || o.ref >= step_index) {
                throw NotSynthetic("reference r" + std::to_string(o.ref) +
                                   " invalid in step " + std::to_string(step_index));
            }
            return o;
        }
        try {
            o.literal = std::stoll(tok);
        } catch (...) {
            throw NotSynthetic("bad literal operand: " + tok);
        }
        return o;
    };

    std::vector<std::string> toks;
    std::size_t pos = 0;
    while (pos < expr_part.size()) {
        const auto sp = expr_part.find(' ', pos);
        toks.push_back(expr_part.substr(pos, sp == std::string::npos ? std::string::npos : sp - pos));
        if (sp == std::string::npos) break;
        pos = sp + 1;
    }
    if (toks.size() != 3 || toks[1].size() != 1) {
        throw NotSynthetic("step " + std::to_string(step_index) + " expression malformed");
    }

    Expr e;
    e.lhs = parse_operand(toks[0]);
    e.rhs = parse_operand(toks[2]);
    switch (toks[1][0]) {
        case '+': e.op = Op::add; break;
        case '-': e.op = Op::sub; break;
        case '*': e.op = Op::mul; break;
        default: throw NotSynthetic("unknown operator in step " + std::to_string(step_index));
    }
    try {
        *stated = std::stoll(value_part);
    } catch (...) {
        throw NotSynthetic("bad stated value in step " + std::to_string(step_index));
    }
    return e;
}

inline bool any_substring_collision(const std::vector<std::string>& texts) {
    for (std::size_t a = 0; a < texts.size(); ++a) {
        for (std::size_t b = 0; b < texts.size(); ++b) {
            if (a != b && texts[a].find(texts[b]) != std::string::npos) return true;
        }
    }
    return false;
}

}  // namespace synth_detail

// Independently re-evaluates every step expression, ignoring the stated
// values, and returns the propagated final result. This is the brute-force
// oracle the derived test values come from.
inline std::int64_t evaluate_chain_arithmetic(const ReasoningChain& chain) {
    std::vector<std::int64_t> values;
    values.reserve(chain.steps.size());
    for (const Step& s : chain.steps) {
        std::int64_t stated = 0;
        const synth_detail::Expr e = synth_detail::parse_step_expr(s.text, s.index, &stated);
        values.push_back(synth_detail::apply(e.op, synth_detail::resolve(e.lhs, values),
                                             synth_detail::resolve(e.rhs, values)));
    }
    return values.back();
}

// Emits a clean chain: a linear pipeline of integer operations where each
// step past the first consumes earlier results via r<k> references. Fully
// deterministic per (spec, id); rerolls internally until no intermediate is
// zero and no step text is a substring of another (the oracle matches step
// texts by containment).
inline std::pair<ReasoningChain, GroundTruth> generate_clean_chain(const SynthSpec& spec,
                                                                   const std::string& id) {
    spec.validate();
    using namespace synth_detail;

    for (std::uint64_t attempt = 0; attempt < 256; ++attempt) {
        detail::Rng rng(detail::mix(spec.seed, attempt));
        std::vector<Expr> exprs;
        std::vector<std::int64_t> values;

        auto lit = [&]() -> Operand {
            Operand o;
            o.literal = rng.next_in(spec.value_lo, spec.value_hi);
            return o;
        };
        auto ref = [&](int k) -> Operand {
            Operand o;
            o.is_ref = true;
            o.ref = k;
            return o;
        };

        for (int i = 1; i <= spec.n_steps; ++i) {
            Expr e;
            if (i == 1) {
                e = {lit(), rng.next_in(0, 1) == 0 ? Op::add : Op::mul, lit()};
            } else if (i == 2) {
                e = {ref(1), rng.next_in(0, 1) == 0 ? Op::add : Op::sub, lit()};
            } else if (i == 3) {
                e = {ref(1), rng.next_in(0, 1) == 0 ? Op::add : Op::mul, ref(2)};
            } else {
                switch (rng.next_in(0, 2)) {
                    case 0: e = {ref(i - 1), rng.next_in(0, 1) == 0 ? Op::add : Op::sub, lit()}; break;
                    case 1: e = {ref(i - 1), Op::mul, lit()}; break;
                    default:
                        e = {ref(i - 2), rng.next_in(0, 1) == 0 ? Op::add : Op::mul, ref(i - 1)};
                        break;
                }
            }
            values.push_back(apply(e.op, resolve(e.lhs, values), resolve(e.rhs, values)));
            exprs.push_back(e);
        }

        const bool any_zero = std::any_of(values.begin(), values.end(),
                                          [](std::int64_t v) { return v == 0; });
        const bool too_big = std::any_of(values.begin(), values.end(), [](std::int64_t v) {
            return v > 1000000000000LL || v < -1000000000000LL;
        });
        if (any_zero || too_big) continue;

        std::vector<std::string> texts;
        for (int i = 0; i < spec.n_steps; ++i) {
            texts.push_back(step_text(exprs[static_cast<std::size_t>(i)],
                                      values[static_cast<std::size_t>(i)]));
        }
        if (any_substring_collision(texts)) continue;

        ReasoningChain chain;
        chain.question.id = id;
        chain.question.text =
            "Problem " + id + ": a calculator starts by computing " + exprs[0].render() +
            ", then derives one new value per step, reusing earlier results where the steps say " +
            "so. What integer does the final step produce?";
        chain.question.gold_answer = std::to_string(values.back());
        chain.question.domain_tag = DomainTag::math;
        for (int i = 1; i <= spec.n_steps; ++i) {
            Step s;
            s.index = i;
            s.text = texts[static_cast<std::size_t>(i - 1)];
            chain.steps.push_back(std::move(s));
        }
        chain.final_answer = std::to_string(values.back());
        chain.final_answer_extracted = false;
        chain.provenance = Provenance::synthetic;
        chain.validate();

        GroundTruth gt;
        gt.chain_id = id;
        gt.clean_answer = values.back();
        return {std::move(chain), std::move(gt)};
    }
    throw SpecInvalid("could not generate a well-formed chain for seed " +
                      std::to_string(spec.seed));
}

namespace synth_detail {

// Corruption variants for one target step, in deterministic order. Each
// variant changes the expression, never just the stated value, so the
// independent evaluator sees the corruption propagate.
inline std::vector<Expr> corruption_variants(const Expr& e, int step_index, ErrorKind kind,
                                             detail::Rng& rng) {
    std::vector<Expr> out;
    switch (kind) {
        case ErrorKind::measure: {
            // Wrong measurement of a given quantity: perturb a literal operand.
            std::vector<std::int64_t> deltas = {1, 2, 3, -1, -2, -3};
            const std::size_t rot = static_cast<std::size_t>(rng.next_u64() % deltas.size());
            std::rotate(deltas.begin(), deltas.begin() + static_cast<std::ptrdiff_t>(rot),
                        deltas.end());
            for (std::int64_t d : deltas) {
                if (!e.lhs.is_ref) {
                    Expr v = e;
                    v.lhs.literal += d;
                    out.push_back(v);
                }
                if (!e.rhs.is_ref) {
                    Expr v = e;
                    v.rhs.literal += d;
                    out.push_back(v);
                }
            }
            break;
        }
        case ErrorKind::sensitivity: {
            // Adjustment applied in the wrong direction.
            if (e.op == Op::add || e.op == Op::sub) {
                Expr v = e;
                v.op = e.op == Op::add ? Op::sub : Op::add;
                out.push_back(v);
            }
            break;
        }
        case ErrorKind::collider: {
            // Two parent values combined so neither contributes correctly.
            if (e.lhs.is_ref && e.rhs.is_ref) {
                if (e.op == Op::add) {
                    out.push_back({e.rhs, Op::sub, e.lhs});
                    out.push_back({e.lhs, Op::sub, e.rhs});
                } else if (e.op == Op::mul) {
                    out.push_back({e.lhs, Op::add, e.rhs});
                    out.push_back({e.rhs, Op::sub, e.lhs});
                }
            }
            break;
        }
        case ErrorKind::mediation: {
            // Skip the mediator: reference the value two hops back instead of
            // the directly preceding transformation.
            if (step_index >= 3) {
                if (e.rhs.is_ref && e.rhs.ref == step_index - 1) {
                    Expr v = e;
                    v.rhs.ref = step_index - 2;
                    out.push_back(v);
                }
                if (e.lhs.is_ref && e.lhs.ref == step_index - 1) {
                    Expr v = e;
                    v.lhs.ref = step_index - 2;
                    out.push_back(v);
                }
            }
            break;
        }
    }
    return out;
}

inline bool kind_compatible(const Expr& e, int step_index, ErrorKind kind) {
    switch (kind) {
        case ErrorKind::measure: return !e.lhs.is_ref || !e.rhs.is_ref;
        case ErrorKind::sensitivity: return e.op == Op::add || e.op == Op::sub;
        case ErrorKind::collider: return step_index >= 3 && e.lhs.is_ref && e.rhs.is_ref;
        case ErrorKind::mediation:
            return step_index >= 3 && ((e.lhs.is_ref && e.lhs.ref == step_index - 1) ||
                                       (e.rhs.is_ref && e.rhs.ref == step_index - 1));
    }
    return false;
}

}  // namespace synth_detail

// Pollutes exactly one step of a clean chain with the given causal error
// kind. The corrupted step states the value its own (wrong) expression
// yields in the clean context; downstream texts are untouched, so the
// corruption surfaces through evaluation, and the polluted final_answer is
// set to the propagated wrong result.
inline std::pair<ReasoningChain, GroundTruth> inject_error(const ReasoningChain& clean,
                                                           const GroundTruth& gt, ErrorKind kind,
                                                           std::uint64_t seed,
                                                           std::optional<int> pinned_step = {}) {
    using namespace synth_detail;
    clean.validate();

    std::vector<Expr> exprs;
    std::vector<std::int64_t> values;
    for (const Step& s : clean.steps) {
        std::int64_t stated = 0;
        exprs.push_back(parse_step_expr(s.text, s.index, &stated));
        values.push_back(apply(exprs.back().op, resolve(exprs.back().lhs, values),
                               resolve(exprs.back().rhs, values)));
    }
    const std::int64_t clean_answer = values.back();

    std::vector<int> targets;
    if (pinned_step) {
        targets.push_back(*pinned_step);
    } else {
        for (int i = 1; i <= clean.size(); ++i) {
            if (kind_compatible(exprs[static_cast<std::size_t>(i - 1)], i, kind)) {
                targets.push_back(i);
            }
        }
        // Seeded rotation so corpora spread errors across positions.
        if (!targets.empty()) {
            detail::Rng pick(detail::mix(seed, 0x7a6be7));
            const std::size_t rot = static_cast<std::size_t>(
                pick.next_u64() % static_cast<std::uint64_t>(targets.size()));
            std::rotate(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(rot),
                        targets.end());
        }
    }

    for (int e_idx : targets) {
        if (e_idx < 1 || e_idx > clean.size()) throw IncompatibleKind("error step out of range");
        const Expr& original = exprs[static_cast<std::size_t>(e_idx - 1)];
        if (!kind_compatible(original, e_idx, kind)) {
            if (pinned_step) {
                throw IncompatibleKind("step " + std::to_string(e_idx) + " cannot host a " +
                                       to_string(kind) + " error");
            }
            continue;
        }
        detail::Rng rng(detail::mix(seed, static_cast<std::uint64_t>(e_idx)));
        for (const Expr& corrupted : corruption_variants(original, e_idx, kind, rng)) {
            // Stated value consistent with the wrong expression in the clean
            // upstream context.
            std::vector<std::int64_t> upstream(values.begin(), values.begin() + (e_idx - 1));
            const std::int64_t corrupted_value =
                apply(corrupted.op, resolve(corrupted.lhs, upstream),
                      resolve(corrupted.rhs, upstream));

            ReasoningChain polluted = clean;
            polluted.step(e_idx).text = step_text(corrupted, corrupted_value);
            if (polluted.step(e_idx).text == clean.step(e_idx).text) continue;
            // Erroneous and corrected texts must not contain each other, or
            // containment-based ground-truth matching would misfire after a
            // repair.
            if (polluted.step(e_idx).text.find(clean.step(e_idx).text) != std::string::npos ||
                clean.step(e_idx).text.find(polluted.step(e_idx).text) != std::string::npos) {
                continue;
            }

            std::int64_t polluted_answer = 0;
            try {
                polluted_answer = evaluate_chain_arithmetic(polluted);
            } catch (const NotSynthetic&) {
                continue;
            }
            if (polluted_answer == clean_answer) continue;

            std::vector<std::string> texts;
            for (const Step& s : polluted.steps) texts.push_back(s.text);
            if (any_substring_collision(texts)) continue;

            polluted.final_answer = std::to_string(polluted_answer);
            polluted.final_answer_extracted = false;
            // gold stays the clean answer; the chain's own answer is wrong now

            GroundTruth out = gt;
            out.error_step = e_idx;
            out.error_kind = kind;
            out.corrected_step_text = clean.step(e_idx).text;
            out.error_step_text = polluted.step(e_idx).text;
            return {std::move(polluted), std::move(out)};
        }
        if (pinned_step) {
            throw IncompatibleKind("no sound " + to_string(kind) + " corruption at step " +
                                   std::to_string(e_idx));
        }
    }
    throw IncompatibleKind("chain has no step compatible with a " + to_string(kind) + " error");
}

inline GroundTruthEntry registry_entry(const ReasoningChain& chain, const GroundTruth& gt) {
    GroundTruthEntry e;
    e.chain_id = gt.chain_id;
    e.question_text = chain.question.text;
    e.error_step = gt.error_step;
    e.error_kind = gt.error_kind ? to_string(*gt.error_kind) : "";
    e.error_text = gt.error_step_text;
    e.corrected_text = gt.corrected_step_text;
    e.clean_answer = std::to_string(gt.clean_answer);
    return e;
}

}  // namespace caucot
