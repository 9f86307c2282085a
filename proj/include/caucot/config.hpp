#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include <json.hpp>

#include "caucot/chain.hpp"
#include "caucot/errors.hpp"

namespace caucot {

// Run-level knobs. alpha/beta weight the answer- and logic-based causal
// effects and must sum to 1; sigma is the causalized confidence threshold,
// epsilon the first-step gate (defaults to sigma when unset).
struct CauCoTConfig {
    double alpha = 0.5;
    double beta = 0.5;
    double sigma = 0.75;
    std::optional<double> epsilon;
    int max_loops = 3;
    int votes_k = 8;
    int expectation_samples_m = 3;
    std::uint64_t seed = 42;
    ParentStrategy parent_strategy = ParentStrategy::full_history;
    int n_candidates = 3;
    double temperature = 1.0;
    double top_p = 0.9;

    double effective_epsilon() const { return epsilon ? *epsilon : sigma; }

    void validate() const {
        if (alpha < 0.0 || beta < 0.0) throw ConfigInvalid("alpha and beta must be >= 0");
        if (std::fabs(alpha + beta - 1.0) > 1e-9) {
            throw ConfigInvalid("alpha + beta must equal 1");
        }
        if (sigma < 0.0 || sigma > 1.0) throw ConfigInvalid("sigma must be in [0,1]");
        if (epsilon && (*epsilon < 0.0 || *epsilon > 1.0)) {
            throw ConfigInvalid("epsilon must be in [0,1]");
        }
        if (max_loops < 1) throw ConfigInvalid("max_loops must be >= 1");
        if (votes_k < 1) throw ConfigInvalid("votes_k must be >= 1");
        if (expectation_samples_m < 1) throw ConfigInvalid("expectation_samples_m must be >= 1");
        if (n_candidates < 1) throw ConfigInvalid("n_candidates must be >= 1");
    }

    // Echoed into reports and manifests; sigma/epsilon appear on both the
    // internal [0,1] scale and the CLI's 0-100 scale.
    ordered_json to_json() const {
        ordered_json j;
        j["alpha"] = alpha;
        j["beta"] = beta;
        j["sigma"] = sigma;
        j["sigma_percent"] = sigma * 100.0;
        j["epsilon"] = effective_epsilon();
        j["epsilon_percent"] = effective_epsilon() * 100.0;
        j["max_loops"] = max_loops;
        j["votes_k"] = votes_k;
        j["expectation_samples_m"] = expectation_samples_m;
        j["seed"] = seed;
        j["parent_strategy"] = to_string(parent_strategy);
        j["n_candidates"] = n_candidates;
        j["temperature"] = temperature;
        j["top_p"] = top_p;
        return j;
    }
};

}  // namespace caucot
