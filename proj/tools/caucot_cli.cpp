// caucot: score chain-of-thought traces for causal quality, repair failing
// steps with the causalize/refine loop, and report EM/HE/ATE.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "caucot/caucot.hpp"

namespace {

using namespace caucot;

std::vector<double> parse_percent_grid(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok) / 100.0);
    }
    return out;
}

std::vector<std::pair<double, double>> parse_alpha_grid(const std::string& csv) {
    std::vector<std::pair<double, double>> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        const double alpha = std::stod(tok);
        out.emplace_back(alpha, 1.0 - alpha);
    }
    return out;
}

struct CommonFlags {
    std::string corpus;
    std::string out_dir = "caucot-out";
    std::string backend = "oracle";
    std::string endpoint;
    std::string model;
    std::string score_model;
    std::string api_key_env = "CAUCOT_API_KEY";
    std::string truth;
    std::string oracle_repair = "exact";
    std::string split = "all";
    std::string parent_strategy = "full_history";
    std::string instruction;
    std::string agent_role;
    double alpha = 0.5;
    double beta = 0.5;
    double sigma_percent = 75.0;
    double epsilon_percent = -1.0;  // <0: default to sigma
    int max_loops = 3;
    int votes = 8;
    int samples = 3;
    std::uint64_t seed = 42;
    int workers = 4;
    int candidates = 3;
    double temperature = 1.0;
    double top_p = 0.9;
    bool labeled_only = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool needs_corpus) {
    auto* corpus = cmd->add_option("--corpus", f.corpus, "corpus file (JSON array or JSONL)");
    if (needs_corpus) corpus->required();
    cmd->add_option("--out-dir", f.out_dir, "output directory");
    cmd->add_option("--backend", f.backend, "scoring backend: oracle | remote")
        ->check(CLI::IsMember({"oracle", "remote"}));
    cmd->add_option("--endpoint", f.endpoint, "remote endpoint, e.g. https://host:port");
    cmd->add_option("--model", f.model, "remote model for generation");
    cmd->add_option("--score-model", f.score_model, "remote model for scoring (default: --model)");
    cmd->add_option("--api-key-env", f.api_key_env,
                    "env var holding the credential (the value itself is never a flag)");
    cmd->add_option("--truth", f.truth,
                    "ground-truth registry for the oracle (default: ground_truth.jsonl next to the corpus)");
    cmd->add_option("--oracle-repair", f.oracle_repair, "oracle repair model: exact | noisy")
        ->check(CLI::IsMember({"exact", "noisy"}));
    cmd->add_option("--alpha", f.alpha, "weight of the answer-based effect");
    cmd->add_option("--beta", f.beta, "weight of the logic-based effect");
    cmd->add_option("--sigma", f.sigma_percent, "causal threshold, 0-100 scale");
    cmd->add_option("--epsilon", f.epsilon_percent, "first-step threshold, 0-100 scale (default: sigma)");
    cmd->add_option("--max-loops", f.max_loops, "repair loops per step");
    cmd->add_option("--votes", f.votes, "majority-voting count k");
    cmd->add_option("--samples", f.samples, "expectation samples m per score");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--parent-strategy", f.parent_strategy, "linear | full_history | explicit")
        ->check(CLI::IsMember({"linear", "full_history", "explicit"}));
    cmd->add_option("--workers", f.workers, "cross-chain parallelism");
    cmd->add_option("--candidates", f.candidates, "candidate count in the causalizing process");
    cmd->add_option("--temperature", f.temperature, "sampling temperature");
    cmd->add_option("--top-p", f.top_p, "nucleus sampling cutoff");
    cmd->add_option("--split", f.split, "gsm8k | math | olympiadbench | omnimath | all");
    cmd->add_flag("--labeled-only", f.labeled_only, "keep only cases with an error label");
    cmd->add_option("--instruction", f.instruction, "system instruction IS (default: empty, 0-shot)");
    cmd->add_option("--agent-role", f.agent_role, "override the causalizing agent role");
}

RunOptions to_run_options(const CommonFlags& f) {
    RunOptions o;
    o.corpus_path = f.corpus;
    o.out_dir = f.out_dir;
    o.backend_kind = f.backend;
    o.remote.endpoint = f.endpoint;
    o.remote.model = f.model;
    o.remote.score_model = f.score_model;
    o.remote.api_key_env = f.api_key_env;
    o.oracle.repair_model =
        f.oracle_repair == "noisy" ? OracleRepairModel::noisy : OracleRepairModel::exact;
    o.truth_path = f.truth;
    o.config.alpha = f.alpha;
    o.config.beta = f.beta;
    o.config.sigma = f.sigma_percent / 100.0;
    if (f.epsilon_percent >= 0.0) o.config.epsilon = f.epsilon_percent / 100.0;
    o.config.max_loops = f.max_loops;
    o.config.votes_k = f.votes;
    o.config.expectation_samples_m = f.samples;
    o.config.seed = f.seed;
    o.config.parent_strategy = parent_strategy_from_string(f.parent_strategy);
    o.config.n_candidates = f.candidates;
    o.config.temperature = f.temperature;
    o.config.top_p = f.top_p;
    o.split.subset = CorpusSplit::subset_from_string(f.split);
    o.split.require_label = f.labeled_only;
    o.instruction = f.instruction;
    if (!f.agent_role.empty()) o.agent_override = f.agent_role;
    o.workers = f.workers;
    o.config.validate();
    return o;
}

void print_split_counts(const std::map<std::string, int>& counts) {
    std::cout << "cases per split:";
    for (const auto& [subset, count] : counts) std::cout << " " << subset << "=" << count;
    std::cout << "\n";
}

int run_causalize_cmd(const CommonFlags& flags) {
    const RunOptions options = to_run_options(flags);
    const CausalizeRunResult result = cmd_causalize(options);
    print_split_counts(result.split_counts);
    std::cout << report_to_text(result.report) << "\n";
    std::cout << "outputs: " << options.out_dir
              << "/{causalized.jsonl, audit.jsonl, report.json, manifest.json}\n";
    return result.exit_code;
}

int run_score_cmd(const CommonFlags& flags) {
    const RunOptions options = to_run_options(flags);
    const ScoreRunResult result = cmd_score(options);
    print_split_counts(result.split_counts);
    std::cout << "scored " << result.tables.size() << " chains; " << result.pending.size()
              << " pending (non-causal)\n";
    for (const PendingEntry& p : result.pending.entries) {
        std::cout << "  " << p.chain_id << ": first non-causal step " << p.first_noncausal << "\n";
    }
    std::cout << "outputs: " << options.out_dir << "/scores.jsonl\n";
    return 0;
}

int run_sweep_cmd(const CommonFlags& flags, const std::string& sigma_grid,
                  const std::string& alpha_grid) {
    const RunOptions options = to_run_options(flags);
    const SweepResult result =
        cmd_sweep(options, parse_percent_grid(sigma_grid), parse_alpha_grid(alpha_grid));
    std::printf("%8s %6s %6s %12s %8s %8s %8s\n", "sigma", "alpha", "beta", "success_rate", "em",
                "he", "ate");
    for (const SweepPoint& p : result.points) {
        std::printf("%8.0f %6.2f %6.2f %12.4f %8.4f %8.4f %+8.4f\n", p.sigma * 100.0, p.alpha,
                    p.beta, p.report.success_rate, p.report.em, p.report.he, p.report.ate);
    }
    std::cout << "outputs: " << options.out_dir << "/sweep.json\n";
    return 0;
}

int run_inject_cmd(const InjectOptions& options) {
    const InjectResult result = cmd_inject(options);
    std::cout << "wrote " << result.clean_path << ", " << result.polluted_path << ", "
              << result.truth_path << "\n";
    for (const auto& [kind, count] : result.per_kind) {
        std::cout << "  " << kind << ": " << count << "\n";
    }
    return 0;
}

int run_report_cmd(const CommonFlags& flags, const std::string& causalized,
                   const std::string& out_path) {
    const RunOptions options = to_run_options(flags);
    const ordered_json j = cmd_report(flags.corpus, causalized, options.config, out_path);
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal scoring and repair of chain-of-thought reasoning traces"};
    app.require_subcommand(1);
    app.set_version_flag("--version", caucot::kVersion);

    CommonFlags flags;

    auto* causalize = app.add_subcommand("causalize", "score every chain and repair non-causal steps");
    add_common_flags(causalize, flags, true);

    auto* score = app.add_subcommand("score", "score chains without repairing them");
    add_common_flags(score, flags, true);

    auto* sweep = app.add_subcommand("sweep", "rerun causalize over a sigma and/or alpha grid");
    add_common_flags(sweep, flags, true);
    std::string sigma_grid;
    std::string alpha_grid;
    sweep->add_option("--sigma-grid", sigma_grid, "comma-separated sigma values, 0-100 scale");
    sweep->add_option("--alpha-grid", alpha_grid, "comma-separated alpha values (beta = 1 - alpha)");

    auto* inject = app.add_subcommand("inject", "generate clean + polluted synthetic corpora");
    InjectOptions inject_options;
    int inject_error_step = -1;
    std::string kinds_csv = "measure,collider,sensitivity,mediation";
    inject->add_option("--cases", inject_options.cases, "number of cases");
    inject->add_option("--n-steps", inject_options.spec.n_steps, "steps per chain (3-8)");
    inject->add_option("--value-lo", inject_options.spec.value_lo, "operand lower bound");
    inject->add_option("--value-hi", inject_options.spec.value_hi, "operand upper bound");
    inject->add_option("--seed", inject_options.spec.seed, "corpus seed");
    inject->add_option("--out-dir", inject_options.out_dir, "output directory");
    inject->add_option("--subset", inject_options.subset_tag, "subset tag written to each case");
    inject->add_option("--error-step", inject_error_step, "pin the injected error step");
    inject->add_option("--kinds", kinds_csv, "comma-separated error kinds to cycle through");

    auto* report = app.add_subcommand("report", "recompute metrics from corpus + causalized output");
    add_common_flags(report, flags, true);
    std::string causalized_path;
    std::string report_out;
    report->add_option("--causalized", causalized_path, "causalized.jsonl from a causalize run")
        ->required();
    report->add_option("--out", report_out, "where to write report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*causalize) return run_causalize_cmd(flags);
        if (*score) return run_score_cmd(flags);
        if (*sweep) return run_sweep_cmd(flags, sigma_grid, alpha_grid);
        if (*inject) {
            if (inject_error_step > 0) inject_options.pinned_error_step = inject_error_step;
            inject_options.kinds.clear();
            std::stringstream ss(kinds_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (!tok.empty()) inject_options.kinds.push_back(caucot::error_kind_from_string(tok));
            }
            return run_inject_cmd(inject_options);
        }
        if (*report) return run_report_cmd(flags, causalized_path, report_out);
    } catch (const caucot::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
