#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "caucot/backend.hpp"
#include "caucot/causalize.hpp"
#include "caucot/chain.hpp"
#include "caucot/config.hpp"
#include "caucot/detail/hash.hpp"
#include "caucot/errors.hpp"
#include "caucot/metrics.hpp"
#include "caucot/remote.hpp"
#include "caucot/scoring.hpp"
#include "caucot/synth.hpp"
#include "caucot/version.hpp"

namespace caucot {

namespace fs = std::filesystem;

struct CorpusSplit {
    enum class Subset { gsm8k, math, olympiadbench, omnimath, all };
    Subset subset = Subset::all;
    bool require_label = false;

    static Subset subset_from_string(const std::string& s) {
        std::string lower;
        for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (lower == "gsm8k") return Subset::gsm8k;
        if (lower == "math") return Subset::math;
        if (lower == "olympiadbench") return Subset::olympiadbench;
        if (lower == "omnimath") return Subset::omnimath;
        if (lower == "all") return Subset::all;
        throw ConfigInvalid("unknown split: " + s);
    }

    static std::string subset_name(Subset s) {
        switch (s) {
            case Subset::gsm8k: return "gsm8k";
            case Subset::math: return "math";
            case Subset::olympiadbench: return "olympiadbench";
            case Subset::omnimath: return "omnimath";
            default: return "all";
        }
    }
};

namespace detail_io {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail_io

// Loads a JSON array or JSONL corpus, validates every case, and applies the
// split filter. Malformed cases fail loudly with their index.
inline std::vector<CorpusCase> load_corpus(const std::string& path, const CorpusSplit& split = {}) {
    const std::string raw = detail_io::read_file(path);

    std::vector<json> records;
    std::size_t first = raw.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        // empty file: zero cases
    } else if (raw[first] == '[') {
        json arr = json::parse(raw, nullptr, false);
        if (arr.is_discarded() || !arr.is_array()) {
            throw SchemaError(path + ": not a valid JSON array");
        }
        for (json& r : arr) records.push_back(std::move(r));
    } else {
        std::istringstream lines(raw);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(lines, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json r = json::parse(line, nullptr, false);
            if (r.is_discarded()) {
                throw SchemaError(path + ": line " + std::to_string(line_no) +
                                  " is not valid JSON");
            }
            records.push_back(std::move(r));
        }
    }

    std::vector<CorpusCase> cases;
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            cases.push_back(parse_case(records[i]));
        } catch (const Error& e) {
            throw SchemaError(path + ": case " + std::to_string(i) + ": " + e.what());
        }
    }

    if (split.subset != CorpusSplit::Subset::all) {
        const std::string want = CorpusSplit::subset_name(split.subset);
        std::erase_if(cases, [&](const CorpusCase& c) {
            std::string have;
            for (char ch : c.subset) {
                have.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            }
            return have != want;
        });
    }
    if (split.require_label) {
        std::erase_if(cases, [](const CorpusCase& c) { return c.label < 1; });
    }
    return cases;
}

inline std::map<std::string, int> count_by_subset(const std::vector<CorpusCase>& cases) {
    std::map<std::string, int> counts;
    for (const CorpusCase& c : cases) ++counts[c.subset.empty() ? "(none)" : c.subset];
    return counts;
}

inline GroundTruthRegistry load_registry(const std::string& path) {
    const std::string raw = detail_io::read_file(path);
    GroundTruthRegistry registry;
    std::istringstream lines(raw);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json r = json::parse(line, nullptr, false);
        if (r.is_discarded()) {
            throw SchemaError(path + ": line " + std::to_string(line_no) + " is not valid JSON");
        }
        registry.add(GroundTruthRegistry::entry_from_json(r));
    }
    return registry;
}

// Reproducibility envelope, written before the first backend call. Never
// carries credential values, only the env var name lives in the config.
struct RunManifest {
    ordered_json config_echo;
    std::string backend_kind;
    std::string model;
    std::string score_model;
    std::string endpoint_host;
    std::string corpus_path;
    int case_count = 0;
    std::string corpus_hash;
    std::string created_at;
    std::string tool_version = kVersion;

    ordered_json to_json() const {
        ordered_json j;
        j["tool_version"] = tool_version;
        j["created_at"] = created_at;
        ordered_json backend;
        backend["kind"] = backend_kind;
        if (!model.empty()) backend["model"] = model;
        if (!score_model.empty()) backend["score_model"] = score_model;
        if (!endpoint_host.empty()) backend["endpoint_host"] = endpoint_host;
        j["backend"] = std::move(backend);
        ordered_json corpus;
        corpus["path"] = corpus_path;
        corpus["case_count"] = case_count;
        corpus["hash_fnv1a64"] = corpus_hash;
        j["corpus"] = std::move(corpus);
        j["config"] = config_echo;
        return j;
    }
};

inline std::string iso8601_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunOptions {
    std::string corpus_path;
    std::string out_dir = ".";
    std::string backend_kind = "oracle";  // oracle | remote
    RemoteConfig remote;
    OracleOptions oracle;
    std::string truth_path;  // oracle registry; defaults next to the corpus
    CauCoTConfig config;
    CorpusSplit split;
    std::string instruction;
    std::optional<std::string> agent_override;
    int workers = 4;
};

// Owns whatever state the backend needs (the oracle's registry).
struct BackendHandle {
    std::unique_ptr<GroundTruthRegistry> registry;
    std::unique_ptr<ScoringBackend> backend;
};

inline BackendHandle make_backend(const RunOptions& options) {
    BackendHandle handle;
    if (options.backend_kind == "oracle") {
        std::string truth = options.truth_path;
        if (truth.empty()) {
            truth = (fs::path(options.corpus_path).parent_path() / "ground_truth.jsonl").string();
        }
        if (!fs::exists(truth)) {
            throw IoError("oracle backend needs a ground-truth registry; not found at " + truth);
        }
        handle.registry = std::make_unique<GroundTruthRegistry>(load_registry(truth));
        handle.backend = std::make_unique<OracleBackend>(*handle.registry, options.oracle);
    } else if (options.backend_kind == "remote") {
        handle.backend = std::make_unique<RemoteBackend>(options.remote);
    } else {
        throw ConfigInvalid("unknown backend kind: " + options.backend_kind);
    }
    return handle;
}

inline RunManifest make_manifest(const RunOptions& options, const std::string& corpus_bytes,
                                 int case_count) {
    RunManifest m;
    m.config_echo = options.config.to_json();
    m.backend_kind = options.backend_kind;
    if (options.backend_kind == "remote") {
        m.model = options.remote.model;
        m.score_model = options.remote.score_model;
        const auto& ep = options.remote.endpoint;
        const auto scheme_end = ep.find("://");
        const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const auto slash = ep.find('/', host_start);
        m.endpoint_host = slash == std::string::npos ? ep : ep.substr(0, slash);
    }
    m.corpus_path = options.corpus_path;
    m.case_count = case_count;
    m.corpus_hash = detail::hex64(detail::fnv1a64(corpus_bytes));
    m.created_at = iso8601_now();
    return m;
}

// Runs the CauCoT loop over every case with a bounded worker pool. Results
// land in input order regardless of scheduling.
inline std::vector<CausalizeOutcome> causalize_corpus(const std::vector<CorpusCase>& cases,
                                                      ScoringBackend& backend,
                                                      const CauCoTConfig& cfg,
                                                      const Instruction& is, int workers,
                                                      const std::optional<std::string>& agent_override) {
    std::vector<CausalizeOutcome> outcomes(cases.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&]() {
        RunCauCoTOptions run_options;
        run_options.agent_override = agent_override;
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= cases.size()) return;
            try {
                outcomes[k] = run_caucot(backend, is, cases[k].chain, cfg, run_options);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(cases.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return outcomes;
}

inline std::vector<EvalRecord> build_eval_records(const std::vector<CorpusCase>& cases,
                                                  const std::vector<CausalizeOutcome>& outcomes) {
    std::vector<EvalRecord> records;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const std::string& gold = cases[k].chain.question.gold_answer;
        if (gold.empty()) continue;
        EvalRecord r;
        r.case_id = cases[k].chain.question.id;
        r.gold_answer = gold;
        r.predicted_answer = outcomes[k].chain.final_answer;
        r.factual_outcome = exact_match(cases[k].chain.final_answer, gold);
        r.interventional_outcome = exact_match(outcomes[k].chain.final_answer, gold);
        records.push_back(std::move(r));
    }
    return records;
}

struct CausalizeRunResult {
    std::vector<CausalizeOutcome> outcomes;
    MetricsReport report;
    ordered_json report_json;
    std::map<std::string, int> split_counts;
    int exit_code = 0;  // 0 = all Success, 2 = some Exhausted
};

// The `causalize` command body: manifest first, then repair, then the
// causalized corpus, audit log, and metrics report.
inline CausalizeRunResult cmd_causalize(const RunOptions& options) {
    options.config.validate();
    const std::string corpus_bytes = detail_io::read_file(options.corpus_path);
    const std::vector<CorpusCase> cases = load_corpus(options.corpus_path, options.split);
    if (cases.empty()) throw EmptyRecords("corpus has no cases after filtering");

    CausalizeRunResult result;
    result.split_counts = count_by_subset(cases);

    fs::create_directories(options.out_dir);
    const RunManifest manifest = make_manifest(options, corpus_bytes, static_cast<int>(cases.size()));
    detail_io::write_file((fs::path(options.out_dir) / "manifest.json").string(),
                          manifest.to_json().dump(2) + "\n");

    BackendHandle handle = make_backend(options);
    const Instruction is{options.instruction};

    result.outcomes = causalize_corpus(cases, *handle.backend, options.config, is,
                                       options.workers, options.agent_override);

    std::string causalized_lines;
    std::string audit_lines;
    std::vector<std::pair<std::string, CausalizeStatus>> statuses;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        CorpusCase out_case = cases[k];
        out_case.chain = result.outcomes[k].chain;
        ordered_json line = serialize_case(out_case);
        line["caucot_status"] = to_string(result.outcomes[k].status);
        causalized_lines += line.dump();
        causalized_lines += '\n';
        for (const AuditRecord& rec : result.outcomes[k].audit) {
            audit_lines += rec.to_json().dump();
            audit_lines += '\n';
        }
        statuses.emplace_back(cases[k].chain.question.id, result.outcomes[k].status);
    }
    detail_io::write_file((fs::path(options.out_dir) / "causalized.jsonl").string(),
                          causalized_lines);
    detail_io::write_file((fs::path(options.out_dir) / "audit.jsonl").string(), audit_lines);

    result.report = build_report(statuses, build_eval_records(cases, result.outcomes));
    result.report_json = report_to_json(result.report, options.config.to_json());
    detail_io::write_file((fs::path(options.out_dir) / "report.json").string(),
                          result.report_json.dump(2) + "\n");

    result.exit_code = std::any_of(result.outcomes.begin(), result.outcomes.end(),
                                   [](const CausalizeOutcome& o) {
                                       return o.status == CausalizeStatus::Exhausted;
                                   })
                           ? 2
                           : 0;
    return result;
}

struct ScoreRunResult {
    std::vector<std::pair<std::string, ChainScoreTable>> tables;
    PendingSet pending;
    std::map<std::string, int> split_counts;
};

// The `score` command body: per-step gamma tables, no mutation.
inline ScoreRunResult cmd_score(const RunOptions& options) {
    options.config.validate();
    const std::vector<CorpusCase> cases = load_corpus(options.corpus_path, options.split);
    if (cases.empty()) throw EmptyRecords("corpus has no cases after filtering");

    BackendHandle handle = make_backend(options);
    const Instruction is{options.instruction};

    ScoreRunResult result;
    result.split_counts = count_by_subset(cases);
    result.tables.resize(cases.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= cases.size()) return;
            try {
                result.tables[k] = {cases[k].chain.question.id,
                                    score_chain(*handle.backend, is, cases[k].chain.question,
                                                cases[k].chain, options.config)};
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(options.workers, static_cast<int>(cases.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    result.pending = build_pending_set(result.tables);

    fs::create_directories(options.out_dir);
    std::string lines;
    for (const auto& [id, table] : result.tables) {
        ordered_json j;
        j["id"] = id;
        j["gamma_fs"] = table.first_step.gamma_fs;
        j["first_step_causal"] = table.first_step_causal;
        ordered_json steps = ordered_json::array();
        for (const StepScoreRow& row : table.rows) {
            ordered_json s;
            s["index"] = row.index;
            s["gamma_a"] = row.scores.gamma_a;
            s["gamma_l"] = row.scores.gamma_l;
            s["gamma_cot"] = row.scores.gamma_cot;
            s["causal"] = row.causal;
            steps.push_back(std::move(s));
        }
        j["steps"] = std::move(steps);
        j["first_noncausal"] = table.first_noncausal;
        lines += j.dump();
        lines += '\n';
    }
    detail_io::write_file((fs::path(options.out_dir) / "scores.jsonl").string(), lines);
    return result;
}

struct SweepPoint {
    double sigma = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    MetricsReport report;
};

struct SweepResult {
    std::vector<SweepPoint> points;
};

// The `sweep` command body: reruns causalize on the same corpus/seed for
// each grid point and tabulates success_rate, em, he, ate.
inline SweepResult cmd_sweep(const RunOptions& base, const std::vector<double>& sigma_grid,
                             const std::vector<std::pair<double, double>>& alpha_beta_grid) {
    std::vector<double> sigmas = sigma_grid.empty() ? std::vector<double>{base.config.sigma}
                                                    : sigma_grid;
    std::vector<std::pair<double, double>> weights =
        alpha_beta_grid.empty()
            ? std::vector<std::pair<double, double>>{{base.config.alpha, base.config.beta}}
            : alpha_beta_grid;

    SweepResult result;
    ordered_json table = ordered_json::array();
    for (const auto& [alpha, beta] : weights) {
        for (double sigma : sigmas) {
            RunOptions options = base;
            options.config.alpha = alpha;
            options.config.beta = beta;
            options.config.sigma = sigma;
            char label[64];
            std::snprintf(label, sizeof(label), "sigma%03d_a%03d", static_cast<int>(sigma * 100),
                          static_cast<int>(alpha * 100));
            options.out_dir = (fs::path(base.out_dir) / label).string();
            const CausalizeRunResult run = cmd_causalize(options);

            SweepPoint point{sigma, alpha, beta, run.report};
            result.points.push_back(point);
            ordered_json row;
            row["sigma"] = sigma;
            row["sigma_percent"] = sigma * 100.0;
            row["alpha"] = alpha;
            row["beta"] = beta;
            row["success_rate"] = run.report.success_rate;
            row["em"] = run.report.em;
            row["he"] = run.report.he;
            row["ate"] = run.report.ate;
            table.push_back(std::move(row));
        }
    }
    fs::create_directories(base.out_dir);
    detail_io::write_file((fs::path(base.out_dir) / "sweep.json").string(),
                          table.dump(2) + "\n");
    return result;
}

struct InjectOptions {
    int cases = 200;
    SynthSpec spec;  // seed/value range/n_steps template; per-case seed derived
    std::vector<ErrorKind> kinds = {ErrorKind::measure, ErrorKind::collider,
                                    ErrorKind::sensitivity, ErrorKind::mediation};
    std::optional<int> pinned_error_step;
    std::string out_dir = ".";
    std::string subset_tag = "gsm8k";
};

struct InjectResult {
    std::string clean_path;
    std::string polluted_path;
    std::string truth_path;
    std::map<std::string, int> per_kind;
};

// The `inject` command body: clean + polluted corpora with the ground-truth
// registry. Kinds cycle in order, so N cases split exactly N/k per kind.
inline InjectResult cmd_inject(const InjectOptions& options) {
    if (options.cases < 1) throw SpecInvalid("need at least one case");
    if (options.kinds.empty()) throw SpecInvalid("need at least one error kind");
    options.spec.validate();

    fs::create_directories(options.out_dir);
    std::string clean_lines;
    std::string polluted_lines;
    std::string truth_lines;
    InjectResult result;

    for (int i = 0; i < options.cases; ++i) {
        const ErrorKind kind = options.kinds[static_cast<std::size_t>(i) % options.kinds.size()];
        SynthSpec spec = options.spec;
        spec.seed = detail::mix(options.spec.seed, static_cast<std::uint64_t>(i));
        spec.error_kind = kind;
        spec.error_step = options.pinned_error_step;
        spec.validate();

        char id[32];
        std::snprintf(id, sizeof(id), "synth-%04d", i);

        // inject_error picks among compatible steps; retry with a shifted
        // seed in the rare case a chain offers no sound corruption.
        for (std::uint64_t retry = 0;; ++retry) {
            if (retry >= 32) {
                throw SpecInvalid(std::string(id) + ": no sound " + to_string(kind) +
                                  " injection found");
            }
            SynthSpec attempt = spec;
            attempt.seed = detail::mix(spec.seed, retry);
            attempt.error_kind.reset();
            attempt.error_step.reset();
            auto [clean, gt] = generate_clean_chain(attempt, id);
            try {
                auto [polluted, truth] =
                    inject_error(clean, gt, kind, attempt.seed, options.pinned_error_step);

                CorpusCase clean_case{clean, -1, options.subset_tag};
                clean_lines += serialize_case(clean_case).dump();
                clean_lines += '\n';

                CorpusCase polluted_case{polluted, truth.error_step, options.subset_tag};
                polluted_lines += serialize_case(polluted_case).dump();
                polluted_lines += '\n';

                GroundTruthRegistry one;
                one.add(registry_entry(clean, truth));
                truth_lines += one.to_json_line(0).dump();
                truth_lines += '\n';

                ++result.per_kind[to_string(kind)];
                break;
            } catch (const IncompatibleKind&) {
                if (options.pinned_error_step) throw;
                continue;
            }
        }
    }

    result.clean_path = (fs::path(options.out_dir) / "clean.jsonl").string();
    result.polluted_path = (fs::path(options.out_dir) / "polluted.jsonl").string();
    result.truth_path = (fs::path(options.out_dir) / "ground_truth.jsonl").string();
    detail_io::write_file(result.clean_path, clean_lines);
    detail_io::write_file(result.polluted_path, polluted_lines);
    detail_io::write_file(result.truth_path, truth_lines);
    return result;
}

// The `report` command body: joins a factual corpus with its causalized
// counterpart and recomputes the metrics.
inline ordered_json cmd_report(const std::string& corpus_path, const std::string& causalized_path,
                               const CauCoTConfig& cfg, const std::string& out_path) {
    const std::vector<CorpusCase> before = load_corpus(corpus_path);
    const std::vector<CorpusCase> after = load_corpus(causalized_path);
    if (before.empty()) throw EmptyRecords("corpus has no cases");

    std::map<std::string, const CorpusCase*> after_by_id;
    for (const CorpusCase& c : after) after_by_id[c.chain.question.id] = &c;

    // Status survives the round trip via the additive caucot_status field.
    std::map<std::string, CausalizeStatus> status_by_id;
    {
        const std::string raw = detail_io::read_file(causalized_path);
        std::istringstream lines(raw);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) continue;
            const std::string id = j.value("id", std::string{});
            const std::string status = j.value("caucot_status", std::string{"Success"});
            status_by_id[id] =
                status == "Exhausted" ? CausalizeStatus::Exhausted : CausalizeStatus::Success;
        }
    }

    std::vector<std::pair<std::string, CausalizeStatus>> statuses;
    std::vector<EvalRecord> records;
    for (const CorpusCase& b : before) {
        const std::string& id = b.chain.question.id;
        auto it = after_by_id.find(id);
        if (it == after_by_id.end()) {
            throw MisalignedRecords("causalized corpus lacks case " + id);
        }
        auto st = status_by_id.find(id);
        statuses.emplace_back(id, st == status_by_id.end() ? CausalizeStatus::Success : st->second);
        const std::string& gold = b.chain.question.gold_answer;
        if (gold.empty()) continue;
        EvalRecord r;
        r.case_id = id;
        r.gold_answer = gold;
        r.predicted_answer = it->second->chain.final_answer;
        r.factual_outcome = exact_match(b.chain.final_answer, gold);
        r.interventional_outcome = exact_match(it->second->chain.final_answer, gold);
        records.push_back(std::move(r));
    }

    const MetricsReport report = build_report(statuses, records);
    ordered_json j = report_to_json(report, cfg.to_json());
    if (!out_path.empty()) detail_io::write_file(out_path, j.dump(2) + "\n");
    return j;
}

}  // namespace caucot
