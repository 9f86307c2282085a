#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "caucot/detail/hash.hpp"
#include "caucot/errors.hpp"
#include "caucot/prompts.hpp"

namespace caucot {

enum class RequestMode { score, generate };

struct BackendRequest {
    std::string prompt;
    RequestMode mode = RequestMode::score;
    int samples = 1;
    double temperature = 1.0;
    double top_p = 0.9;
    std::uint64_t seed = 0;
    std::string system;  // instruction IS; empty = no system message

    void validate() const {
        if (samples < 1) throw ConfigInvalid("request samples must be >= 1");
        for (const char* marker :
             {"{Q}", "{c_1}", "{c_i}", "{c_pa_i}", "{c_dot_i}", "{agent}", "{candidates}"}) {
            if (prompt.find(marker) != std::string::npos) {
                throw ConfigInvalid(std::string("unsubstituted placeholder in prompt: ") + marker);
            }
        }
    }
};

struct TokenUsage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct BackendResponse {
    std::vector<std::string> completions;
    std::optional<TokenUsage> usage;
};

class ScoringBackend {
public:
    virtual ~ScoringBackend() = default;
    virtual BackendResponse complete(const BackendRequest& request) = 0;
    virtual std::string kind() const = 0;
};

// Ground truth for one case: where the error sits, its exact text, and the
// correction the oracle's generate mode hands back.
struct GroundTruthEntry {
    std::string chain_id;
    std::string question_text;
    int error_step = -1;  // 1-based, -1 = clean case
    std::string error_kind;
    std::string error_text;      // text of the erroneous step
    std::string corrected_text;  // replacement that restores the clean chain
    std::string clean_answer;

    bool has_error() const { return error_step > 0 && !error_text.empty(); }
};

class GroundTruthRegistry {
public:
    void add(GroundTruthEntry entry) {
        const std::string id = entry.chain_id;
        entries_.push_back(std::move(entry));
        by_id_[id] = entries_.size() - 1;
    }

    const GroundTruthEntry* find_by_id(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &entries_[it->second];
    }

    // Cases are located inside a prompt via their question text. Synthetic
    // question texts embed the case id, so containment is unambiguous.
    const GroundTruthEntry* find_by_prompt(const std::string& prompt) const {
        for (const GroundTruthEntry& e : entries_) {
            if (!e.question_text.empty() && prompt.find(e.question_text) != std::string::npos) {
                return &e;
            }
        }
        return nullptr;
    }

    std::size_t size() const { return entries_.size(); }
    const std::vector<GroundTruthEntry>& entries() const { return entries_; }

    nlohmann::ordered_json to_json_line(std::size_t i) const {
        const GroundTruthEntry& e = entries_.at(i);
        nlohmann::ordered_json j;
        j["id"] = e.chain_id;
        j["question"] = e.question_text;
        j["error_step"] = e.error_step;
        j["error_kind"] = e.error_kind;
        j["error_text"] = e.error_text;
        j["corrected_step_text"] = e.corrected_text;
        j["clean_answer"] = e.clean_answer;
        return j;
    }

    static GroundTruthEntry entry_from_json(const nlohmann::json& j) {
        GroundTruthEntry e;
        e.chain_id = j.at("id").get<std::string>();
        e.question_text = j.value("question", std::string{});
        e.error_step = j.value("error_step", -1);
        e.error_kind = j.value("error_kind", std::string{});
        e.error_text = j.value("error_text", std::string{});
        e.corrected_text = j.value("corrected_step_text", std::string{});
        e.clean_answer = j.value("clean_answer", std::string{});
        return e;
    }

private:
    std::vector<GroundTruthEntry> entries_;
    std::map<std::string, std::size_t> by_id_;
};

// exact: repaired steps score like clean ones.
// noisy: repaired steps draw uniformly from [noisy_lo, noisy_hi], so the
//        chance a repair passes the verdict falls as sigma rises.
enum class OracleRepairModel { exact, noisy };

struct OracleOptions {
    OracleRepairModel repair_model = OracleRepairModel::exact;
    int clean_score = 90;
    int error_score = 20;
    int jitter = 5;  // +-jitter, uniform, zero-mean
    int noisy_lo = 50;
    int noisy_hi = 100;
};

// Deterministic scorer/generator driven by the ground-truth registry. Pure
// given (request, seed): scores derive from a hash of the prompt bytes, the
// request seed, and the sample index, so any interleaving replays.
class OracleBackend : public ScoringBackend {
public:
    explicit OracleBackend(const GroundTruthRegistry& registry, OracleOptions options = {})
        : registry_(&registry), opt_(options) {}

    std::string kind() const override { return "oracle"; }

    BackendResponse complete(const BackendRequest& request) override {
        request.validate();
        const GroundTruthEntry* entry = registry_->find_by_prompt(request.prompt);
        if (!entry) throw UnregisteredCase("no registered case matches the prompt");

        BackendResponse resp;
        if (request.mode == RequestMode::generate) {
            if (entry->corrected_text.empty()) {
                throw UnregisteredCase("case " + entry->chain_id + " has no registered correction");
            }
            resp.completions.assign(static_cast<std::size_t>(request.samples),
                                    entry->corrected_text);
            return resp;
        }

        const bool error_present =
            entry->has_error() && request.prompt.find(entry->error_text) != std::string::npos;
        const bool repaired_present =
            entry->has_error() && !entry->corrected_text.empty() &&
            request.prompt.find(entry->corrected_text) != std::string::npos;

        for (int k = 0; k < request.samples; ++k) {
            const std::uint64_t h = detail::mix(
                detail::fnv1a64(request.prompt) ^ request.seed, static_cast<std::uint64_t>(k));
            int score;
            if (error_present) {
                score = jittered(opt_.error_score, h);
            } else if (opt_.repair_model == OracleRepairModel::noisy && repaired_present) {
                const int span = opt_.noisy_hi - opt_.noisy_lo + 1;
                score = opt_.noisy_lo + static_cast<int>(h % static_cast<std::uint64_t>(span));
            } else {
                score = jittered(opt_.clean_score, h);
            }
            resp.completions.push_back("Score: " + std::to_string(score));
        }
        return resp;
    }

private:
    int jittered(int base, std::uint64_t h) const {
        const int span = 2 * opt_.jitter + 1;
        const int delta = static_cast<int>(h % static_cast<std::uint64_t>(span)) - opt_.jitter;
        const int v = base + delta;
        return v < 0 ? 0 : (v > 100 ? 100 : v);
    }

    const GroundTruthRegistry* registry_;
    OracleOptions opt_;
};

}  // namespace caucot
