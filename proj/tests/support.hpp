#pragma once

// Shared stub backends and fixtures for the test suites.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <unistd.h>

#include "caucot/caucot.hpp"

namespace caucot_test {

using namespace caucot;

inline ReasoningChain make_chain(const std::string& id, const std::string& question,
                                 const std::vector<std::string>& step_texts,
                                 const std::string& gold = "") {
    ReasoningChain chain;
    chain.question.id = id;
    chain.question.text = question;
    chain.question.gold_answer = gold;
    chain.question.domain_tag = DomainTag::math;
    for (std::size_t k = 0; k < step_texts.size(); ++k) {
        Step s;
        s.index = static_cast<int>(k) + 1;
        s.text = step_texts[k];
        chain.steps.push_back(std::move(s));
    }
    if (!step_texts.empty()) {
        chain.final_answer = extract_final_answer(chain);
        chain.final_answer_extracted = true;
    }
    return chain;
}

// Emits a fixed completion for every sample of every request.
class FixedBackend : public ScoringBackend {
public:
    explicit FixedBackend(std::string completion) : completion_(std::move(completion)) {}
    std::string kind() const override { return "stub-fixed"; }
    BackendResponse complete(const BackendRequest& request) override {
        request.validate();
        BackendResponse r;
        r.completions.assign(static_cast<std::size_t>(request.samples), completion_);
        return r;
    }

private:
    std::string completion_;
};

// Pops one scripted completion list per call, in order.
class ScriptedBackend : public ScoringBackend {
public:
    explicit ScriptedBackend(std::vector<std::vector<std::string>> script)
        : script_(std::move(script)) {}
    std::string kind() const override { return "stub-scripted"; }
    BackendResponse complete(const BackendRequest& request) override {
        request.validate();
        if (cursor_ >= script_.size()) throw TransportError("script exhausted");
        return {script_[cursor_++], std::nullopt};
    }

private:
    std::vector<std::vector<std::string>> script_;
    std::size_t cursor_ = 0;
};

// Scores everything as hopeless and proposes the same failing text back,
// so no repair can ever succeed.
class AdversarialBackend : public ScoringBackend {
public:
    std::string kind() const override { return "stub-adversarial"; }
    BackendResponse complete(const BackendRequest& request) override {
        request.validate();
        BackendResponse r;
        const std::string payload =
            request.mode == RequestMode::score ? "Score: 10" : "still the same wrong step";
        r.completions.assign(static_cast<std::size_t>(request.samples), payload);
        return r;
    }
};

// i.i.d. integer scores uniform in [lo, hi], seeded per sample.
class UniformScoreBackend : public ScoringBackend {
public:
    UniformScoreBackend(int lo, int hi, std::uint64_t seed) : lo_(lo), hi_(hi), seed_(seed) {}
    std::string kind() const override { return "stub-uniform"; }
    BackendResponse complete(const BackendRequest& request) override {
        request.validate();
        BackendResponse r;
        for (int k = 0; k < request.samples; ++k) {
            const std::uint64_t h =
                detail::mix(detail::fnv1a64(request.prompt) ^ seed_, static_cast<std::uint64_t>(k));
            const int v = lo_ + static_cast<int>(h % static_cast<std::uint64_t>(hi_ - lo_ + 1));
            r.completions.push_back("Score: " + std::to_string(v));
        }
        return r;
    }

private:
    int lo_, hi_;
    std::uint64_t seed_;
};

class ThrowingBackend : public ScoringBackend {
public:
    std::string kind() const override { return "stub-throwing"; }
    BackendResponse complete(const BackendRequest&) override {
        throw TransportError("wire is down");
    }
};

struct RecordedRequest {
    RequestMode mode;
    std::string prompt;
};

// Wraps another backend and keeps the request sequence for order checks.
class RecordingBackend : public ScoringBackend {
public:
    explicit RecordingBackend(ScoringBackend& inner) : inner_(&inner) {}
    std::string kind() const override { return inner_->kind(); }
    BackendResponse complete(const BackendRequest& request) override {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            log_.push_back({request.mode, request.prompt});
        }
        return inner_->complete(request);
    }

    std::vector<RecordedRequest> log() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return log_;
    }

    static bool is_fs_prompt(const std::string& p) {
        return p.find("is the first step") != std::string::npos;
    }
    static bool is_step_score_prompt(const std::string& p) {
        return p.find("is final step") != std::string::npos ||
               p.find("to generate") != std::string::npos;
    }

private:
    ScoringBackend* inner_;
    mutable std::mutex mutex_;
    std::vector<RecordedRequest> log_;
};

// Unique scratch directory per test binary run, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("caucot_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const {
        return child.empty() ? path_.string() : (path_ / child).string();
    }

private:
    std::filesystem::path path_;
};

// Builds a labeled synthetic corpus in memory: clean + polluted chains plus
// the registry entries the oracle needs.
struct SynthCorpus {
    std::vector<CorpusCase> clean;
    std::vector<CorpusCase> polluted;
    std::vector<GroundTruth> truths;
    GroundTruthRegistry registry;
};

inline SynthCorpus build_synth_corpus(int cases, std::uint64_t seed, int n_steps = 5) {
    const std::vector<ErrorKind> kinds = {ErrorKind::measure, ErrorKind::collider,
                                          ErrorKind::sensitivity, ErrorKind::mediation};
    SynthCorpus out;
    for (int i = 0; i < cases; ++i) {
        const ErrorKind kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%04d", i);
        for (std::uint64_t retry = 0;; ++retry) {
            SynthSpec spec;
            spec.n_steps = n_steps;
            spec.seed = detail::mix(detail::mix(seed, static_cast<std::uint64_t>(i)), retry);
            auto [clean, gt] = generate_clean_chain(spec, id);
            try {
                auto [polluted, truth] = inject_error(clean, gt, kind, spec.seed);
                out.registry.add(registry_entry(clean, truth));
                out.clean.push_back({clean, -1, "gsm8k"});
                out.polluted.push_back({polluted, truth.error_step, "gsm8k"});
                out.truths.push_back(truth);
                break;
            } catch (const IncompatibleKind&) {
                continue;
            }
        }
    }
    return out;
}

}  // namespace caucot_test
