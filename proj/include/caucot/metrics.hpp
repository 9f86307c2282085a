#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "caucot/causalize.hpp"
#include "caucot/errors.hpp"

namespace caucot {

// Outcome pair for one case: factual = EM of the unmodified chain,
// interventional = EM after causalization (the do-intervention on steps).
struct EvalRecord {
    std::string case_id;
    std::string predicted_answer;
    std::string gold_answer;
    double factual_outcome = 0.0;
    double interventional_outcome = 0.0;
    std::vector<std::string> votes;  // optional k-way answers
};

struct MetricsReport {
    double em = 0.0;
    double he = 0.0;
    double ate = 0.0;
    double success_rate = 0.0;
    int n_cases = 0;
    int n_scored = 0;  // records that carried a gold answer
};

// Canonical answer form: trimmed, surrounding brackets/periods gone,
// currency markers and thousands separators dropped, lowercased, integer
// leading zeros removed.
inline std::string normalize_answer(const std::string& answer) {
    std::string s = detail::trim(answer);

    auto is_open = [](char c) { return c == '(' || c == '[' || c == '{'; };
    auto is_close = [](char c) { return c == ')' || c == ']' || c == '}'; };
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        if (is_open(s.front())) {
            s.erase(s.begin());
            changed = true;
        }
        if (!s.empty() && (is_close(s.back()) || s.back() == '.')) {
            s.pop_back();
            changed = true;
        }
        if (changed) s = detail::trim(s);
    }

    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '$' || c == ',') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    out = detail::trim(out);

    // Integer canonicalization: strip an explicit '+' and leading zeros.
    std::size_t digits_start = 0;
    if (!out.empty() && (out[0] == '-' || out[0] == '+')) digits_start = 1;
    const bool is_integer =
        out.size() > digits_start &&
        std::all_of(out.begin() + static_cast<std::ptrdiff_t>(digits_start), out.end(),
                    [](unsigned char c) { return std::isdigit(c); });
    if (is_integer) {
        const bool negative = out[0] == '-';
        std::size_t k = digits_start;
        while (k + 1 < out.size() && out[k] == '0') ++k;
        out = (negative ? "-" : "") + out.substr(k);
    }
    return out;
}

inline int exact_match(const std::string& predicted, const std::string& gold) {
    return normalize_answer(predicted) == normalize_answer(gold) ? 1 : 0;
}

// Root-mean-square gap between interventional and factual outcomes.
inline double heterogeneous_effect(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw EmptyRecords("heterogeneous_effect over zero records");
    double sum_sq = 0.0;
    for (const EvalRecord& r : records) {
        const double d = r.interventional_outcome - r.factual_outcome;
        sum_sq += d * d;
    }
    return std::sqrt(sum_sq / static_cast<double>(records.size()));
}

inline double factual_ate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw EmptyRecords("factual_ate over zero records");
    double sum = 0.0;
    for (const EvalRecord& r : records) sum += r.interventional_outcome - r.factual_outcome;
    return sum / static_cast<double>(records.size());
}

// Modal normalized answer; ties break to the lexicographically smallest
// normalized form so aggregation is deterministic.
inline std::string majority_vote(const std::vector<std::string>& answers) {
    if (answers.empty()) throw EmptyRecords("majority_vote over zero answers");
    std::map<std::string, int> counts;
    for (const std::string& a : answers) ++counts[normalize_answer(a)];
    std::string best;
    int best_count = -1;
    for (const auto& [form, count] : counts) {  // map order = lexicographic
        if (count > best_count) {
            best = form;
            best_count = count;
        }
    }
    return best;
}

// Aggregates EM (voted answers when votes are present), HE, ATE, and the
// causalization success rate. Records must align with the outcomes by
// case id; records may be the gold-bearing subset.
inline MetricsReport build_report(const std::vector<std::pair<std::string, CausalizeStatus>>& outcomes,
                                  const std::vector<EvalRecord>& records) {
    if (outcomes.empty()) throw EmptyRecords("build_report over zero cases");

    std::map<std::string, int> seen;
    for (const auto& [id, status] : outcomes) {
        if (++seen[id] > 1) throw MisalignedRecords("duplicate case id: " + id);
    }
    std::map<std::string, int> record_ids;
    for (const EvalRecord& r : records) {
        if (seen.find(r.case_id) == seen.end()) {
            throw MisalignedRecords("record for unknown case id: " + r.case_id);
        }
        if (++record_ids[r.case_id] > 1) {
            throw MisalignedRecords("duplicate record for case id: " + r.case_id);
        }
    }

    MetricsReport report;
    report.n_cases = static_cast<int>(outcomes.size());
    report.n_scored = static_cast<int>(records.size());

    int successes = 0;
    for (const auto& [id, status] : outcomes) {
        if (status == CausalizeStatus::Success) ++successes;
    }
    report.success_rate = static_cast<double>(successes) / static_cast<double>(outcomes.size());

    if (!records.empty()) {
        double em_sum = 0.0;
        for (const EvalRecord& r : records) {
            const std::string answer =
                r.votes.empty() ? r.predicted_answer : majority_vote(r.votes);
            em_sum += exact_match(answer, r.gold_answer);
        }
        report.em = em_sum / static_cast<double>(records.size());
        report.he = heterogeneous_effect(records);
        report.ate = factual_ate(records);
    }
    return report;
}

inline ordered_json report_to_json(const MetricsReport& report, const ordered_json& config_echo) {
    ordered_json j;
    j["em"] = report.em;
    j["he"] = report.he;
    j["ate"] = report.ate;
    j["success_rate"] = report.success_rate;
    j["n_cases"] = report.n_cases;
    j["n_scored"] = report.n_scored;
    j["config"] = config_echo;
    return j;
}

inline std::string report_to_text(const MetricsReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "cases %d  scored %d  em %.4f  he %.4f  ate %+.4f  success_rate %.4f",
                  report.n_cases, report.n_scored, report.em, report.he, report.ate,
                  report.success_rate);
    return buf;
}

}  // namespace caucot
