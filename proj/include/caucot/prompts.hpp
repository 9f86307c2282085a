#pragma once

#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "caucot/errors.hpp"

namespace caucot {

enum class TemplateName { gamma_fs, gamma_a, gamma_l, causalize, refine };

inline std::string to_string(TemplateName n) {
    switch (n) {
        case TemplateName::gamma_fs: return "gamma_fs";
        case TemplateName::gamma_a: return "gamma_a";
        case TemplateName::gamma_l: return "gamma_l";
        case TemplateName::causalize: return "causalize";
        default: return "refine";
    }
}

struct PromptTemplate {
    TemplateName name;
    std::string_view body;
};

// The five scoring/repair prompt fixtures. Body text is frozen: the golden
// files under tests/golden/ must match these bytes exactly, placeholders
// included. Wording (including its rough edges) is intentional; do not
// "fix" grammar here.
namespace fixtures {

inline constexpr std::string_view kGammaFs =
    "Now that we try to answer the question {Q} step by step and {c_1} is the first step. "
    "Now you need to carefully evaluate the impact of {c_1} to answer {Q} correctly. "
    "Please the impact and the full score is 100.";

inline constexpr std::string_view kGammaA =
    "Now that we try to answer the question {Q} step by step through reasoning path {c_i}. "
    "Now you need to carefully evaluate the impact of {c_pa_i} to answer {Q} based on {c_i} is final step. "
    "Please the impact and the full score is 100.";

inline constexpr std::string_view kGammaL =
    "Now that we try to answer the question {Q} step by step through reasoning path {c_i}. "
    "Now you need to carefully evaluate the impact of {c_pa_i} to generate {c_i}. "
    "If the full score is 100, you need to score the size of the impact.";

inline constexpr std::string_view kCausalize =
    "You are {agent} who is answering question {Q} and trying to think about the problem step by step, "
    "where {c_pa_i} and {c_dot_i} should have strong causal relation to answer the question correctly. "
    "Since {c_dot_i} is wrong step, now generate c_i that can meet the strong causal relationship "
    "with the previous step {c_pa_i}, make {c_pa_i} -> c_i is correct reasoning path to correctly answer {Q}. "
    "Please list [c_i] chains with strong credibility and explain your result.";

inline constexpr std::string_view kRefine =
    "You are {agent} who is answering question {Q}, as previously described. "
    "Among the {candidates} listed above, choose chain c_i that are most likely to have strong reasoning "
    "to answering question {Q}. For the chosen chain, explain the reasoning.";

}  // namespace fixtures

// Appended after the rendered template (never inside it) so score replies
// stay machine-parseable without touching the fixture bytes.
inline constexpr std::string_view kScoreFormatSuffix =
    "End your reply with: Score: <integer 0-100>";

inline const PromptTemplate& prompt_template(TemplateName name) {
    static const std::array<PromptTemplate, 5> all = {{
        {TemplateName::gamma_fs, fixtures::kGammaFs},
        {TemplateName::gamma_a, fixtures::kGammaA},
        {TemplateName::gamma_l, fixtures::kGammaL},
        {TemplateName::causalize, fixtures::kCausalize},
        {TemplateName::refine, fixtures::kRefine},
    }};
    return all[static_cast<std::size_t>(name)];
}

using Bindings = std::map<std::string, std::string, std::less<>>;

inline bool is_known_placeholder(std::string_view name) {
    return name == "Q" || name == "c_1" || name == "c_i" || name == "c_pa_i" ||
           name == "c_dot_i" || name == "agent" || name == "candidates";
}

// Pure substitution of {placeholder} markers. Binding values are emitted
// verbatim (no escaping, no trimming) and are not re-scanned.
inline std::string render_prompt(const PromptTemplate& tpl, const Bindings& bindings) {
    const std::string_view body = tpl.body;
    std::string out;
    out.reserve(body.size() + 256);
    std::size_t pos = 0;
    while (pos < body.size()) {
        const std::size_t open = body.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        const std::size_t close = body.find('}', open + 1);
        if (close == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        const std::string_view name = body.substr(open + 1, close - open - 1);
        if (is_known_placeholder(name)) {
            auto it = bindings.find(name);
            if (it == bindings.end()) {
                throw MissingBinding("template " + to_string(tpl.name) +
                                     " has no binding for {" + std::string(name) + "}");
            }
            out.append(it->second);
        } else {
            out.append(body.substr(open, close - open + 1));
        }
        pos = close + 1;
    }
    return out;
}

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

}  // namespace detail

// Extracts the impact score from a completion: the last standalone integer
// in [0,100]. "x/100" counts as x, so the denominator is never picked up.
// Integers glued to letters or belonging to decimals are ignored, as are
// bare values above 100.
inline int parse_score(const std::string& completion) {
    std::optional<int> last;
    const std::size_t n = completion.size();
    std::size_t i = 0;
    while (i < n) {
        if (!detail::is_digit(completion[i])) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < n && detail::is_digit(completion[i])) ++i;
        const std::size_t end = i;  // [start, end) is a maximal digit run

        bool valid = true;
        if (start > 0) {
            const char prev = completion[start - 1];
            if (detail::is_alpha(prev)) valid = false;
            if (prev == '.' && start >= 2 && detail::is_digit(completion[start - 2])) {
                valid = false;  // fraction part of a decimal
            }
        }
        if (end < n) {
            const char next = completion[end];
            if (detail::is_alpha(next)) valid = false;
            if (next == '.' && end + 1 < n && detail::is_digit(completion[end + 1])) {
                valid = false;  // integer part of a decimal
            }
        }

        long value = -1;
        if (valid && end - start <= 9) {
            value = std::stol(completion.substr(start, end - start));
        }

        // "x/100" form: consume the denominator so it is not scanned again.
        std::size_t j = end;
        while (j < n && completion[j] == ' ') ++j;
        if (j < n && completion[j] == '/') {
            ++j;
            while (j < n && completion[j] == ' ') ++j;
            const std::size_t den_start = j;
            while (j < n && detail::is_digit(completion[j])) ++j;
            if (j - den_start > 0 && completion.substr(den_start, j - den_start) == "100" &&
                !(j < n && detail::is_alpha(completion[j]))) {
                i = j;
                if (valid && value >= 0 && value <= 100) last = static_cast<int>(value);
                continue;
            }
        }

        if (valid && value >= 0 && value <= 100) last = static_cast<int>(value);
    }
    if (!last) throw ParseFailure("no score in [0,100] found in completion");
    return *last;
}

}  // namespace caucot
