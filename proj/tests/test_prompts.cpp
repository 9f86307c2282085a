#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace caucot;

namespace {

std::string read_golden(const std::string& name) {
    const std::string path = std::string(CAUCOT_GOLDEN_DIR) + "/" + name;
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Binding every placeholder to its own marker reproduces the raw template,
// so the comparison pins both the fixture bytes and the renderer.
Bindings marker_bindings() {
    Bindings b;
    for (const char* name : {"Q", "c_1", "c_i", "c_pa_i", "c_dot_i", "agent", "candidates"}) {
        b[name] = std::string("{") + name + "}";
    }
    return b;
}

}  // namespace

TEST_CASE("rendered templates match the golden fixtures byte for byte") {
    const Bindings markers = marker_bindings();
    REQUIRE(render_prompt(prompt_template(TemplateName::gamma_fs), markers) ==
            read_golden("gamma_fs.txt"));
    REQUIRE(render_prompt(prompt_template(TemplateName::gamma_a), markers) ==
            read_golden("gamma_a.txt"));
    REQUIRE(render_prompt(prompt_template(TemplateName::gamma_l), markers) ==
            read_golden("gamma_l.txt"));
    REQUIRE(render_prompt(prompt_template(TemplateName::causalize), markers) ==
            read_golden("causalize.txt"));
    REQUIRE(render_prompt(prompt_template(TemplateName::refine), markers) ==
            read_golden("refine.txt"));
}

TEST_CASE("render substitutes bindings verbatim") {
    Bindings b;
    b["Q"] = "2+2?";
    b["c_1"] = "Add the numbers";
    const std::string out = render_prompt(prompt_template(TemplateName::gamma_fs), b);
    REQUIRE(out.find("2+2?") != std::string::npos);
    REQUIRE(out.find("Add the numbers") != std::string::npos);
    REQUIRE(out.find("{Q}") == std::string::npos);
    REQUIRE(out.find("{c_1}") == std::string::npos);
}

TEST_CASE("missing binding raises") {
    Bindings b;
    b["Q"] = "problem";
    b["c_pa_i"] = "Step 1: x";
    b["c_dot_i"] = "bad step";
    // {agent} unbound
    REQUIRE_THROWS_AS(render_prompt(prompt_template(TemplateName::causalize), b), MissingBinding);
}

TEST_CASE("refine carries the enumerated candidates in order") {
    Bindings b;
    b["agent"] = "mathematician";
    b["Q"] = "the question";
    b["candidates"] = "1. first\n2. second\n3. third";
    const std::string out = render_prompt(prompt_template(TemplateName::refine), b);
    const auto p1 = out.find("1. first");
    const auto p2 = out.find("2. second");
    const auto p3 = out.find("3. third");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    REQUIRE(p3 != std::string::npos);
    REQUIRE(p1 < p2);
    REQUIRE(p2 < p3);
}

TEST_CASE("binding values are not re-scanned for placeholders") {
    Bindings b;
    b["Q"] = "does {c_1} confuse you?";
    b["c_1"] = "first";
    const std::string out = render_prompt(prompt_template(TemplateName::gamma_fs), b);
    REQUIRE(out.find("does {c_1} confuse you?") != std::string::npos);
}

TEST_CASE("parse_score handles the supported reply shapes") {
    REQUIRE(parse_score("The impact score is 85.") == 85);
    REQUIRE(parse_score("I'd say 90/100 because the step is load-bearing") == 90);
    REQUIRE(parse_score("Score: 0") == 0);
    REQUIRE(parse_score("100") == 100);
    REQUIRE(parse_score("first 40, later revised to 70") == 70);
    REQUIRE_THROWS_AS(parse_score("no number here"), ParseFailure);
}

TEST_CASE("parse_score rejects out-of-range and embedded numbers") {
    REQUIRE_THROWS_AS(parse_score("32768 tokens were used"), ParseFailure);
    REQUIRE_THROWS_AS(parse_score("ref a85z only"), ParseFailure);
    REQUIRE_THROWS_AS(parse_score("0.85 as a probability"), ParseFailure);
    REQUIRE_THROWS_AS(parse_score("150/100 is not a score"), ParseFailure);
    // The denominator of a fraction is never the score.
    REQUIRE(parse_score("I give 30/100") == 30);
    // A huge number does not mask an earlier valid one.
    REQUIRE(parse_score("Score: 85. (token budget 32768)") == 85);
}

TEST_CASE("parse_score inverts formatting for every integer 0..100") {
    for (int v = 0; v <= 100; ++v) {
        REQUIRE(parse_score(std::to_string(v)) == v);
        REQUIRE(parse_score(std::to_string(v) + "/100") == v);
        REQUIRE(parse_score("score: " + std::to_string(v) + ".") == v);
    }
}
