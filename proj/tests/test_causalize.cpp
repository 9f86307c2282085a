#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"

using namespace caucot;
using namespace caucot_test;

TEST_CASE("agent role table and override") {
    Question q;
    q.domain_tag = DomainTag::math;
    REQUIRE(infer_agent_role(q).label == "mathematician");
    q.domain_tag = DomainTag::physics;
    REQUIRE(infer_agent_role(q).label == "physicist");
    q.domain_tag = DomainTag::knowledge;
    REQUIRE(infer_agent_role(q).label == "domain expert");
    q.domain_tag = DomainTag::other;
    REQUIRE(infer_agent_role(q).label == "expert problem solver");

    const AgentRole overridden = infer_agent_role(q, std::string("economist"));
    REQUIRE(overridden.label == "economist");
    REQUIRE(overridden.source == AgentRole::Source::override_cli);
}

TEST_CASE("propose_candidates parses numbered lists and truncates") {
    Question q;
    q.id = "c";
    q.text = "the question";
    const AgentRole agent{"mathematician", AgentRole::Source::tag_table};
    CauCoTConfig cfg;

    ScriptedBackend numbered({{"1. A\n2. B\n3. C"}});
    REQUIRE(propose_candidates(numbered, agent, q, "Step 1: x", "bad", 2, Instruction{}, cfg) ==
            std::vector<std::string>{"A", "B"});

    ScriptedBackend flat({{"just one unstructured fix"}});
    REQUIRE(propose_candidates(flat, agent, q, "Step 1: x", "bad", 3, Instruction{}, cfg) ==
            std::vector<std::string>{"just one unstructured fix"});

    ScriptedBackend blank({{"   \n  "}});
    REQUIRE_THROWS_AS(propose_candidates(blank, agent, q, "Step 1: x", "bad", 3, Instruction{}, cfg),
                      GenerationEmpty);
}

TEST_CASE("propose_candidates keeps multi-line items together") {
    Question q;
    q.id = "c";
    q.text = "the question";
    const AgentRole agent{"mathematician", AgentRole::Source::tag_table};
    CauCoTConfig cfg;
    ScriptedBackend backend({{"preamble to ignore\n1. first line\ncontinues here\n2. second"}});
    const auto candidates =
        propose_candidates(backend, agent, q, "", "bad", 5, Instruction{}, cfg);
    REQUIRE(candidates == std::vector<std::string>{"first line\ncontinues here", "second"});
}

TEST_CASE("refine_select picks the named candidate with fallback") {
    Question q;
    q.id = "c";
    q.text = "the question";
    const AgentRole agent{"mathematician", AgentRole::Source::tag_table};
    CauCoTConfig cfg;

    // singleton short-circuits without a backend call
    ThrowingBackend never;
    REQUIRE(refine_select(never, agent, q, {"X"}, Instruction{}, cfg).text == "X");

    ScriptedBackend chooses_2({{"I choose option 2"}});
    const RefineChoice second =
        refine_select(chooses_2, agent, q, {"A", "B", "C"}, Instruction{}, cfg);
    REQUIRE(second.text == "B");
    REQUIRE(second.index == 2);
    REQUIRE_FALSE(second.parse_failed);

    ScriptedBackend mumbles({{"they all look lovely"}});
    const RefineChoice fallback =
        refine_select(mumbles, agent, q, {"A", "B", "C"}, Instruction{}, cfg);
    REQUIRE(fallback.text == "A");
    REQUIRE(fallback.parse_failed);
}

TEST_CASE("causalize_step repairs a labeled step in one loop under the oracle") {
    const SynthCorpus corpus = build_synth_corpus(4, 11);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;
    cfg.sigma = 0.75;

    const CorpusCase& c = corpus.polluted[0];
    ReasoningChain chain = c.chain;
    const AgentRole agent = infer_agent_role(chain.question);
    CausalizeOutcome scratch;
    scratch.chain = chain;

    const StepRepairResult result = causalize_step(oracle, Instruction{}, chain.question, chain,
                                                   c.label, cfg, agent, scratch);
    REQUIRE(result.status == StepStatus::causalized);
    REQUIRE(result.loops_used == 1);
    REQUIRE(chain.step(c.label).text == corpus.truths[0].corrected_step_text);
    REQUIRE(chain.step(c.label).status == StepStatus::causalized);
}

TEST_CASE("a never-improving backend exhausts at max_loops") {
    const auto chain = make_chain("adv", "Problem adv: hopeless?", {"first", "always wrong"});
    AdversarialBackend backend;
    CauCoTConfig cfg;
    cfg.max_loops = 3;

    const CausalizeOutcome outcome = run_caucot(backend, Instruction{}, chain, cfg);
    REQUIRE(outcome.status == CausalizeStatus::Exhausted);
    for (const StepLog& log : outcome.step_log) {
        REQUIRE(log.loops_used == cfg.max_loops);
        REQUIRE(log.status == StepStatus::exhausted);
    }
    REQUIRE(outcome.generate_calls == chain.size() * cfg.max_loops);
}

TEST_CASE("clean chains pass untouched with zero loops") {
    const SynthCorpus corpus = build_synth_corpus(4, 21);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;

    for (const CorpusCase& c : corpus.clean) {
        const CausalizeOutcome outcome = run_caucot(oracle, Instruction{}, c.chain, cfg);
        REQUIRE(outcome.status == CausalizeStatus::Success);
        REQUIRE(outcome.total_loops == 0);
        REQUIRE(outcome.generate_calls == 0);
        REQUIRE(outcome.chain == c.chain);
    }
}

TEST_CASE("a single injected error is repaired and the final answer recovers") {
    const SynthCorpus corpus = build_synth_corpus(8, 33);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;
    cfg.sigma = 0.75;

    for (std::size_t k = 0; k < corpus.polluted.size(); ++k) {
        const CorpusCase& c = corpus.polluted[k];
        const std::string gold = c.chain.question.gold_answer;
        REQUIRE(exact_match(c.chain.final_answer, gold) == 0);

        const CausalizeOutcome outcome = run_caucot(oracle, Instruction{}, c.chain, cfg);
        REQUIRE(outcome.status == CausalizeStatus::Success);
        REQUIRE(exact_match(outcome.chain.final_answer, gold) == 1);

        int repaired = 0;
        for (const Step& s : outcome.chain.steps) {
            if (s.status == StepStatus::causalized) ++repaired;
        }
        REQUIRE(repaired == 1);
        REQUIRE(outcome.chain.step(c.label).text == corpus.truths[k].corrected_step_text);
        REQUIRE(outcome.chain.provenance == Provenance::causalized);
    }
}

TEST_CASE("steps away from the repair stay byte-identical") {
    const SynthCorpus corpus = build_synth_corpus(6, 55);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;

    for (const CorpusCase& c : corpus.polluted) {
        const CausalizeOutcome outcome = run_caucot(oracle, Instruction{}, c.chain, cfg);
        for (int i = 1; i <= c.chain.size(); ++i) {
            if (i == c.label) continue;
            REQUIRE(outcome.chain.step(i).text == c.chain.step(i).text);
        }
    }
}

TEST_CASE("running again on a repaired chain performs zero loops") {
    const SynthCorpus corpus = build_synth_corpus(4, 66);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;

    const CausalizeOutcome first = run_caucot(oracle, Instruction{}, corpus.polluted[2].chain, cfg);
    REQUIRE(first.status == CausalizeStatus::Success);
    const CausalizeOutcome second = run_caucot(oracle, Instruction{}, first.chain, cfg);
    REQUIRE(second.total_loops == 0);
    REQUIRE(second.status == CausalizeStatus::Success);
    REQUIRE(second.chain.steps == first.chain.steps);
}

TEST_CASE("repair succeeds within one loop for any sigma in [0.30, 0.80]") {
    const SynthCorpus corpus = build_synth_corpus(8, 88);
    OracleBackend oracle(corpus.registry);

    for (double sigma : {0.30, 0.45, 0.60, 0.75, 0.80}) {
        CauCoTConfig cfg;
        cfg.sigma = sigma;
        for (const CorpusCase& c : corpus.polluted) {
            const CausalizeOutcome outcome = run_caucot(oracle, Instruction{}, c.chain, cfg);
            REQUIRE(outcome.status == CausalizeStatus::Success);
            REQUIRE(outcome.step_log[static_cast<std::size_t>(c.label - 1)].loops_used == 1);
        }
    }
}

TEST_CASE("no step past the first is scored before the FSCE gate resolves") {
    // force an error into step 1 so the gate actually loops
    SynthCorpus corpus;
    for (std::uint64_t attempt = 0;; ++attempt) {
        SynthSpec spec;
        spec.seed = detail::mix(4040, attempt);
        auto [clean, gt] = generate_clean_chain(spec, "fsce-1");
        try {
            auto [polluted, truth] = inject_error(clean, gt, ErrorKind::measure, spec.seed, 1);
            corpus.registry.add(registry_entry(clean, truth));
            corpus.polluted.push_back({polluted, truth.error_step, "gsm8k"});
            break;
        } catch (const IncompatibleKind&) {
            continue;
        }
    }

    OracleBackend oracle(corpus.registry);
    RecordingBackend recorder(oracle);
    CauCoTConfig cfg;
    const CausalizeOutcome outcome =
        run_caucot(recorder, Instruction{}, corpus.polluted[0].chain, cfg);
    REQUIRE(outcome.status == CausalizeStatus::Success);
    REQUIRE(outcome.chain.step(1).status == StepStatus::causalized);

    const auto log = recorder.log();
    std::ptrdiff_t last_fs = -1;
    std::ptrdiff_t first_step_score = -1;
    for (std::size_t k = 0; k < log.size(); ++k) {
        if (log[k].mode != RequestMode::score) continue;
        if (RecordingBackend::is_fs_prompt(log[k].prompt)) {
            last_fs = static_cast<std::ptrdiff_t>(k);
        } else if (RecordingBackend::is_step_score_prompt(log[k].prompt) &&
                   first_step_score < 0) {
            first_step_score = static_cast<std::ptrdiff_t>(k);
        }
    }
    REQUIRE(last_fs >= 0);
    REQUIRE(first_step_score > last_fs);
}

TEST_CASE("the audit log covers scoring and repair events") {
    const SynthCorpus corpus = build_synth_corpus(2, 3);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;
    const CorpusCase& c = corpus.polluted[0];
    const CausalizeOutcome outcome = run_caucot(oracle, Instruction{}, c.chain, cfg);

    bool saw_repair = false;
    bool saw_fsce = false;
    for (const AuditRecord& rec : outcome.audit) {
        REQUIRE(rec.chain_id == c.chain.question.id);
        REQUIRE_FALSE(rec.prompt_hashes.empty());
        REQUIRE_FALSE(rec.raw_scores.empty());
        if (rec.phase == "repair") {
            saw_repair = true;
            REQUIRE(rec.step == c.label);
            REQUIRE_FALSE(rec.replacement.empty());
        }
        if (rec.phase == "fsce") saw_fsce = true;
    }
    REQUIRE(saw_repair);
    REQUIRE(saw_fsce);
}

TEST_CASE("free-text chains repair to the registered correction") {
    // classic refund miscalculation: the fraction is applied wrongly in step 3
    const std::string question =
        "A company sold 4000 gallons of milk at $3.5 per gallon. 2/5 of the milk had expired and "
        "was returned for a refund. How much was refunded?";
    const auto chain = make_chain(
        "refund-1", question,
        {"The company sold 4000 gallons of milk at $3.5 per gallon.",
         "2/5 of the purchased milk had passed the expiry date and must be refunded.",
         "Total gallons purchased = 2/5 * 4000 = 800 gallons.",
         "Cost of expired milk = $3.5 * 800 = $2,800.",
         "Therefore, the refund is $2,800. [The answer is $2800."},
        "5600");

    GroundTruthEntry entry;
    entry.chain_id = "refund-1";
    entry.question_text = question;
    entry.error_step = 3;
    entry.error_text = "Total gallons purchased = 2/5 * 4000 = 800 gallons.";
    entry.corrected_text =
        "Total gallons purchased by the fraction of expired milk: 4000 gallons * (2/5) = 1600 "
        "gallons.";
    GroundTruthRegistry registry;
    registry.add(entry);

    OracleBackend oracle(registry);
    CauCoTConfig cfg;
    cfg.sigma = 0.75;
    const CausalizeOutcome outcome = run_caucot(oracle, Instruction{}, chain, cfg);
    REQUIRE(outcome.status == CausalizeStatus::Success);
    REQUIRE(outcome.chain.step(3).text == entry.corrected_text);
    REQUIRE(outcome.chain.step(3).text.find("4000 gallons * (2/5) = 1600") != std::string::npos);
    // untouched steps keep their bytes
    REQUIRE(outcome.chain.step(4).text == chain.step(4).text);
}

TEST_CASE("pending set collects chains with a non-causal step") {
    const SynthCorpus corpus = build_synth_corpus(4, 13);
    OracleBackend oracle(corpus.registry);
    CauCoTConfig cfg;

    std::vector<std::pair<std::string, ChainScoreTable>> scored;
    for (const CorpusCase& c : corpus.polluted) {
        scored.emplace_back(c.chain.question.id,
                            score_chain(oracle, Instruction{}, c.chain.question, c.chain, cfg));
    }
    for (const CorpusCase& c : corpus.clean) {
        scored.emplace_back(c.chain.question.id + "-clean",
                            score_chain(oracle, Instruction{}, c.chain.question, c.chain, cfg));
    }
    const PendingSet pending = build_pending_set(scored);
    REQUIRE(pending.size() == corpus.polluted.size());
    for (std::size_t k = 0; k < pending.size(); ++k) {
        REQUIRE(pending.entries[k].first_noncausal == corpus.polluted[k].label);
    }
}
