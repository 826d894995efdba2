#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/pipeline.hpp"
#include "support.hpp"

using namespace agentfuzz;
using agentfuzz::testing::fenced;
using agentfuzz::testing::MarkerEvaluator;
using agentfuzz::testing::one_case_suite;
using agentfuzz::testing::rule;
using agentfuzz::testing::scripted;
using agentfuzz::testing::TempDir;

namespace {

const std::string kPlan = "Requirements:\n1. Sum the list.\nSteps:\n1. Loop.\n2. Return.";

Question question() { return Question::from_dataset("q", "Return the sum of a list.", "total"); }

ScriptedBehavior happy() {
  return {{rule("planner", std::nullopt, kPlan),
           rule("coder", std::nullopt, fenced("def total(x):\n    return sum(x)  # verdict: Pass")),
           rule("tester", std::nullopt, "assert total([1]) == 1\nVERDICT: PASS")},
          "d"};
}

struct Harness {
  agentfuzz::testing::ScriptedGateway g;
  MasAdapter adapter = MasAdapter::preset("sccg-style");
  PipelineHooks hooks;
  MarkerEvaluator evaluator;
  TestSuite suite = one_case_suite();

  explicit Harness(ScriptedBehavior b) : g(scripted(std::move(b))) {}
  TrialContext ctx() { return {*g.gateway, adapter, hooks, evaluator, suite}; }
};

}  // namespace

TEST(ParsePlan, SectionedNumberedAndBulleted) {
  auto p = parse_sectioned_plan("## Requirements:\n- a\n- b\n  continued\n**Steps**\n1) x\n2. y",
                                {"requirements"}, {"steps"});
  EXPECT_FALSE(p.parse_degraded);
  EXPECT_EQ(p.requirements, (std::vector<std::string>{"a", "b continued"}));
  EXPECT_EQ(p.logic_steps, (std::vector<std::string>{"x", "y"}));
}

TEST(ParsePlan, NoHeadersDegrades) {
  auto p = parse_sectioned_plan("just do it", {"requirements"}, {"steps"});
  EXPECT_TRUE(p.parse_degraded);
  EXPECT_TRUE(p.requirements.empty());
  EXPECT_EQ(p.raw_text, "just do it");
}

TEST(ExtractCode, LastFencedBlockWins) {
  EXPECT_EQ(extract_last_fenced_block("```python\nfirst\n```\ntext\n```python\nsecond\n```"),
            "second\n");
  EXPECT_EQ(extract_last_fenced_block("no code"), std::nullopt);
  EXPECT_EQ(extract_last_fenced_block("```\nonly\n```\n```\n\n```"), "only\n");
}

TEST(TestReport, Parse) {
  auto r = parse_test_report("assert f(1) == 2\nassert f(2) == 3\nVERDICT: FAIL\n- off by one\n- x");
  EXPECT_EQ(r.outcome, TestReport::Outcome::SomeFail);
  EXPECT_EQ(r.generated_tests.size(), 2u);
  EXPECT_EQ(r.failure_messages, (std::vector<std::string>{"off by one", "x"}));
  EXPECT_EQ(parse_test_report("VERDICT: PASS").outcome, TestReport::Outcome::AllPass);
  EXPECT_EQ(parse_test_report("VERDICT: FAIL").failure_messages.size(), 1u);
}

TEST(Adapter, PresetsValidate) {
  for (const auto& name : preset_names()) {
    auto a = MasAdapter::preset(name);
    EXPECT_NO_THROW(a.validate()) << name;
  }
  EXPECT_EQ(preset_names().size(), 3u);
  EXPECT_THROW(MasAdapter::preset("nope"), AdapterError);
  EXPECT_DOUBLE_EQ(MasAdapter::preset("paircoder-style").params_for("coder").temperature, 0.2);
}

TEST(Adapter, MetagptHeadersParse) {
  auto a = MasAdapter::preset("metagpt-style");
  auto p = a.plan_parser("## Requirement Analysis\n1. r\n## Logic Analysis\n1. l");
  EXPECT_EQ(p.requirements, std::vector<std::string>{"r"});
  EXPECT_EQ(p.logic_steps, std::vector<std::string>{"l"});
}

TEST(Adapter, FromJsonWithPromptFile) {
  TempDir dir;
  std::ofstream(dir.path() / "tester.txt") << "Custom tester prompt.";
  auto j = nlohmann::json::parse(R"({"base":"metagpt-style","name":"mine",
      "role_prompts":{"planner":"P"},"role_prompt_files":{"tester":"tester.txt"},
      "parser":{"id":"sections","requirement_headers":["Needs"],"step_headers":["Do"]},
      "llm_params":{"coder":{"temperature":0.5}},"max_refinement_rounds":1})");
  auto a = MasAdapter::from_json(j, dir.path());
  EXPECT_EQ(a.name, "mine");
  EXPECT_EQ(a.role_prompts.at("planner"), "P");
  EXPECT_EQ(a.role_prompts.at("tester"), "Custom tester prompt.");
  EXPECT_EQ(a.plan_parser("Needs:\n- a\nDo:\n- b").logic_steps, std::vector<std::string>{"b"});
  EXPECT_DOUBLE_EQ(a.params_for("coder").temperature, 0.5);
  EXPECT_EQ(a.max_refinement_rounds, 1);
  j["parser"]["id"] = "regex";
  EXPECT_THROW(MasAdapter::from_json(j, dir.path()), AdapterError);
}

TEST(RunTrial, HappyPathUsesThreeQueries) {
  Harness h(happy());
  auto r = run_trial(question(), h.ctx(), 4);
  EXPECT_EQ(r.verdict, Verdict::Pass);
  EXPECT_EQ(r.index, 4u);
  EXPECT_EQ(r.queries_consumed, 3);
  EXPECT_EQ(h.g.backend->calls(), 3);
  EXPECT_EQ(r.trace, (std::vector<std::string>{"planner", "coder", "tester", "sandbox"}));
  EXPECT_EQ(r.plan.requirements, std::vector<std::string>{"Sum the list."});
  EXPECT_FALSE(r.interpreted_plan.has_value());
  EXPECT_EQ(r.code.produced_by, CodeProducer::Coder);
  EXPECT_EQ(r.prompt_question_id, "q");
}

TEST(RunTrial, RefinementStopsAtRoundLimit) {
  auto b = happy();
  b.rules[2] = rule("tester", std::nullopt, "VERDICT: FAIL\n- wrong");
  b.rules.insert(b.rules.begin() + 1,
                 rule("coder", "<test_report>", fenced("revised  # verdict: Fail")));
  Harness h(b);
  auto r = run_trial(question(), h.ctx());
  // planner, coder, 3 tester reports, 2 revisions.
  EXPECT_EQ(r.queries_consumed, 7);
  EXPECT_EQ(std::count(r.trace.begin(), r.trace.end(), "tester"), 3);
  EXPECT_EQ(std::count(r.trace.begin(), r.trace.end(), "coder-refine"), 2);
  EXPECT_EQ(r.code.produced_by, CodeProducer::CoderAfterRefinement);
  EXPECT_EQ(r.verdict, Verdict::Fail);
}

TEST(RunTrial, ZeroRoundsSkipsTester) {
  Harness h(happy());
  h.adapter.max_refinement_rounds = 0;
  auto r = run_trial(question(), h.ctx());
  EXPECT_EQ(r.queries_consumed, 2);
  EXPECT_EQ(r.trace, (std::vector<std::string>{"planner", "coder", "sandbox"}));
}

TEST(RunTrial, NoCodeIsRuntimeError) {
  auto b = happy();
  b.rules[1] = rule("coder", std::nullopt, "I cannot write code.");
  Harness h(b);
  auto r = run_trial(question(), h.ctx());
  EXPECT_EQ(r.verdict, Verdict::RuntimeError);
  EXPECT_FALSE(r.note.empty());
  EXPECT_EQ(h.evaluator.evaluations(), 0);
}

TEST(RunTrial, ProviderOutageIsRuntimeErrorWithQueriesCounted) {
  auto config = agentfuzz::testing::fast_config();
  config.max_retries = 0;
  auto b = happy();
  b.rules[1].fail_times = 1000;
  Harness h(b);
  h.g = scripted(b, config);
  auto r = run_trial(question(), h.ctx());
  EXPECT_EQ(r.verdict, Verdict::RuntimeError);
  EXPECT_EQ(r.queries_consumed, 2);
}

TEST(RunTrial, DegradedPlanStillRuns) {
  auto b = happy();
  b.rules[0] = rule("planner", std::nullopt, "free-form thoughts");
  Harness h(b);
  auto r = run_trial(question(), h.ctx());
  EXPECT_TRUE(r.plan.parse_degraded);
  EXPECT_EQ(r.plan.raw_text, "free-form thoughts");
  EXPECT_EQ(r.verdict, Verdict::Pass);
}

TEST(RunTrial, HooksRunInOrderAndRegenerateOnce) {
  auto b = happy();
  b.rules.insert(b.rules.begin() + 1,
                 rule("coder", "<mismatches>", fenced("fixed  # verdict: Pass")));
  b.rules.insert(b.rules.begin(), rule("monitor", "Interpret", "## Core Concepts\nx"));
  b.rules.insert(b.rules.begin(), rule("monitor", "Check", "MISALIGNED\n- Edge Cases: empty"));
  Harness h(b);
  int interpret_calls = 0;
  h.hooks.after_plan = [&](const Plan& p, const Question&, AgentSession& s) {
    ++interpret_calls;
    s.ask("monitor", stage::kMonitorInterpret, "Interpret");
    InterpretedPlan ip;
    ip.base = p;
    ip.raw_text = "x";
    for (auto sec : kAllSections) ip.sections[sec] = "none noted";
    return ip;
  };
  h.hooks.after_code = [&](const CodeCandidate&, const InterpretedPlan* ip, const Plan&,
                           AgentSession& s) {
    EXPECT_NE(ip, nullptr);
    s.ask("monitor", stage::kMonitorCheck, "Check");
    AlignmentVerdict v;
    v.aligned = false;
    v.mismatches.push_back({"Edge Cases", "empty"});
    return v;
  };
  auto r = run_trial(question(), h.ctx());
  EXPECT_EQ(interpret_calls, 1);
  EXPECT_EQ(r.trace, (std::vector<std::string>{"planner", "monitor-interpret", "coder",
                                               "monitor-check", "coder-regen", "tester",
                                               "sandbox"}));
  EXPECT_EQ(r.queries_consumed, 6);
  EXPECT_EQ(r.code.produced_by, CodeProducer::CoderAfterMonitorCheck);
  EXPECT_TRUE(r.interpreted_plan.has_value());
}

TEST(RenderPlan, InterpretationOnlyWhenPresent) {
  Plan p;
  p.raw_text = "raw plan";
  EXPECT_EQ(render_plan_for_coder(p, nullptr).find("<interpretation>"), std::string::npos);
  InterpretedPlan ip;
  ip.sections[InterpretSection::EdgeCases] = "empty list";
  const auto s = render_plan_for_coder(p, &ip);
  EXPECT_NE(s.find("<interpretation>"), std::string::npos);
  EXPECT_NE(s.find("empty list"), std::string::npos);
}

TEST(RunBatch, SizesOneAndTen) {
  for (std::size_t n : {1u, 10u}) {
    Harness h(happy());
    auto b = run_batch(question(), n, h.ctx(), {4});
    EXPECT_NO_THROW(b.validate());
    ASSERT_EQ(b.trials.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(b.trials[i].index, i);
    EXPECT_EQ(b.trial_queries(), static_cast<std::int64_t>(3 * n));
    EXPECT_EQ(pass_count(b), n);
    EXPECT_EQ(h.g.backend->calls(), static_cast<std::int64_t>(3 * n));
  }
}

TEST(RunBatch, ParallelMatchesSerialModuloTiming) {
  Harness a(happy()), b(happy());
  auto s = run_batch(question(), 10, a.ctx(), {1});
  auto p = run_batch(question(), 10, b.ctx(), {8});
  for (auto* batch : {&s, &p}) {
    for (auto& t : batch->trials) t.wall_time_ms = 0;
  }
  EXPECT_EQ(s, p);
}
