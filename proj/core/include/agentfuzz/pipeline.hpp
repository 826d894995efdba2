#pragma once

// Generic planner -> coder -> tester multi-agent pipeline. Per-MAS adapters
// supply role prompts, plan/code parsers and LLM parameters; hooks let the
// monitor agent sit between planner and coder.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/model.hpp"
#include "agentfuzz/sandbox.hpp"

namespace agentfuzz {

namespace stage {
inline constexpr std::string_view kPlanner = "planner";
inline constexpr std::string_view kMonitorInterpret = "monitor-interpret";
inline constexpr std::string_view kCoder = "coder";
inline constexpr std::string_view kMonitorCheck = "monitor-check";
inline constexpr std::string_view kCoderRegen = "coder-regen";
inline constexpr std::string_view kTester = "tester";
inline constexpr std::string_view kCoderRefine = "coder-refine";
inline constexpr std::string_view kSandbox = "sandbox";
}  // namespace stage

struct LlmParams {
  double temperature = 0.0;
  int max_tokens = 2048;
};

struct MasAdapter {
  std::string name;
  // role -> system prompt; planner, coder and tester are required.
  std::map<std::string, std::string> role_prompts;
  std::function<Plan(std::string_view)> plan_parser;
  // Returns the code body, or nullopt when the completion holds no code.
  std::function<std::optional<std::string>(std::string_view)> code_extractor;
  std::map<std::string, LlmParams> llm_params;
  int max_refinement_rounds = 3;
  std::string language_tag = "python";

  void validate() const;
  LlmParams params_for(std::string_view role) const;

  /// "sccg-style", "metagpt-style" or "paircoder-style".
  static MasAdapter preset(std::string_view name);
  /// Adapter config; prompt file paths resolve against `base_dir`.
  static MasAdapter from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static MasAdapter load(const std::filesystem::path& path);
};

std::vector<std::string> preset_names();

/// Parses "Requirements:" / "Steps:" style sections of numbered or bulleted
/// items. Falls back to a raw-only plan flagged parse_degraded.
Plan parse_sectioned_plan(std::string_view raw,
                          const std::vector<std::string>& requirement_headers,
                          const std::vector<std::string>& step_headers);

/// Contents of the last ``` fenced block.
std::optional<std::string> extract_last_fenced_block(std::string_view raw);

/// LLM access for a single trial: counts every gateway call and records the
/// stage trace. Not shared between trials.
class AgentSession {
 public:
  AgentSession(Gateway& gateway, const MasAdapter& adapter);

  /// One LLM call as `role`, traced under `stage_name`. A call counts as a
  /// consumed query even if it ultimately fails.
  std::string ask(std::string_view role, std::string_view stage_name, std::string user_content,
                  std::optional<std::string> system_override = std::nullopt);
  void note_stage(std::string_view stage_name) { trace_.emplace_back(stage_name); }

  std::int64_t queries() const { return queries_; }
  const std::vector<std::string>& trace() const { return trace_; }
  const MasAdapter& adapter() const { return adapter_; }

 private:
  Gateway& gateway_;
  const MasAdapter& adapter_;
  std::int64_t queries_ = 0;
  std::vector<std::string> trace_;
};

struct TestReport {
  enum class Outcome { AllPass, SomeFail };
  std::vector<std::string> generated_tests;
  Outcome outcome = Outcome::AllPass;
  std::vector<std::string> failure_messages;
};

TestReport parse_test_report(std::string_view raw);

struct AlignmentVerdict {
  struct Mismatch {
    std::string section;
    std::string description;
  };
  bool aligned = true;
  std::vector<Mismatch> mismatches;
  bool unparseable = false;
};

struct PipelineHooks {
  std::function<InterpretedPlan(const Plan&, const Question&, AgentSession&)> after_plan;
  std::function<AlignmentVerdict(const CodeCandidate&, const InterpretedPlan*, const Plan&,
                                 AgentSession&)>
      after_code;
};

/// Renders a plan (and its interpretation, when present) for the coder.
std::string render_plan_for_coder(const Plan& plan, const InterpretedPlan* interpreted);
std::string render_question(const Question& q);

Plan plan(const Question& question, AgentSession& session);
CodeCandidate implement(const Question& question, const Plan& plan,
                        const InterpretedPlan* interpreted, AgentSession& session);
/// Single coder revision addressing the monitor's mismatches.
CodeCandidate regenerate_after_check(const Question& question, const Plan& plan,
                                     const InterpretedPlan* interpreted, const CodeCandidate& code,
                                     const AlignmentVerdict& verdict, AgentSession& session);

struct RefinementResult {
  CodeCandidate code;
  std::vector<TestReport> reports;
};

RefinementResult test_and_refine(CodeCandidate code, const Question& question,
                                 AgentSession& session);

struct TrialContext {
  Gateway& gateway;
  const MasAdapter& adapter;
  const PipelineHooks& hooks;
  CodeEvaluator& evaluator;
  const TestSuite& suite;
};

/// One end-to-end MAS execution. Pipeline failures become verdicts.
TrialResult run_trial(const Question& question, const TrialContext& ctx, std::size_t index = 0);

struct BatchOptions {
  std::size_t workers = 1;
};

/// n independent trials, run on up to `workers` threads; results are ordered
/// by trial index regardless of scheduling.
TrialBatch run_batch(const Question& question, std::size_t n, const TrialContext& ctx,
                     BatchOptions options = {});

/// Runs `count` trials of `prompted` concurrently, writing into out[first..].
void run_trials_into(const Question& prompted, std::size_t count, const TrialContext& ctx,
                     std::vector<TrialResult>& out, std::size_t first, std::size_t workers);

}  // namespace agentfuzz
