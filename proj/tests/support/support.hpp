#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentfuzz/campaign.hpp"
#include "agentfuzz/fitness.hpp"
#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/model.hpp"
#include "agentfuzz/sandbox.hpp"

namespace agentfuzz::testing {

std::filesystem::path fixture_dir();
std::vector<std::string> stub_runner_command();

/// No retries delays, effectively unlimited rate.
ProviderConfig fast_config(std::string model_id = "scripted");

struct ScriptedGateway {
  std::shared_ptr<ScriptedBackend> backend;
  std::shared_ptr<Gateway> gateway;
};
ScriptedGateway scripted(ScriptedBehavior behavior, ProviderConfig config = fast_config());

ScriptRule rule(std::optional<std::string> role, std::optional<std::string> contains,
                std::string response, int fail_times = 0);

/// "```python\n<body>\n```"
std::string fenced(std::string_view body);

/// Verdict taken from a "# verdict: <Name>" marker in the code, Fail when
/// there is none.
class MarkerEvaluator final : public CodeEvaluator {
 public:
  EvaluationOutcome evaluate(const CodeCandidate& code, const TestSuite& suite) override;
  std::int64_t evaluations() const { return evaluations_.load(); }

 private:
  std::atomic<std::int64_t> evaluations_{0};
};

/// Fixed vectors per text; unknown texts get `fallback`.
class LookupEmbedder final : public Embedder {
 public:
  explicit LookupEmbedder(std::map<std::string, std::vector<double>> table = {},
                          std::vector<double> fallback = {1.0, 0.0});
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::int64_t texts_seen() const { return texts_seen_.load(); }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::vector<double> fallback_;
  std::atomic<std::int64_t> texts_seen_{0};
};

TestSuite one_case_suite();

/// Batch with the given verdicts; trial i gets plan text `plan_prefix + i`.
TrialBatch batch_of(const std::string& question_id, const std::vector<Verdict>& verdicts,
                    const std::string& plan_prefix = "plan ");
/// Batch of n trials, the first `passes` passing.
TrialBatch batch_with_passes(const std::string& question_id, std::size_t n, std::size_t passes);

/// Scripted stand-in for every external service a campaign talks to.
struct MockWorld {
  MockWorld(ScriptedBehavior mas_behavior, ScriptedBehavior mutator_behavior);

  ScriptedGateway mas;
  ScriptedGateway mutator;
  MasAdapter adapter = MasAdapter::preset("sccg-style");
  MarkerEvaluator evaluator;
  HashEmbedder embedder;
  MutationEngine engine;
  std::shared_ptr<Monitor> monitor = std::make_shared<Monitor>();

  CampaignEnv env();
};

/// MAS whose coder fails on any question containing `marker` and passes
/// otherwise. Plans embed a digest of the prompt.
ScriptedBehavior fail_on_marker_mas(const std::string& marker = "MUTATED");
/// Mutator that appends " Also <marker>." to the question.
ScriptedBehavior appending_mutator(const std::string& marker = "MUTATED");

/// Mixed outcomes: mutants tagged DRIFT get a prompt-specific plan (positive
/// plan reward), BREAK mutants fail every trial, the rest plan and pass like
/// their root (zero fitness).
ScriptedBehavior mixed_outcome_mas();
/// Picks plain / DRIFT / BREAK from a digest of the mutation prompt.
ScriptedBehavior mixed_outcome_mutator();

/// `count` multi-sentence dataset questions with one-case suites.
std::vector<SeedInput> demo_seeds(std::size_t count);

/// Copy of `j` with every "wall_time_ms" value set to 0.
nlohmann::json without_wall_time(nlohmann::json j);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Sets spdlog to errors only for the lifetime of the process.
void quiet_logs();

}  // namespace agentfuzz::testing
