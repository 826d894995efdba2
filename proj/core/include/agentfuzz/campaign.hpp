#pragma once

// The fuzzing loop: seed pool, MCTS-style selection, mutation, batch
// execution, fitness gating, failure collection and budget accounting.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agentfuzz/fitness.hpp"
#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/model.hpp"
#include "agentfuzz/mutation.hpp"
#include "agentfuzz/pipeline.hpp"
#include "agentfuzz/random.hpp"
#include "agentfuzz/repair.hpp"
#include "agentfuzz/sandbox.hpp"

namespace agentfuzz {

struct MctsStats {
  int visits = 0;
  double total_reward = 0.0;
  std::int64_t last_selected_iteration = -1;

  double mean_reward() const { return visits == 0 ? 0.0 : total_reward / visits; }
  friend bool operator==(const MctsStats&, const MctsStats&) = default;
};

struct SeedNode {
  Question question;
  TrialBatch baseline;
  MctsStats stats;
  bool active = true;

  friend bool operator==(const SeedNode&, const SeedNode&) = default;
};

struct SeedPool {
  std::map<std::string, SeedNode> nodes;
  std::set<std::string> roots;
  // Roots whose branch was terminated; they never re-enter.
  std::set<std::string> removed_roots;

  SeedNode* find(const std::string& id);
  const SeedNode* find(const std::string& id) const;
  std::size_t active_count() const;
  std::int64_t total_visits() const;
  /// Deactivates the root and every descendant.
  void deactivate_branch(const std::string& root_id);

  friend bool operator==(const SeedPool&, const SeedPool&) = default;
};

/// mean + c * sqrt(ln(N_total + 1) / (visits + 1)).
double mcts_score(const MctsStats& stats, std::int64_t n_total, double exploration_c);

/// Highest-scoring active node with fewer than `visit_cap` visits; ties go to
/// the lowest id. nullptr when nothing is selectable.
SeedNode* mcts_select(SeedPool& pool, double exploration_c, int visit_cap = 15);

enum class CapScope { Node, Branch };

struct CampaignConfig {
  std::size_t n = 10;
  std::int64_t budget = 10000;
  double exploration_c = 0.5;
  int visit_cap = 15;
  CapScope cap_scope = CapScope::Node;
  bool budget_counts_baselines = true;
  std::uint64_t rng_seed = 0;
  std::size_t workers = 1;
  // When set, every batch runs through the repair layer.
  std::optional<RepairOptions> repair;
  // Persist state every this many steps (0 disables periodic saves).
  int checkpoint_every = 1;
};

nlohmann::json to_json_value(const CampaignConfig& c);
CampaignConfig campaign_config_from_json(const nlohmann::json& j);

struct CampaignState {
  CampaignConfig config;
  SeedPool pool;
  std::int64_t consumed_queries = 0;
  std::vector<FailureRecord> failures;
  std::int64_t iteration = 0;
  Rng rng;
  bool initialized = false;
  // Ground truth for every root, keyed by root id.
  std::map<std::string, TestSuite> suites;
  // Dataset questions whose baseline had no pass (not admitted).
  std::vector<std::string> unsolved_at_baseline;
  std::size_t dataset_size = 0;
};

CampaignState new_campaign(CampaignConfig config);

/// Everything a campaign talks to. The mutator gateway serves mutation; the
/// MAS gateway serves the agents (and repair variants).
struct CampaignEnv {
  Gateway& mas_gateway;
  Gateway& mutator_gateway;
  const MasAdapter& adapter;
  CodeEvaluator& evaluator;
  Embedder& embedder;
  const MutationEngine& engine;
  std::shared_ptr<const Monitor> monitor;
};

struct SeedInput {
  Question question;
  TestSuite suite;
};

/// Runs an n-trial baseline per question and admits those with a pass.
/// Questions already recorded in `state` are skipped, so init resumes.
void init_pool(CampaignState& state, const std::vector<SeedInput>& seeds, const CampaignEnv& env,
               const std::function<void(const CampaignState&)>& after_each = {});

enum class StepOutcome { Failure, Admitted, Discarded, Degenerate, Inapplicable, Exhausted };
std::string_view to_string(StepOutcome o);

struct ScoreSnapshot {
  std::string id;
  int visits = 0;
  double total_reward = 0.0;
  bool active = true;
};

/// One loop iteration, as written to campaign_log.jsonl.
struct StepRecord {
  std::int64_t iteration = 0;
  std::vector<ScoreSnapshot> before;  // every pool node, before selection
  std::string selected_id;
  std::string root_id;
  std::optional<MutationOperator> op;
  std::string mutant_id;
  std::string mutant_text;
  StepOutcome outcome = StepOutcome::Exhausted;
  std::optional<FitnessBreakdown> fitness;
  std::vector<int> pass_vector;
  std::vector<std::string> plan_texts;
  std::int64_t batch_queries = 0;
  std::int64_t consumed_after = 0;
};

nlohmann::json to_json_value(const StepRecord& r);
StepRecord step_record_from_json(const nlohmann::json& j);

StepRecord campaign_step(CampaignState& state, const CampaignEnv& env);

/// Durable campaign directory: state.json, failures.jsonl, campaign_log.jsonl.
class CampaignStore {
 public:
  explicit CampaignStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  bool has_state() const;
  /// Atomic replace of state.json.
  void save_state(const CampaignState& state) const;
  /// Loads state.json and the first failure_count records of failures.jsonl.
  CampaignState load_state() const;
  void append_failure(const FailureRecord& f, const TestSuite& suite) const;
  void append_log(const StepRecord& r) const;
  /// Drops failure and log lines written after `state` was saved.
  void trim_to(const CampaignState& state) const;

  std::vector<StepRecord> read_log() const;
  std::vector<FailureRecord> read_failures() const;

 private:
  std::filesystem::path dir_;
};

nlohmann::json state_to_json(const CampaignState& state);
CampaignState state_from_json(const nlohmann::json& j);

using StepObserver = std::function<void(const StepRecord&, const CampaignState&)>;

/// Loops until the budget is spent or nothing is selectable. With a store,
/// progress is persisted so an interrupted run resumes where it stopped.
void run_campaign(CampaignState& state, const std::vector<SeedInput>& seeds,
                  const CampaignEnv& env, const CampaignStore* store = nullptr,
                  const StepObserver& observer = {});

}  // namespace agentfuzz
