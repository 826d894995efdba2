#include "agentfuzz/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "agentfuzz/errors.hpp"

namespace agentfuzz {

using nlohmann::json;

SeedNode* SeedPool::find(const std::string& id) {
  auto it = nodes.find(id);
  return it == nodes.end() ? nullptr : &it->second;
}

const SeedNode* SeedPool::find(const std::string& id) const {
  auto it = nodes.find(id);
  return it == nodes.end() ? nullptr : &it->second;
}

std::size_t SeedPool::active_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const auto& kv) { return kv.second.active; }));
}

std::int64_t SeedPool::total_visits() const {
  std::int64_t n = 0;
  for (const auto& [id, node] : nodes) n += node.stats.visits;
  return n;
}

void SeedPool::deactivate_branch(const std::string& root_id) {
  for (auto& [id, node] : nodes) {
    if (node.question.root_id == root_id) node.active = false;
  }
  removed_roots.insert(root_id);
}

double mcts_score(const MctsStats& stats, std::int64_t n_total, double exploration_c) {
  return stats.mean_reward() +
         exploration_c * std::sqrt(std::log(static_cast<double>(n_total) + 1.0) /
                                   (static_cast<double>(stats.visits) + 1.0));
}

SeedNode* mcts_select(SeedPool& pool, double exploration_c, int visit_cap) {
  const auto n_total = pool.total_visits();
  SeedNode* best = nullptr;
  double best_score = 0.0;
  // nodes is ordered by id, so a strict comparison keeps the lowest id on ties.
  for (auto& [id, node] : pool.nodes) {
    if (!node.active || node.stats.visits >= visit_cap) continue;
    const double s = mcts_score(node.stats, n_total, exploration_c);
    if (best == nullptr || s > best_score) {
      best = &node;
      best_score = s;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

json to_json_value(const CampaignConfig& c) {
  json j{{"n", c.n},
         {"budget", c.budget},
         {"exploration_c", c.exploration_c},
         {"visit_cap", c.visit_cap},
         {"cap_scope", c.cap_scope == CapScope::Node ? "node" : "branch"},
         {"budget_counts_baselines", c.budget_counts_baselines},
         {"rng_seed", c.rng_seed},
         {"workers", c.workers},
         {"checkpoint_every", c.checkpoint_every}};
  if (c.repair) {
    j["repair"] = {{"k", c.repair->k}, {"monitor", c.repair->monitor}};
  } else {
    j["repair"] = nullptr;
  }
  return j;
}

CampaignConfig campaign_config_from_json(const json& j) {
  CampaignConfig c;
  c.n = j.value("n", c.n);
  c.budget = j.value("budget", c.budget);
  c.exploration_c = j.value("exploration_c", c.exploration_c);
  c.visit_cap = j.value("visit_cap", c.visit_cap);
  const auto scope = j.value("cap_scope", std::string("node"));
  if (scope != "node" && scope != "branch") throw SchemaError("cap_scope must be node or branch");
  c.cap_scope = scope == "node" ? CapScope::Node : CapScope::Branch;
  c.budget_counts_baselines = j.value("budget_counts_baselines", c.budget_counts_baselines);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.workers = j.value("workers", c.workers);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (auto it = j.find("repair"); it != j.end() && !it->is_null()) {
    RepairOptions r;
    r.k = it->value("k", r.k);
    r.monitor = it->value("monitor", r.monitor);
    r.workers = c.workers;
    c.repair = r;
  }
  return c;
}

CampaignState new_campaign(CampaignConfig config) {
  if (config.n == 0) throw InvariantViolation("campaign n must be >= 1");
  if (config.budget <= 0) throw InvariantViolation("campaign budget must be positive");
  if (config.visit_cap <= 0) throw InvariantViolation("visit cap must be positive");
  CampaignState s;
  s.rng = Rng(config.rng_seed);
  if (config.repair) config.repair->workers = config.workers;
  s.config = std::move(config);
  return s;
}

namespace {

TrialBatch execute_batch(CampaignState& state, const Question& q, const TestSuite& suite,
                         const CampaignEnv& env) {
  const auto& cfg = state.config;
  if (cfg.repair) {
    const RepairContext ctx{env.mas_gateway, env.adapter, env.evaluator,
                            suite,           env.engine,  env.monitor};
    return run_repaired_batch(q, cfg.n, ctx, *cfg.repair, state.rng);
  }
  const PipelineHooks no_hooks;
  const TrialContext ctx{env.mas_gateway, env.adapter, no_hooks, env.evaluator, suite};
  return run_batch(q, cfg.n, ctx, BatchOptions{cfg.workers});
}

std::vector<std::string> plan_texts(const TrialBatch& b) {
  std::vector<std::string> out;
  out.reserve(b.trials.size());
  for (const auto& t : b.trials) out.push_back(plan_embedding_text(t.plan));
  return out;
}

void apply_visit_cap(CampaignState& state, SeedNode& node) {
  if (node.stats.visits < state.config.visit_cap) return;
  if (state.config.cap_scope == CapScope::Branch) {
    state.pool.deactivate_branch(node.question.root_id);
  } else {
    node.active = false;
  }
}

}  // namespace

void init_pool(CampaignState& state, const std::vector<SeedInput>& seeds, const CampaignEnv& env,
               const std::function<void(const CampaignState&)>& after_each) {
  state.dataset_size = seeds.size();
  for (const auto& seed : seeds) {
    const auto& q = seed.question;
    if (state.pool.nodes.contains(q.id) ||
        std::find(state.unsolved_at_baseline.begin(), state.unsolved_at_baseline.end(), q.id) !=
            state.unsolved_at_baseline.end()) {
      continue;
    }
    if (q.origin != Origin::Dataset) {
      throw InvariantViolation("seed '" + q.id + "' is not a dataset question");
    }
    TrialBatch baseline;
    try {
      seed.suite.validate();
      baseline = execute_batch(state, q, seed.suite, env);
    } catch (const Error& e) {
      spdlog::warn("baseline for '{}' skipped: {}", q.id, e.what());
      state.unsolved_at_baseline.push_back(q.id);
      if (after_each) after_each(state);
      continue;
    }
    if (state.config.budget_counts_baselines) state.consumed_queries += baseline.total_queries();
    if (is_unsolved(baseline)) {
      spdlog::info("'{}' unsolved at baseline; not admitted", q.id);
      state.unsolved_at_baseline.push_back(q.id);
    } else {
      state.suites[q.id] = seed.suite;
      state.pool.roots.insert(q.id);
      state.pool.nodes.emplace(q.id, SeedNode{q, std::move(baseline), {}, true});
    }
    if (after_each) after_each(state);
  }
  state.initialized = true;
}

std::string_view to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::Failure: return "failure";
    case StepOutcome::Admitted: return "admitted";
    case StepOutcome::Discarded: return "discarded";
    case StepOutcome::Degenerate: return "degenerate";
    case StepOutcome::Inapplicable: return "inapplicable";
    case StepOutcome::Exhausted: return "exhausted";
  }
  return "exhausted";
}

namespace {

StepOutcome parse_outcome(std::string_view s) {
  for (auto o : {StepOutcome::Failure, StepOutcome::Admitted, StepOutcome::Discarded,
                 StepOutcome::Degenerate, StepOutcome::Inapplicable, StepOutcome::Exhausted}) {
    if (to_string(o) == s) return o;
  }
  throw SchemaError("unknown step outcome '" + std::string(s) + "'");
}

}  // namespace

StepRecord campaign_step(CampaignState& state, const CampaignEnv& env) {
  StepRecord rec;
  rec.iteration = state.iteration;
  if (state.consumed_queries >= state.config.budget) {
    rec.consumed_after = state.consumed_queries;
    return rec;
  }
  for (const auto& [id, node] : state.pool.nodes) {
    rec.before.push_back({id, node.stats.visits, node.stats.total_reward, node.active});
  }
  SeedNode* node = mcts_select(state.pool, state.config.exploration_c, state.config.visit_cap);
  if (node == nullptr) {
    rec.consumed_after = state.consumed_queries;
    return rec;
  }
  rec.iteration = ++state.iteration;
  rec.selected_id = node->question.id;
  rec.root_id = node->question.root_id;
  node->stats.visits += 1;
  node->stats.last_selected_iteration = state.iteration;

  const auto op = select_operator(state.rng);
  rec.op = op;
  const auto& seed = node->question;
  if (!operator_applicable(op, seed.text)) {
    rec.outcome = StepOutcome::Inapplicable;
    apply_visit_cap(state, *node);
    rec.consumed_after = state.consumed_queries;
    return rec;
  }

  rec.mutant_id = seed.root_id + "@" + std::to_string(state.iteration);
  Question mutant;
  try {
    mutant = env.engine.mutate(seed, op, env.mutator_gateway, state.rng, rec.mutant_id).mutated;
  } catch (const DegenerateMutation& e) {
    spdlog::info("iteration {}: {}", state.iteration, e.what());
    rec.outcome = StepOutcome::Degenerate;
    apply_visit_cap(state, *node);
    rec.consumed_after = state.consumed_queries;
    return rec;
  }
  rec.mutant_text = mutant.text;

  const auto& suite = state.suites.at(seed.root_id);
  auto batch = execute_batch(state, mutant, suite, env);
  rec.batch_queries = batch.total_queries();
  state.consumed_queries += rec.batch_queries;
  rec.pass_vector = batch.pass_vector();
  rec.plan_texts = plan_texts(batch);

  if (is_unsolved(batch)) {
    rec.outcome = StepOutcome::Failure;
    spdlog::info("iteration {}: '{}' fails all {} trials; branch '{}' closed", state.iteration,
                 mutant.id, batch.n, seed.root_id);
    state.failures.push_back(FailureRecord{mutant, std::move(batch), std::nullopt});
    state.pool.deactivate_branch(seed.root_id);
  } else {
    const auto& root = state.pool.nodes.at(seed.root_id);
    const auto f = fitness(root.baseline, batch, env.embedder);
    rec.fitness = f;
    node->stats.total_reward += f.total;
    if (f.admits()) {
      rec.outcome = StepOutcome::Admitted;
      state.pool.nodes.emplace(mutant.id, SeedNode{mutant, std::move(batch), {}, true});
    } else {
      rec.outcome = StepOutcome::Discarded;
    }
  }
  apply_visit_cap(state, *node);
  rec.consumed_after = state.consumed_queries;
  return rec;
}

// ---------------------------------------------------------------------------

json to_json_value(const StepRecord& r) {
  json before = json::array();
  for (const auto& s : r.before) {
    before.push_back(
        {{"id", s.id}, {"visits", s.visits}, {"total_reward", s.total_reward}, {"active", s.active}});
  }
  json j{{"iteration", r.iteration},
         {"before", std::move(before)},
         {"selected_id", r.selected_id},
         {"root_id", r.root_id},
         {"operator", r.op ? json(to_string(*r.op)) : json(nullptr)},
         {"mutant_id", r.mutant_id},
         {"mutant_text", r.mutant_text},
         {"outcome", to_string(r.outcome)},
         {"pass_vector", r.pass_vector},
         {"plan_texts", r.plan_texts},
         {"batch_queries", r.batch_queries},
         {"consumed_after", r.consumed_after}};
  if (r.fitness) {
    j["fitness"] = {{"code_reward", r.fitness->code_reward},
                    {"plan_reward", r.fitness->plan_reward},
                    {"total", r.fitness->total}};
  } else {
    j["fitness"] = nullptr;
  }
  return j;
}

StepRecord step_record_from_json(const json& j) {
  StepRecord r;
  r.iteration = j.at("iteration").get<std::int64_t>();
  for (const auto& s : j.at("before")) {
    r.before.push_back({s.at("id").get<std::string>(), s.at("visits").get<int>(),
                        s.at("total_reward").get<double>(), s.at("active").get<bool>()});
  }
  r.selected_id = j.at("selected_id").get<std::string>();
  r.root_id = j.at("root_id").get<std::string>();
  if (!j.at("operator").is_null()) r.op = parse_operator(j.at("operator").get<std::string>());
  r.mutant_id = j.at("mutant_id").get<std::string>();
  r.mutant_text = j.at("mutant_text").get<std::string>();
  r.outcome = parse_outcome(j.at("outcome").get<std::string>());
  r.pass_vector = j.at("pass_vector").get<std::vector<int>>();
  r.plan_texts = j.at("plan_texts").get<std::vector<std::string>>();
  r.batch_queries = j.at("batch_queries").get<std::int64_t>();
  r.consumed_after = j.at("consumed_after").get<std::int64_t>();
  if (const auto& f = j.at("fitness"); !f.is_null()) {
    r.fitness = FitnessBreakdown{f.at("code_reward").get<double>(),
                                 f.at("plan_reward").get<double>(), f.at("total").get<double>()};
  }
  return r;
}

json state_to_json(const CampaignState& s) {
  json nodes = json::array();
  for (const auto& [id, node] : s.pool.nodes) {
    nodes.push_back({{"question", node.question},
                     {"baseline", node.baseline},
                     {"stats",
                      {{"visits", node.stats.visits},
                       {"total_reward", node.stats.total_reward},
                       {"last_selected_iteration", node.stats.last_selected_iteration}}},
                     {"active", node.active}});
  }
  json suites = json::object();
  for (const auto& [id, suite] : s.suites) suites[id] = suite;
  return json{{"schema_version", kSchemaVersion},
              {"config", to_json_value(s.config)},
              {"nodes", std::move(nodes)},
              {"roots", s.pool.roots},
              {"removed_roots", s.pool.removed_roots},
              {"consumed_queries", s.consumed_queries},
              {"failure_count", s.failures.size()},
              {"iteration", s.iteration},
              {"rng_state", serialize_rng(s.rng)},
              {"initialized", s.initialized},
              {"suites", std::move(suites)},
              {"unsolved_at_baseline", s.unsolved_at_baseline},
              {"dataset_size", s.dataset_size}};
}

CampaignState state_from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw SchemaError("unsupported campaign state schema version");
  }
  CampaignState s;
  s.config = campaign_config_from_json(j.at("config"));
  for (const auto& n : j.at("nodes")) {
    SeedNode node;
    node.question = n.at("question").get<Question>();
    node.baseline = n.at("baseline").get<TrialBatch>();
    const auto& st = n.at("stats");
    node.stats.visits = st.at("visits").get<int>();
    node.stats.total_reward = st.at("total_reward").get<double>();
    node.stats.last_selected_iteration = st.at("last_selected_iteration").get<std::int64_t>();
    node.active = n.at("active").get<bool>();
    const auto id = node.question.id;
    s.pool.nodes.emplace(id, std::move(node));
  }
  s.pool.roots = j.at("roots").get<std::set<std::string>>();
  s.pool.removed_roots = j.at("removed_roots").get<std::set<std::string>>();
  s.consumed_queries = j.at("consumed_queries").get<std::int64_t>();
  s.iteration = j.at("iteration").get<std::int64_t>();
  s.rng = deserialize_rng(j.at("rng_state").get<std::string>());
  s.initialized = j.at("initialized").get<bool>();
  for (const auto& [id, suite] : j.at("suites").items()) s.suites[id] = suite.get<TestSuite>();
  s.unsolved_at_baseline = j.at("unsolved_at_baseline").get<std::vector<std::string>>();
  s.dataset_size = j.at("dataset_size").get<std::size_t>();
  return s;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

void append_line(const std::filesystem::path& p, const std::string& line) {
  std::ofstream out(p, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + p.string());
  out << line << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + p.string());
}

void write_atomic(const std::filesystem::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw IoError("cannot replace " + p.string() + ": " + ec.message());
}

constexpr const char* kStateFile = "state.json";
constexpr const char* kFailuresFile = "failures.jsonl";
constexpr const char* kLogFile = "campaign_log.jsonl";

}  // namespace

CampaignStore::CampaignStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
}

bool CampaignStore::has_state() const { return std::filesystem::exists(dir_ / kStateFile); }

void CampaignStore::save_state(const CampaignState& state) const {
  write_atomic(dir_ / kStateFile, state_to_json(state).dump() + "\n");
}

CampaignState CampaignStore::load_state() const {
  std::ifstream in(dir_ / kStateFile);
  if (!in) throw IoError("no campaign state in " + dir_.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("corrupt state.json: ") + e.what());
  }
  auto state = state_from_json(j);
  auto failures = read_failures();
  const auto count = j.at("failure_count").get<std::size_t>();
  if (failures.size() < count) {
    throw SchemaError("failures.jsonl holds fewer records than state.json expects");
  }
  failures.resize(count);
  state.failures = std::move(failures);
  return state;
}

void CampaignStore::append_failure(const FailureRecord& f, const TestSuite& suite) const {
  json j = f;
  j["suite"] = suite;
  append_line(dir_ / kFailuresFile, j.dump());
}

void CampaignStore::append_log(const StepRecord& r) const {
  append_line(dir_ / kLogFile, to_json_value(r).dump());
}

void CampaignStore::trim_to(const CampaignState& state) const {
  auto failures = read_lines(dir_ / kFailuresFile);
  if (failures.size() > state.failures.size()) failures.resize(state.failures.size());
  std::string f;
  for (const auto& l : failures) f += l + "\n";
  write_atomic(dir_ / kFailuresFile, f);

  std::string log;
  for (const auto& l : read_lines(dir_ / kLogFile)) {
    if (json::parse(l).at("iteration").get<std::int64_t>() <= state.iteration) log += l + "\n";
  }
  write_atomic(dir_ / kLogFile, log);
}

std::vector<StepRecord> CampaignStore::read_log() const {
  std::vector<StepRecord> out;
  for (const auto& l : read_lines(dir_ / kLogFile)) out.push_back(step_record_from_json(json::parse(l)));
  return out;
}

std::vector<FailureRecord> CampaignStore::read_failures() const {
  std::vector<FailureRecord> out;
  for (const auto& l : read_lines(dir_ / kFailuresFile)) {
    out.push_back(json::parse(l).get<FailureRecord>());
  }
  return out;
}

// ---------------------------------------------------------------------------

void run_campaign(CampaignState& state, const std::vector<SeedInput>& seeds,
                  const CampaignEnv& env, const CampaignStore* store,
                  const StepObserver& observer) {
  if (store != nullptr) store->trim_to(state);
  if (!state.initialized) {
    init_pool(state, seeds, env, [&](const CampaignState& s) {
      if (store != nullptr) store->save_state(s);
    });
    if (store != nullptr) store->save_state(state);
    spdlog::info("seed pool: {} of {} questions admitted, {} queries consumed",
                 state.pool.roots.size(), seeds.size(), state.consumed_queries);
  }

  int since_checkpoint = 0;
  while (state.consumed_queries < state.config.budget) {
    const auto failures_before = state.failures.size();
    auto rec = campaign_step(state, env);
    if (rec.outcome == StepOutcome::Exhausted) break;
    if (store != nullptr) {
      if (state.failures.size() > failures_before) {
        const auto& f = state.failures.back();
        store->append_failure(f, state.suites.at(f.question.root_id));
      }
      store->append_log(rec);
      if (state.config.checkpoint_every > 0 && ++since_checkpoint >= state.config.checkpoint_every) {
        store->save_state(state);
        since_checkpoint = 0;
      }
    }
    if (observer) observer(rec, state);
  }
  if (store != nullptr) store->save_state(state);
  spdlog::info("campaign finished: {} iterations, {} failures, {}/{} queries", state.iteration,
               state.failures.size(), state.consumed_queries, state.config.budget);
}

}  // namespace agentfuzz
