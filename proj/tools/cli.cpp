#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "agentfuzz/campaign.hpp"
#include "agentfuzz/datasets.hpp"
#include "agentfuzz/errors.hpp"
#include "agentfuzz/fitness.hpp"
#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/mutation.hpp"
#include "agentfuzz/pipeline.hpp"
#include "agentfuzz/repair.hpp"
#include "agentfuzz/report.hpp"
#include "agentfuzz/sandbox.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string provider;
  std::string mutator_provider;
  std::string embedder = "hash";
  std::string runner_path;
  std::string adapter = "sccg-style";
  std::size_t workers = 1;
  std::int64_t budget = 10000;
  bool budget_counts_baselines = true;
  std::size_t n = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string dataset;
  std::string dataset_tag;
  std::string mapping;
  std::string split = "all";
  std::string split_file;
  double ratio = 0.5;
  std::optional<std::uint64_t> split_seed;
  std::string failures;
  std::size_t repair_k = 2;
  bool repair = true;
  bool monitor = true;
  std::string state;
  std::string format = "both";
  double per_case_timeout_s = 5.0;
  double total_timeout_s = 60.0;
  int memory_cap_mb = 512;
  std::size_t max_concurrent = 4;
  std::string mutation_templates;
  std::string monitor_templates;
  double exploration_c = 0.5;
  int visit_cap = 15;
  std::string cap_scope = "node";
  bool strict_cardinality = false;
  std::string log_level = "info";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

/// Inline JSON object or a path to a JSON file.
json json_spec(const std::string& spec, const char* what) {
  if (spec.empty()) throw UsageError(std::string(what) + " is required");
  if (text::trim(spec).front() == '{') return json::parse(spec);
  return read_json_file(spec);
}

std::shared_ptr<Gateway> provider_gateway(const std::string& spec, const char* what) {
  return make_gateway(json_spec(spec, what));
}

std::shared_ptr<Embedder> make_embedder(const std::string& spec) {
  if (spec == "hash") return std::make_shared<HashEmbedder>();
  if (spec.starts_with("hash:")) {
    return std::make_shared<HashEmbedder>(std::stoul(spec.substr(5)));
  }
  const auto j = json_spec(spec, "--embedder");
  const auto kind = j.value("kind", std::string("http"));
  if (kind == "hash") return std::make_shared<HashEmbedder>(j.value("dim", std::size_t{256}));
  if (kind != "http") throw UsageError("unknown embedder kind '" + kind + "'");
  return std::make_shared<CachingEmbedder>(std::make_shared<HttpEmbedder>(provider_config_from_json(j)));
}

MasAdapter load_adapter(const std::string& spec) {
  for (const auto& name : preset_names()) {
    if (name == spec) return MasAdapter::preset(spec);
  }
  return MasAdapter::load(spec);
}

std::shared_ptr<CodeEvaluator> make_evaluator(const Options& o) {
  if (o.runner_path.empty()) throw UsageError("--runner-path is required");
  if (!fs::exists(o.runner_path)) throw UsageError("runner not found: " + o.runner_path);
  SandboxConfig c;
  c.runner_command = {o.runner_path};
  c.max_concurrent = static_cast<int>(o.max_concurrent);
  c.per_case_timeout_s = o.per_case_timeout_s;
  c.total_timeout_s = o.total_timeout_s;
  c.memory_cap_mb = o.memory_cap_mb;
  return std::make_shared<SandboxEvaluator>(std::make_shared<ProcessSandbox>(c));
}

MutationEngine make_engine(const Options& o) {
  auto templates = o.mutation_templates.empty() ? MutationTemplates::defaults()
                                                : MutationTemplates::load_dir(o.mutation_templates);
  return MutationEngine(std::move(templates), MutationOptions{3, o.strict_cardinality});
}

std::shared_ptr<Monitor> make_monitor(const Options& o) {
  return std::make_shared<Monitor>(o.monitor_templates.empty()
                                       ? MonitorTemplates::defaults()
                                       : MonitorTemplates::load_dir(o.monitor_templates));
}

DatasetTag infer_tag(const Options& o) {
  if (!o.dataset_tag.empty()) return parse_dataset_tag(o.dataset_tag);
  const auto name = text::to_lower(fs::path(o.dataset).filename().string());
  if (name.find("humaneval") != std::string::npos) return DatasetTag::HumanEvalEt;
  if (name.find("mbpp") != std::string::npos) return DatasetTag::MbppEt;
  if (name.find("codecontest") != std::string::npos) return DatasetTag::CodeContest;
  if (name.find("codereval") != std::string::npos) return DatasetTag::CoderEval;
  return DatasetTag::Custom;
}

std::vector<DatasetRecord> load_records(const Options& o) {
  if (o.dataset.empty()) throw UsageError("--dataset is required");
  const auto tag = infer_tag(o);
  auto mapping = default_mapping(tag);
  if (!o.mapping.empty()) mapping = mapping_from_json(read_json_file(o.mapping), mapping);
  return load_dataset(o.dataset, tag, mapping);
}

std::uint64_t split_seed(const Options& o) { return o.split_seed.value_or(o.seed); }

std::vector<DatasetRecord> select_split(const Options& o, std::vector<DatasetRecord> records) {
  if (o.split == "all") return records;
  SplitSide side;
  if (o.split == "fuzz") {
    side = SplitSide::Fuzz;
  } else if (o.split == "repair") {
    side = SplitSide::Repair;
  } else {
    throw UsageError("--split must be fuzz, repair or all");
  }
  const auto spec = o.split_file.empty() ? split_dataset(records, o.ratio, split_seed(o))
                                         : read_json_file(o.split_file).get<SplitSpec>();
  std::vector<DatasetRecord> out;
  for (auto& r : records) {
    auto it = spec.assignment.find(r.task_id);
    if (it == spec.assignment.end()) {
      throw UsageError("task '" + r.task_id + "' is not in the split file");
    }
    if (it->second == side) out.push_back(std::move(r));
  }
  return out;
}

CampaignConfig campaign_config(const Options& o, bool with_repair) {
  CampaignConfig c;
  c.n = o.n;
  c.budget = o.budget;
  c.exploration_c = o.exploration_c;
  c.visit_cap = o.visit_cap;
  if (o.cap_scope == "node") {
    c.cap_scope = CapScope::Node;
  } else if (o.cap_scope == "branch") {
    c.cap_scope = CapScope::Branch;
  } else {
    throw UsageError("--cap-scope must be node or branch");
  }
  c.budget_counts_baselines = o.budget_counts_baselines;
  c.rng_seed = o.seed;
  c.workers = o.workers;
  if (with_repair) c.repair = RepairOptions{o.repair_k, o.monitor, o.workers};
  return c;
}

std::string configuration_label(const std::string& adapter, bool repair, std::size_t k,
                                bool monitor) {
  if (!repair) return adapter;
  return adapter + " + repair(k=" + std::to_string(k) + (monitor ? ", monitor)" : ")");
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << content;
}

// ---------------------------------------------------------------------------

int cmd_fuzz(const Options& o, bool refuzz, std::ostream& out) {
  if (o.out.empty()) throw UsageError("--out is required");
  auto records = select_split(o, load_records(o));
  const auto tag = infer_tag(o);
  auto mas = provider_gateway(o.provider, "--provider");
  auto mutator = o.mutator_provider.empty() ? mas : provider_gateway(o.mutator_provider, "--mutator-provider");
  const auto adapter = load_adapter(o.adapter);
  auto evaluator = make_evaluator(o);
  auto embedder = make_embedder(o.embedder);
  const auto engine = make_engine(o);
  const auto monitor = make_monitor(o);
  CampaignEnv env{*mas, *mutator, adapter, *evaluator, *embedder, engine, monitor};

  std::vector<SeedInput> seeds;
  for (const auto& r : records) seeds.push_back({r.question(), r.suite});

  fs::create_directories(o.out);
  CampaignStore store(o.out);
  CampaignState state;
  if (store.has_state()) {
    state = store.load_state();
    spdlog::info("resuming campaign at iteration {} ({} queries consumed)", state.iteration,
                 state.consumed_queries);
  } else {
    state = new_campaign(campaign_config(o, refuzz));
  }

  const auto label = configuration_label(adapter.name, refuzz, o.repair_k, o.monitor);
  json meta{{"command", refuzz ? "refuzz" : "fuzz"},
            {"dataset", std::string(to_string(tag))},
            {"dataset_path", o.dataset},
            {"split", o.split},
            {"adapter", adapter.name},
            {"model", mas->config().model_id},
            {"mutator_model", mutator->config().model_id},
            {"n", state.config.n},
            {"k", state.config.n},
            {"budget", state.config.budget},
            {"seed", state.config.rng_seed},
            {"configuration", label}};
  write_text(fs::path(o.out) / "run.json", meta.dump(2) + "\n");

  run_campaign(state, seeds, env, &store);

  const auto report = campaign_report(state, std::string(to_string(tag)), label, meta);
  emit_report(report, o.out, parse_report_format(o.format));
  out << fmt::format("{}: {} iterations, {} failures, {} of {} queries; report in {}\n",
                     refuzz ? "refuzz" : "fuzz", state.iteration, state.failures.size(),
                     state.consumed_queries, state.config.budget, o.out);
  return 0;
}

struct FailureInput {
  FailureRecord record;
  TestSuite suite;
};

std::vector<FailureInput> read_failure_inputs(const std::string& path_spec) {
  if (path_spec.empty()) throw UsageError("--failures is required");
  fs::path path = path_spec;
  if (fs::is_directory(path)) path /= "failures.jsonl";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<FailureInput> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      if (!j.contains("suite")) throw SchemaError("record has no embedded suite");
      out.push_back({j.get<FailureRecord>(), j.at("suite").get<TestSuite>()});
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw EmptyFailureSet(path.string() + " holds no failure records");
  return out;
}

int cmd_repair_eval(const Options& o, std::ostream& out) {
  const auto inputs = read_failure_inputs(o.failures);
  auto mas = provider_gateway(o.provider, "--provider");
  const auto adapter = load_adapter(o.adapter);
  auto evaluator = make_evaluator(o);
  const auto engine = make_engine(o);
  const auto monitor = make_monitor(o);
  const RepairOptions ropts{o.repair_k, o.monitor, o.workers};
  const PipelineHooks no_hooks{};
  Rng rng(o.seed);

  std::vector<TrialBatch> batches;
  std::string lines;
  for (const auto& in : inputs) {
    const auto& q = in.record.question;
    TrialBatch b;
    if (o.repair) {
      RepairContext ctx{*mas, adapter, *evaluator, in.suite, engine, monitor};
      b = run_repaired_batch(q, o.n, ctx, ropts, rng);
    } else {
      TrialContext ctx{*mas, adapter, no_hooks, *evaluator, in.suite};
      b = run_batch(q, o.n, ctx, BatchOptions{o.workers});
    }
    spdlog::info("'{}': {} of {} trials pass", q.id, pass_count(b), b.n);
    lines += json{{"question_id", q.id},
                  {"pass_vector", b.pass_vector()},
                  {"solved", !is_unsolved(b)},
                  {"trial_queries", b.trial_queries()},
                  {"overhead_queries", b.overhead_queries}}
                 .dump() +
             "\n";
    batches.push_back(std::move(b));
  }

  const auto label = configuration_label(adapter.name, o.repair, o.repair_k, o.monitor);
  CampaignReport report;
  report.metadata = {{"command", "repair-eval"}, {"adapter", adapter.name},
                     {"model", mas->config().model_id}, {"n", o.n},
                     {"repair", o.repair}, {"repair_k", o.repair_k},
                     {"monitor", o.monitor}, {"seed", o.seed},
                     {"failures", o.failures}};
  report.repair_rows.push_back(make_repair_row(label, batches));
  report.timing_rows.push_back(make_timing_row(label, batches));
  const auto& row = report.repair_rows.back();
  if (!o.out.empty()) {
    emit_report(report, o.out, parse_report_format(o.format));
    write_text(fs::path(o.out) / "repair_eval.jsonl", lines);
  }
  out << fmt::format("repair-eval: solved {} of {} ({}%)\n", row.solved, row.total_failures,
                     format_percent(row.ratio_pct / 100.0));
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.state.empty()) throw UsageError("--state is required");
  CampaignStore store(o.state);
  if (!store.has_state()) throw IoError("no campaign state in " + o.state);
  const auto state = store.load_state();
  json meta = json::object();
  if (const auto run = fs::path(o.state) / "run.json"; fs::exists(run)) meta = read_json_file(run);
  const auto dataset = meta.value("dataset", std::string("dataset"));
  const auto label = meta.value("configuration", meta.value("adapter", std::string("campaign")));
  const auto report = campaign_report(state, dataset, label, meta);
  const auto dir = o.out.empty() ? fs::path(o.state) : fs::path(o.out);
  for (const auto& p : emit_report(report, dir, parse_report_format(o.format))) {
    out << p.string() << "\n";
  }
  return 0;
}

int cmd_split(const Options& o, std::ostream& out) {
  const auto records = load_records(o);
  const json j = split_dataset(records, o.ratio, split_seed(o));
  if (o.out.empty()) {
    out << j.dump(2) << "\n";
  } else {
    write_text(o.out, j.dump(2) + "\n");
    out << fmt::format("split: {} fuzz, {} repair -> {}\n", j.at("fuzz").size(),
                       j.at("repair").size(), o.out);
  }
  return 0;
}

void add_options(CLI::App& app, Options& o) {
  app.set_config("--config", "", "TOML-like key = value file mirroring the flags");
  app.add_option("--provider", o.provider, "MAS backend: JSON file or inline JSON");
  app.add_option("--mutator-provider", o.mutator_provider, "Mutation backend (default: --provider)");
  app.add_option("--embedder", o.embedder, "hash, hash:DIM, or JSON file/inline JSON")
      ->capture_default_str();
  app.add_option("--runner-path", o.runner_path, "Sandbox runner executable");
  app.add_option("--adapter", o.adapter, "Adapter preset name or JSON file")->capture_default_str();
  app.add_option("--workers", o.workers, "Concurrent trials")->capture_default_str();
  app.add_option("--budget", o.budget, "LLM query budget")->capture_default_str();
  app.add_flag("--budget-counts-baselines,!--no-budget-counts-baselines", o.budget_counts_baselines,
               "Charge baseline runs to the budget");
  app.add_option("--n", o.n, "Trials per question")->capture_default_str();
  app.add_option("--seed", o.seed, "Campaign seed")->capture_default_str();
  app.add_option("--out", o.out, "Output directory (file for split)");
  app.add_option("--dataset", o.dataset, "Dataset JSONL");
  app.add_option("--dataset-tag", o.dataset_tag,
                 "humaneval_et, mbpp_et, codecontest, codereval or custom (default: from file name)");
  app.add_option("--mapping", o.mapping, "Field mapping overrides (JSON)");
  app.add_option("--split", o.split, "fuzz, repair or all")->capture_default_str();
  app.add_option("--split-file", o.split_file, "Split produced by the split command");
  app.add_option("--ratio", o.ratio, "Fuzzing share of the split")->capture_default_str();
  app.add_option("--split-seed", o.split_seed, "Split seed (default: --seed)");
  app.add_option("--failures", o.failures, "Failure JSONL or campaign directory");
  app.add_option("--repair-k", o.repair_k, "Variants per failure")->capture_default_str();
  app.add_flag("--repair,!--no-repair", o.repair, "Run through the repair layer");
  app.add_flag("--monitor,!--no-monitor", o.monitor, "Insert the monitor agent when repairing");
  app.add_option("--state", o.state, "Campaign directory");
  app.add_option("--format", o.format, "md, json or both")->capture_default_str();
  app.add_option("--per-case-timeout", o.per_case_timeout_s)->capture_default_str();
  app.add_option("--total-timeout", o.total_timeout_s)->capture_default_str();
  app.add_option("--memory-cap-mb", o.memory_cap_mb)->capture_default_str();
  app.add_option("--max-concurrent-jobs", o.max_concurrent)->capture_default_str();
  app.add_option("--mutation-templates", o.mutation_templates, "Mutation prompt directory");
  app.add_option("--monitor-templates", o.monitor_templates, "Monitor prompt directory");
  app.add_option("--exploration-c", o.exploration_c)->capture_default_str();
  app.add_option("--visit-cap", o.visit_cap)->capture_default_str();
  app.add_option("--cap-scope", o.cap_scope, "node or branch")->capture_default_str();
  app.add_flag("--strict-cardinality", o.strict_cardinality,
               "Reject mutations that miss the expected sentence count");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error, off")
      ->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fuzzing and repair for code-generation multi-agent systems", "agentfuzz"};
  app.fallthrough();
  app.require_subcommand(1);
  Options o;
  add_options(app, o);
  auto* fuzz = app.add_subcommand("fuzz", "Run a fuzzing campaign");
  auto* repair_eval = app.add_subcommand("repair-eval", "Re-run failures through the repair layer");
  auto* refuzz = app.add_subcommand("refuzz", "Fuzz with repair hooks active");
  auto* report = app.add_subcommand("report", "Render a report from a campaign directory");
  auto* split = app.add_subcommand("split", "Assign dataset tasks to fuzzing and repair");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  spdlog::set_level(spdlog::level::from_str(o.log_level));
  try {
    if (*fuzz) return cmd_fuzz(o, false, out);
    if (*refuzz) return cmd_fuzz(o, true, out);
    if (*repair_eval) return cmd_repair_eval(o, out);
    if (*report) return cmd_report(o, out);
    if (*split) return cmd_split(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"agentfuzz"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace agentfuzz::cli
