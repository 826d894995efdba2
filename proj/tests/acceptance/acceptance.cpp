// Acceptance runner: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "agentfuzz/campaign.hpp"
#include "agentfuzz/datasets.hpp"
#include "agentfuzz/errors.hpp"
#include "agentfuzz/fitness.hpp"
#include "agentfuzz/repair.hpp"
#include "agentfuzz/report.hpp"
#include "agentfuzz/sandbox.hpp"
#include "cli.hpp"
#include "published_cells.hpp"
#include "support.hpp"

using namespace agentfuzz;
namespace at = agentfuzz::testing;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> problems;
  std::string summary;

  void expect(bool ok, std::string what) {
    if (!ok) {
      pass = false;
      if (problems.size() < 12) problems.push_back(std::move(what));
    }
  }
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Plan raw_plan(const std::string& s) {
  Plan p;
  p.raw_text = s;
  p.parse_degraded = true;
  return p;
}

double independent_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

// ---------------------------------------------------------------------------

Outcome report_arithmetic() {
  Outcome o;
  int ok = 0;
  for (const auto& c : at::kDropCells) {
    const double pct = 100.0 * drop_rate(c.original, c.fuzzing);
    const bool within = std::fabs(pct - c.drop_pct) <= 0.1 + 1e-9;
    ok += within ? 1 : 0;
    o.expect(within, fmt::format("drop {}/{}/{}: {:.4f}/{:.4f} -> {}% vs published {:.1f}%", c.mas,
                                 c.model, c.dataset, c.original, c.fuzzing,
                                 format_percent(pct / 100.0), c.drop_pct));
  }
  for (const auto& c : at::kRepairCells) {
    const double pct = 100.0 * repair_ratio(c.total, c.solved);
    const bool within = std::fabs(pct - c.ratio_pct) <= 0.1 + 1e-9;
    ok += within ? 1 : 0;
    o.expect(within, fmt::format("ratio {}/{}/{}: {}/{} -> {}% vs published {:.1f}%", c.mas, c.model,
                                 c.dataset, c.solved, c.total, format_percent(pct / 100.0),
                                 c.ratio_pct));
  }
  o.summary = fmt::format("{} of 72 published cells reproduced", ok);
  return o;
}

Outcome fitness_correctness() {
  Outcome o;
  // Code reward worked examples.
  o.expect(code_reward(at::batch_with_passes("a", 10, 7), at::batch_with_passes("b", 10, 3)) == 0.4,
           "7/10 vs 3/10 != 0.4");
  o.expect(code_reward(at::batch_with_passes("a", 10, 3), at::batch_with_passes("b", 10, 7)) == -0.4,
           "3/10 vs 7/10 != -0.4");
  o.expect(code_reward(at::batch_with_passes("a", 10, 5), at::batch_with_passes("b", 10, 5)) == 0.0,
           "5/10 vs 5/10 != 0");
  // Antisymmetry, exhaustive for n <= 4.
  std::size_t pairs = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (unsigned a = 0; a < (1u << n); ++a) {
      for (unsigned b = 0; b < (1u << n); ++b) {
        std::vector<Verdict> va(n), vb(n);
        int ca = 0, cb = 0;
        for (std::size_t i = 0; i < n; ++i) {
          va[i] = (a >> i) & 1u ? Verdict::Pass : Verdict::RuntimeError;
          vb[i] = (b >> i) & 1u ? Verdict::Pass : Verdict::Fail;
          ca += (a >> i) & 1u;
          cb += (b >> i) & 1u;
        }
        const auto ba = at::batch_of("a", va), bb = at::batch_of("b", vb);
        const double ab = code_reward(ba, bb), ba_r = code_reward(bb, ba);
        o.expect(ab == -ba_r && ab == static_cast<double>(ca - cb) / static_cast<double>(n),
                 fmt::format("antisymmetry n={} a={} b={}", n, a, b));
        ++pairs;
      }
    }
  }
  // Plan reward worked example: cosines 1 and 0.5 give 0.25.
  const double s = std::sqrt(3.0) / 2.0;
  at::LookupEmbedder e({{"o1", {1, 0}}, {"m1", {1, 0}}, {"o2", {1, 0}}, {"m2", {0.5, s}}});
  const double pr = plan_reward({raw_plan("o1"), raw_plan("o2")}, {raw_plan("m1"), raw_plan("m2")}, e);
  o.expect(std::fabs(pr - 0.25) <= 1e-9, fmt::format("plan reward example {} != 0.25", pr));
  at::LookupEmbedder opp({{"o", {1, 0}}, {"m", {-1, 0}}});
  o.expect(plan_reward({raw_plan("o")}, {raw_plan("m")}, opp) == 1.0, "negative cosine not clamped");
  // Clamped range: random embeddings always give a reward in [0, 1] that
  // matches the clamped mean computed here.
  std::mt19937_64 gen(42);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + gen() % 10, dim = 2 + gen() % 6;
    std::map<std::string, std::vector<double>> table;
    std::vector<Plan> po, pm;
    double expected = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> a(dim), b(dim);
      for (auto& x : a) x = nd(gen);
      for (auto& x : b) x = nd(gen);
      const auto ko = fmt::format("o{}", i), km = fmt::format("m{}", i);
      table[ko] = a;
      table[km] = b;
      po.push_back(raw_plan(ko));
      pm.push_back(raw_plan(km));
      expected += 1.0 - std::clamp(independent_cosine(a, b), 0.0, 1.0);
    }
    expected /= static_cast<double>(n);
    at::LookupEmbedder le(table);
    const double r = plan_reward(po, pm, le);
    o.expect(r >= 0.0 && r <= 1.0 && std::fabs(r - expected) <= 1e-9,
             fmt::format("random plan reward {} vs {}", r, expected));
  }
  // Admission threshold is strict.
  at::LookupEmbedder same;
  o.expect(!fitness(at::batch_with_passes("a", 10, 4), at::batch_with_passes("b", 10, 4), same).admits(),
           "zero fitness admitted");
  o.expect(fitness(at::batch_with_passes("a", 10, 4), at::batch_with_passes("b", 10, 3), same).admits(),
           "positive fitness rejected");
  o.summary = fmt::format("{} antisymmetry pairs, 300 random plan-reward checks", pairs);
  return o;
}

Outcome campaign_end_to_end() {
  Outcome o;
  auto run = [&](const std::filesystem::path& dir, std::int64_t& mas_calls) {
    at::MockWorld w(at::fail_on_marker_mas(), at::appending_mutator());
    CampaignConfig c;
    c.n = 10;
    c.budget = 10000;
    c.rng_seed = 2024;
    auto state = new_campaign(c);
    CampaignStore store(dir);
    run_campaign(state, at::demo_seeds(5), w.env(), &store);
    mas_calls = w.mas.backend->calls();
    return state;
  };
  at::TempDir d1, d2;
  std::int64_t calls1 = 0, calls2 = 0;
  const auto s1 = run(d1.path(), calls1);
  const auto s2 = run(d2.path(), calls2);

  o.expect(s1.failures.size() == 5, fmt::format("{} failures, expected 5", s1.failures.size()));
  o.expect(s1.pool.removed_roots.size() == 5 && s1.pool.active_count() == 0,
           "not every root branch was deactivated");
  std::set<std::string> roots;
  for (const auto& f : s1.failures) roots.insert(f.question.root_id);
  o.expect(roots.size() == 5, "failures do not cover five distinct roots");

  std::int64_t per_trial = 0;
  for (const auto& [id, node] : s1.pool.nodes) {
    for (const auto& t : node.baseline.trials) per_trial += t.queries_consumed;
    per_trial += node.baseline.overhead_queries;
  }
  for (const auto& f : s1.failures) {
    for (const auto& t : f.batch.trials) per_trial += t.queries_consumed;
    per_trial += f.batch.overhead_queries;
  }
  o.expect(s1.consumed_queries == per_trial,
           fmt::format("consumed {} != per-trial sum {}", s1.consumed_queries, per_trial));
  o.expect(s1.consumed_queries == calls1,
           fmt::format("consumed {} != MAS backend calls {}", s1.consumed_queries, calls1));

  const auto strip = [](const std::filesystem::path& dir, const char* file) {
    std::string out;
    std::istringstream in(slurp(dir / file));
    for (std::string line; std::getline(in, line);) {
      out += at::without_wall_time(json::parse(line)).dump() + "\n";
    }
    return out;
  };
  for (const char* f : {"state.json", "failures.jsonl", "campaign_log.jsonl"}) {
    o.expect(strip(d1.path(), f) == strip(d2.path(), f), std::string(f) + " differs between runs");
  }
  o.expect(slurp(d1.path() / "campaign_log.jsonl") == slurp(d2.path() / "campaign_log.jsonl"),
           "campaign log bytes differ");
  o.summary = fmt::format("{} failures, {} queries, {} iterations", s1.failures.size(),
                          s1.consumed_queries, s1.iteration);
  return o;
}

Outcome pool_admission() {
  Outcome o;
  at::TempDir dir;
  at::MockWorld w(at::mixed_outcome_mas(), at::mixed_outcome_mutator());
  CampaignConfig c;
  c.n = 10;
  c.budget = 12000;
  c.rng_seed = 99;
  auto state = new_campaign(c);
  CampaignStore store(dir.path());
  run_campaign(state, at::demo_seeds(4), w.env(), &store);

  const auto saved = json::parse(slurp(dir.path() / "state.json"));
  const auto log = store.read_log();
  const auto replayed_state = store.load_state();
  HashEmbedder embedder;

  std::map<std::string, std::vector<double>> root_plan_vectors_cache;
  std::map<std::string, int> outcomes;
  std::set<std::string> admitted_ids;
  int max_visits = 0;
  for (const auto& rec : log) {
    ++outcomes[std::string(to_string(rec.outcome))];
    // Selection, recomputed from the snapshot taken before it.
    std::int64_t n_total = 0;
    for (const auto& s : rec.before) n_total += s.visits;
    const ScoreSnapshot* best = nullptr;
    double best_score = -1e300;
    for (const auto& s : rec.before) {
      max_visits = std::max(max_visits, s.visits);
      if (!s.active || s.visits >= 15) continue;
      const double mean = s.visits == 0 ? 0.0 : s.total_reward / s.visits;
      const double score =
          mean + 0.5 * std::sqrt(std::log(static_cast<double>(n_total) + 1.0) / (s.visits + 1.0));
      if (score > best_score || (score == best_score && best != nullptr && s.id < best->id)) {
        best = &s;
        best_score = score;
      }
    }
    o.expect(best != nullptr && best->id == rec.selected_id,
             fmt::format("iteration {}: selected {} but recomputation picks {}", rec.iteration,
                         rec.selected_id, best ? best->id : "nothing"));

    if (rec.pass_vector.empty()) continue;
    const auto& root = replayed_state.pool.nodes.at(rec.root_id).baseline;
    if (rec.outcome == StepOutcome::Failure) {
      o.expect(std::all_of(rec.pass_vector.begin(), rec.pass_vector.end(), [](int v) { return v == 0; }),
               fmt::format("iteration {}: failure with passing trials", rec.iteration));
      continue;
    }
    // Fitness against the root baseline.
    const auto root_pv = root.pass_vector();
    double code = 0;
    for (int v : root_pv) code += v;
    for (int v : rec.pass_vector) code -= v;
    code /= static_cast<double>(rec.pass_vector.size());
    std::vector<std::string> texts;
    for (const auto& t : root.trials) texts.push_back(plan_embedding_text(t.plan));
    texts.insert(texts.end(), rec.plan_texts.begin(), rec.plan_texts.end());
    const auto vecs = embedder.embed(texts);
    const std::size_t n = root.trials.size();
    double plan = 0;
    for (std::size_t i = 0; i < n; ++i) {
      plan += 1.0 - std::clamp(independent_cosine(vecs[i].values, vecs[n + i].values), 0.0, 1.0);
    }
    plan /= static_cast<double>(n);
    const double total = code + plan;
    o.expect(rec.fitness.has_value() && std::fabs(rec.fitness->total - total) <= 1e-9,
             fmt::format("iteration {}: logged fitness {} vs recomputed {}", rec.iteration,
                         rec.fitness ? rec.fitness->total : NAN, total));
    const bool admit = total > 0.0;
    o.expect(admit == (rec.outcome == StepOutcome::Admitted),
             fmt::format("iteration {}: fitness {} but outcome {}", rec.iteration, total,
                         to_string(rec.outcome)));
    if (rec.outcome == StepOutcome::Admitted) admitted_ids.insert(rec.mutant_id);
  }
  std::set<std::string> pool_mutants;
  for (const auto& [id, node] : replayed_state.pool.nodes) {
    max_visits = std::max(max_visits, node.stats.visits);
    if (node.question.origin == Origin::Mutation) pool_mutants.insert(id);
  }
  o.expect(pool_mutants == admitted_ids, "pool mutants differ from admitted log entries");
  o.expect(max_visits <= 15, fmt::format("a node reached {} visits", max_visits));
  o.expect(outcomes["admitted"] > 0 && outcomes["discarded"] > 0 && outcomes["failure"] > 0,
           "campaign did not produce mixed outcomes");
  o.expect(saved.at("iteration").get<std::int64_t>() == static_cast<std::int64_t>(log.size()),
           "log length differs from iteration count");
  o.summary = fmt::format("{} steps replayed: {} admitted, {} discarded, {} failures; max visits {}",
                          log.size(), outcomes["admitted"], outcomes["discarded"],
                          outcomes["failure"], max_visits);
  return o;
}

const std::string kInterpretation =
    "## Core Concepts\nsum means addition\n## Edge Cases\nempty list -> 0\n"
    "## Complex Logic\nnone noted\n## Relational Phrases\nnone noted\n"
    "## Condition Judgments\nnegative means < 0";

Outcome repair_contracts() {
  Outcome o;
  const auto alloc = allocate_trials(10, 2);
  o.expect(alloc == std::vector<std::size_t>{4, 3, 3}, "allocation for k=2, n=10 is not [4,3,3]");

  const auto q = Question::from_dataset(
      "q", "Return the sum of a list. Ignore negative numbers. Return 0 when empty.", "total");
  const auto suite = at::one_case_suite();
  int checked = 0;
  for (const std::string check_reply : {"ALIGNED", "MISALIGNED\n- Edge Cases: empty list"}) {
    const bool aligned = check_reply == "ALIGNED";
    std::int64_t monitor_calls = 0;
    ScriptRule spy;
    spy.role = "monitor";
    spy.predicate = [&](const ChatRequest&) {
      ++monitor_calls;
      return false;
    };
    ScriptRule regen_spy = spy;
    regen_spy.role = "coder";
    regen_spy.contains = "<mismatches>";
    auto g = at::scripted(
        {{spy, regen_spy, at::rule("mutator", std::nullopt, "<question>{tag:question} Keep it simple.</question>"),
          at::rule("monitor", "<code>", check_reply), at::rule("monitor", std::nullopt, kInterpretation),
          at::rule("planner", std::nullopt, "Requirements:\n1. sum\nSteps:\n1. add"),
          at::rule("coder", "<mismatches>", at::fenced("regen  # verdict: Pass")),
          at::rule("coder", std::nullopt, at::fenced("code  # verdict: Fail")),
          at::rule("tester", std::nullopt, "VERDICT: PASS")},
         "d"});
    auto adapter = MasAdapter::preset("sccg-style");
    at::MarkerEvaluator ev;
    MutationEngine engine;
    auto monitor = std::make_shared<Monitor>();
    RepairContext ctx{*g.gateway, adapter, ev, suite, engine, monitor};

    // Per-trial call counting, one trial at a time.
    const auto hooks = make_repair_hooks(monitor);
    const PipelineHooks none{};
    for (int i = 0; i < 5; ++i) {
      const auto before_monitor = monitor_calls;
      const auto before_all = g.backend->calls();
      const auto t = run_trial(q, {*g.gateway, adapter, hooks, ev, suite});
      const auto added = monitor_calls - before_monitor;
      o.expect(added == (aligned ? 2 : 3),
               fmt::format("{} trial: monitor-stage calls {}", aligned ? "aligned" : "misaligned", added));
      o.expect(g.backend->calls() - before_all == t.queries_consumed, "trial query count mismatch");
      const auto plain = run_trial(q, {*g.gateway, adapter, none, ev, suite});
      o.expect(t.queries_consumed - plain.queries_consumed == (aligned ? 2 : 3),
               fmt::format("monitor overhead {} - {}", t.queries_consumed, plain.queries_consumed));
    }

    Rng rng(17);
    const auto calls_before = g.backend->calls();
    const auto b = run_repaired_batch(q, 10, ctx, {2, true, 1}, rng);
    o.expect(b.total_queries() == g.backend->calls() - calls_before, "batch query accounting");
    std::map<std::string, std::size_t> per_prompt;
    for (const auto& t : b.trials) {
      ++per_prompt[t.prompt_question_id];
      const auto& tr = t.trace;
      auto pos = [&](const std::string& s) {
        return static_cast<std::ptrdiff_t>(std::find(tr.begin(), tr.end(), s) - tr.begin());
      };
      const auto end = static_cast<std::ptrdiff_t>(tr.size());
      const auto p = pos("planner"), in = pos("monitor-interpret"), c = pos("coder"),
                 ch = pos("monitor-check");
      o.expect(p < end && in < end && c < end && ch < end && p < in && in < c && c < ch,
               "trace order planner < interpret < coder < check violated");
      o.expect(std::count(tr.begin(), tr.end(), "monitor-interpret") == 1 &&
                   std::count(tr.begin(), tr.end(), "monitor-check") == 1,
               "monitor stage repeated");
      const auto regens = std::count(tr.begin(), tr.end(), "coder-regen");
      o.expect(regens == (aligned ? 0 : 1), fmt::format("{} regenerations", regens));
      ++checked;
    }
    std::vector<std::size_t> counts;
    for (const auto& [id, n] : per_prompt) counts.push_back(n);
    o.expect(counts == std::vector<std::size_t>{4, 3, 3}, "repaired batch is not split 4/3/3");
  }
  o.summary = fmt::format("{} repaired traces checked, allocation [4,3,3]", checked);
  return o;
}

Outcome repair_eval_experiment() {
  Outcome o;
  at::TempDir dir;
  const auto failures = dir.path() / "failures.jsonl";
  {
    std::ofstream out(failures);
    for (int i = 0; i < 20; ++i) {
      const auto name = fmt::format("sq{}", i);
      auto q = Question::mutant_of(
          Question::from_dataset(fmt::format("synthetic/{}", i),
                                 fmt::format("Write a function {}. It takes an integer x. Return x squared.", name),
                                 name),
          fmt::format("synthetic/{}@1", i),
          fmt::format("Write a function {}. It accepts an integer x. Return the square of x.", name),
          MutationOperator::Rephrase);
      TestSuite suite;
      suite.cases = {fmt::format("assert {}(3) == 9", name), fmt::format("assert {}(-2) == 4", name)};
      json j = FailureRecord{q, at::batch_with_passes(q.id, 10, 0), std::nullopt};
      j["suite"] = suite;
      out << j.dump() << "\n";
    }
  }
  // The coder answers correctly only when the prompt carries an interpreted plan.
  const json provider{
      {"kind", "scripted"},
      {"rules",
       {{{"role", "mutator"}, {"response", "<question>{tag:question} Keep the signature.</question>"}},
        {{"role", "monitor"}, {"contains", "<code>"}, {"response", "ALIGNED"}},
        {{"role", "monitor"}, {"response", kInterpretation}},
        {{"role", "planner"}, {"response", "Requirements:\n1. square x\nSteps:\n1. multiply"}},
        {{"role", "coder"},
         {"contains", "<interpretation>"},
         {"response", "```python\nimport re, sys\n"
                      "def _impl(x):\n    return x * x\n"
                      "for _n in [f'sq{i}' for i in range(20)]:\n    globals()[_n] = _impl\n```"}},
        {{"role", "coder"},
         {"response", "```python\ndef _impl(x):\n    return x\n"
                      "for _n in [f'sq{i}' for i in range(20)]:\n    globals()[_n] = _impl\n```"}},
        {{"role", "tester"}, {"response", "VERDICT: PASS"}}}},
      {"default_response", "none"}};

  auto eval = [&](bool repair) {
    const auto out_dir = dir.path() / (repair ? "on" : "off");
    std::ostringstream out, err;
    const int rc = cli::run({"repair-eval", "--failures", failures.string(), "--repair-k", "2", "--n", "10",
                             repair ? "--repair" : "--no-repair", "--provider", provider.dump(),
                             "--runner-path", (at::fixture_dir() / "stub_runner.py").string(),
                             "--workers", "4", "--out", out_dir.string(), "--log-level", "error"},
                            out, err);
    o.expect(rc == 0, fmt::format("repair-eval exit {}: {}", rc, err.str()));
    if (rc != 0) return -1.0;
    const auto rep = json::parse(slurp(out_dir / "report.json"));
    const auto& row = rep.at("repair").at(0);
    o.expect(row.at("total_failures") == 20, "repair row total is not 20");
    return row.at("ratio_pct").get<double>();
  };
  const double on = eval(true);
  const double off = eval(false);
  o.expect(on == 100.0, fmt::format("repair on ratio {}%", on));
  o.expect(off == 0.0, fmt::format("repair off ratio {}%", off));
  o.summary = fmt::format("repair on {}%, repair off {}%", format_percent(on / 100.0),
                          format_percent(off / 100.0));
  return o;
}

Outcome sandbox_timeouts() {
  Outcome o;
  SandboxConfig config;
  config.runner_command = at::stub_runner_command();
  ProcessSandbox sandbox(config);

  const auto recs = load_dataset(at::fixture_dir() / "humaneval_et_sample.jsonl", DatasetTag::HumanEvalEt);
  const auto& rec = recs.front();
  o.expect(rec.suite.cases.size() == 5, "reference task does not have 5 cases");
  ExecutionJob job;
  job.job_id = "reference";
  job.candidate_source = rec.reference_source().value_or("");
  job.suite = rec.suite;
  job.per_case_timeout_s = 5;
  job.total_timeout_s = 30;
  const auto ref = sandbox.evaluate(job);
  o.expect(ref.aggregate == Verdict::Pass, fmt::format("reference solution: {} {}",
                                                       to_string(ref.aggregate), ref.stderr_excerpt));

  job.job_id = "loop";
  job.candidate_source = "def has_close_elements(numbers, threshold):\n    while True:\n        pass\n";
  job.per_case_timeout_s = 2;
  job.total_timeout_s = 3;
  const auto t0 = std::chrono::steady_clock::now();
  const auto loop = sandbox.evaluate(job);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.expect(loop.aggregate == Verdict::Timeout, fmt::format("infinite loop: {}", to_string(loop.aggregate)));
  o.expect(elapsed <= job.total_timeout_s + 1.0, fmt::format("timeout took {:.2f}s", elapsed));

  job.job_id = "syntax";
  job.candidate_source = "def has_close_elements(numbers, threshold)\n    return False\n";
  job.per_case_timeout_s = 5;
  job.total_timeout_s = 30;
  const auto bad = sandbox.evaluate(job);
  o.expect(bad.aggregate == Verdict::RuntimeError, fmt::format("syntax error: {}", to_string(bad.aggregate)));
  o.summary = fmt::format("reference Pass, loop Timeout after {:.2f}s, syntax error RuntimeError", elapsed);
  return o;
}

Outcome split_properties() {
  Outcome o;
  std::mt19937_64 gen(7);
  const char* shapes[] = {"HumanEval/{}", "Mbpp/{}", "cc_{}_A", "{}"};
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 2 + gen() % 400;
    const auto seed = gen();
    std::vector<DatasetRecord> records;
    std::set<std::string> all;
    const auto shape = shapes[inst % 4];
    for (std::size_t i = 0; i < n; ++i) {
      DatasetRecord r;
      r.task_id = fmt::format(fmt::runtime(shape), gen() % 100000 * 1000 + i);
      all.insert(r.task_id);
      records.push_back(std::move(r));
    }
    const auto a = split_dataset(records, 0.5, seed);
    auto shuffled = records;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto b = split_dataset(shuffled, 0.5, seed);
    o.expect(a.assignment == b.assignment, fmt::format("instance {}: order-dependent split", inst));
    const auto fz = a.fuzz_ids();
    const auto rp = a.repair_ids();
    std::set<std::string> f(fz.begin(), fz.end()), r(rp.begin(), rp.end());
    std::vector<std::string> both;
    std::set_intersection(f.begin(), f.end(), r.begin(), r.end(), std::back_inserter(both));
    o.expect(both.empty(), fmt::format("instance {}: fuzz and repair overlap", inst));
    std::set<std::string> uni = f;
    uni.insert(r.begin(), r.end());
    o.expect(uni == all, fmt::format("instance {}: split is not exhaustive", inst));
    o.expect(f.size() == (n + 1) / 2, fmt::format("instance {}: {} fuzz of {}", inst, f.size(), n));
  }
  o.summary = "500 randomized instances";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agentfuzz acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  at::quiet_logs();

  const std::vector<Criterion> criteria{
      {1, "report arithmetic against published tables", 1.0, report_arithmetic},
      {2, "fitness correctness", 5.0, fitness_correctness},
      {3, "campaign end to end with scripted mock", 30.0, campaign_end_to_end},
      {4, "pool admission soundness (log replay)", 30.0, pool_admission},
      {5, "repair layer contracts", 10.0, repair_contracts},
      {6, "repair-eval mock experiment", 60.0, repair_eval_experiment},
      {7, "sandbox timeout guarantee", 90.0, sandbox_timeouts},
      {9, "split determinism and disjointness", 5.0, split_properties},
  };

  bool all_pass = true;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.problems.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.time_limit_s) {
      o.pass = false;
      o.problems.push_back(fmt::format("runtime {:.2f}s exceeds {:.0f}s", secs, c.time_limit_s));
    }
    all_pass = all_pass && o.pass;
    std::cout << fmt::format("criterion {}: {} {} ({:.2f}s){}{}\n", c.id, o.pass ? "PASS" : "FAIL",
                             c.name, secs, o.summary.empty() ? "" : "; ", o.summary);
    for (const auto& p : o.problems) std::cout << "    - " << p << "\n";
  }
  return all_pass ? 0 : 1;
}
