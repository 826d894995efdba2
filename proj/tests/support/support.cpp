#include "support.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz::testing {

std::filesystem::path fixture_dir() { return AGENTFUZZ_FIXTURE_DIR; }

std::vector<std::string> stub_runner_command() {
  return {AGENTFUZZ_PYTHON, (fixture_dir() / "stub_runner.py").string()};
}

ProviderConfig fast_config(std::string model_id) {
  ProviderConfig c;
  c.model_id = std::move(model_id);
  c.requests_per_minute = 1'000'000;
  c.backoff_base_s = 0.0;
  return c;
}

ScriptedGateway scripted(ScriptedBehavior behavior, ProviderConfig config) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(behavior));
  auto gateway = std::make_shared<Gateway>(backend, std::move(config), std::make_shared<ManualClock>());
  return {backend, gateway};
}

ScriptRule rule(std::optional<std::string> role, std::optional<std::string> contains,
                std::string response, int fail_times) {
  ScriptRule r;
  r.role = std::move(role);
  r.contains = std::move(contains);
  r.response_template = std::move(response);
  r.fail_times = fail_times;
  return r;
}

std::string fenced(std::string_view body) {
  return "```python\n" + std::string(body) + "\n```";
}

EvaluationOutcome MarkerEvaluator::evaluate(const CodeCandidate& code, const TestSuite&) {
  ++evaluations_;
  const std::string key = "# verdict: ";
  auto pos = code.source.find(key);
  if (pos == std::string::npos) return {Verdict::Fail, "no marker"};
  auto end = code.source.find_first_of("\n ", pos + key.size());
  return {parse_verdict(code.source.substr(pos + key.size(), end - pos - key.size())), "marker"};
}

LookupEmbedder::LookupEmbedder(std::map<std::string, std::vector<double>> table,
                               std::vector<double> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

std::vector<EmbeddingVector> LookupEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  for (const auto& t : texts) {
    auto it = table_.find(t);
    out.push_back({it == table_.end() ? fallback_ : it->second});
  }
  texts_seen_ += static_cast<std::int64_t>(texts.size());
  return out;
}

TestSuite one_case_suite() {
  TestSuite s;
  s.cases.emplace_back(std::string("assert True"));
  return s;
}

TrialBatch batch_of(const std::string& question_id, const std::vector<Verdict>& verdicts,
                    const std::string& plan_prefix) {
  TrialBatch b;
  b.question_id = question_id;
  b.n = verdicts.size();
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    TrialResult t;
    t.index = i;
    t.verdict = verdicts[i];
    t.plan.raw_text = plan_prefix + std::to_string(i);
    t.plan.parse_degraded = true;
    t.code.source = "pass";
    t.prompt_question_id = question_id;
    b.trials.push_back(std::move(t));
  }
  return b;
}

TrialBatch batch_with_passes(const std::string& question_id, std::size_t n, std::size_t passes) {
  std::vector<Verdict> v(n, Verdict::Fail);
  for (std::size_t i = 0; i < passes && i < n; ++i) v[i] = Verdict::Pass;
  return batch_of(question_id, v);
}

MockWorld::MockWorld(ScriptedBehavior mas_behavior, ScriptedBehavior mutator_behavior)
    : mas(scripted(std::move(mas_behavior))),
      mutator(scripted(std::move(mutator_behavior), fast_config("scripted-mutator"))) {}

CampaignEnv MockWorld::env() {
  return CampaignEnv{*mas.gateway, *mutator.gateway, adapter, evaluator,
                     embedder,     engine,           monitor};
}

ScriptedBehavior fail_on_marker_mas(const std::string& marker) {
  return {{rule("planner", std::nullopt, "Requirements:\n1. Handle {hash}.\nSteps:\n1. Implement it."),
           rule("coder", marker, fenced("pass  # verdict: Fail")),
           rule("coder", std::nullopt, fenced("pass  # verdict: Pass")),
           rule("tester", std::nullopt, "VERDICT: PASS")},
          "OK"};
}

ScriptedBehavior appending_mutator(const std::string& marker) {
  return {{rule("mutator", std::nullopt, "<question>{tag:question} Also " + marker + ".</question>")},
          "OK"};
}

ScriptedBehavior mixed_outcome_mas() {
  return {{rule("planner", "DRIFT", "Requirements:\n1. Handle {hash}.\nSteps:\n1. Implement it."),
           rule("planner", std::nullopt,
                "Requirements:\n1. Follow the requirement.\nSteps:\n1. Implement it."),
           rule("coder", "BREAK", fenced("pass  # verdict: Fail")),
           rule("coder", std::nullopt, fenced("pass  # verdict: Pass")),
           rule("tester", std::nullopt, "VERDICT: PASS")},
          "OK"};
}

ScriptedBehavior mixed_outcome_mutator() {
  auto bucket = [](const ChatRequest& r) { return text::fnv1a64(r.last_user_content()) % 16; };
  ScriptRule brk = rule("mutator", std::nullopt, "<question>{tag:question} Also BREAK.</question>");
  brk.predicate = [bucket](const ChatRequest& r) { return bucket(r) == 0; };
  ScriptRule drift = rule("mutator", std::nullopt, "<question>{tag:question} Also DRIFT.</question>");
  drift.predicate = [bucket](const ChatRequest& r) { return bucket(r) >= 10; };
  return {{brk, drift, rule("mutator", std::nullopt, "<question>{tag:question} Also noted.</question>")},
          "OK"};
}

std::vector<SeedInput> demo_seeds(std::size_t count) {
  std::vector<SeedInput> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = "demo/" + std::to_string(i);
    out.push_back({Question::from_dataset(id,
                                          "Write a function for task " + std::to_string(i) +
                                              ". It takes a list of integers. Return the "
                                              "result as an integer.",
                                          "task_" + std::to_string(i)),
                   one_case_suite()});
  }
  return out;
}

nlohmann::json without_wall_time(nlohmann::json j) {
  if (j.is_object()) {
    for (auto& [k, v] : j.items()) {
      v = k == "wall_time_ms" ? nlohmann::json(0) : without_wall_time(std::move(v));
    }
  } else if (j.is_array()) {
    for (auto& v : j) v = without_wall_time(std::move(v));
  }
  return j;
}

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "agentfuzz-test-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw IoError("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void quiet_logs() { spdlog::set_level(spdlog::level::err); }

}  // namespace agentfuzz::testing
