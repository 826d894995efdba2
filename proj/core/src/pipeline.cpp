#include "agentfuzz/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz {

using nlohmann::json;

namespace {

constexpr std::string_view kTesterFormat =
    "Write test cases for the code, reason about whether it satisfies them, and finish "
    "with a line 'VERDICT: PASS' or 'VERDICT: FAIL'. After 'VERDICT: FAIL', list each "
    "problem on its own line starting with '- '.";

constexpr std::string_view kCoderFormat =
    "Return the complete implementation in a single fenced ```python code block.";

struct PresetSpec {
  std::string_view name;
  std::string_view planner;
  std::string_view coder;
  std::string_view tester;
  std::vector<std::string> requirement_headers;
  std::vector<std::string> step_headers;
  double temperature;
};

const std::vector<PresetSpec>& presets() {
  static const std::vector<PresetSpec> kPresets = {
      {"sccg-style",
       "You are the analyst of a software team. Decompose the requirement into a list of "
       "precise sub-requirements and design high-level coding steps. Answer exactly as:\n"
       "Requirements:\n1. ...\nSteps:\n1. ...",
       "You are the coder of a software team. Implement the requirement following the "
       "analyst's plan.",
       "You are the tester of a software team. Check the code against the requirement.",
       {"requirements", "requirement", "sub-requirements", "decomposition"},
       {"steps", "plan", "coding steps", "high-level plan"},
       0.0},
      {"metagpt-style",
       "You are the product manager and architect. Analyse the user requirement and produce "
       "a requirement analysis followed by a logic analysis of the implementation. Answer "
       "exactly as:\n## Requirement Analysis\n1. ...\n## Logic Analysis\n1. ...",
       "You are the engineer. Write the code that realises the architect's design.",
       "You are the QA engineer. Review and test the engineer's code.",
       {"requirement analysis", "requirement pool", "requirements"},
       {"logic analysis", "task list", "steps"},
       0.0},
      {"paircoder-style",
       "You are the navigator of a pair-programming team. Reflect on the problem, then "
       "propose a solution plan. Answer exactly as:\nProblem Understanding:\n- ...\n"
       "Solution Plan:\n1. ...",
       "You are the driver of a pair-programming team. Implement the navigator's plan.",
       "You are the navigator reviewing the driver's code against public tests.",
       {"problem understanding", "problem reflection", "requirements"},
       {"solution plan", "plan", "steps"},
       0.2},
  };
  return kPresets;
}

std::string normalize_header(std::string_view line) {
  auto s = text::trim(line);
  while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == ' ')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ':' || s.back() == '*' || s.back() == ' ')) {
    s.remove_suffix(1);
  }
  return text::to_lower(s);
}

// Strips "1." / "2)" / "-" / "*" item markers; returns nullopt for non-items.
std::optional<std::string> item_body(std::string_view line) {
  auto s = text::trim(line);
  if (s.empty()) return std::nullopt;
  if (s.front() == '-' || s.front() == '*' || s.front() == '+') {
    s.remove_prefix(1);
    return std::string(text::trim(s));
  }
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])) != 0) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    return std::string(text::trim(s.substr(i + 1)));
  }
  return std::nullopt;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw AdapterError("cannot read prompt file " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string rendered_entry_point(const Question& q) {
  return q.entry_point ? "\nThe solution must define `" + *q.entry_point + "`." : std::string{};
}

}  // namespace

// ---------------------------------------------------------------------------

Plan parse_sectioned_plan(std::string_view raw, const std::vector<std::string>& requirement_headers,
                          const std::vector<std::string>& step_headers) {
  Plan p;
  p.raw_text = std::string(raw);
  enum class Section { None, Requirements, Steps } current = Section::None;
  bool saw_header = false;
  for (auto line : text::split_lines(raw)) {
    if (text::trim(line).empty()) continue;
    const auto header = normalize_header(line);
    auto is_one_of = [&](const std::vector<std::string>& names) {
      return std::find(names.begin(), names.end(), header) != names.end();
    };
    if (is_one_of(requirement_headers)) {
      current = Section::Requirements;
      saw_header = true;
      continue;
    }
    if (is_one_of(step_headers)) {
      current = Section::Steps;
      saw_header = true;
      continue;
    }
    if (current == Section::None) continue;
    auto& list = current == Section::Requirements ? p.requirements : p.logic_steps;
    if (auto item = item_body(line)) {
      if (!item->empty()) list.push_back(std::move(*item));
    } else if (!list.empty()) {
      list.back() += " " + std::string(text::trim(line));
    } else {
      list.emplace_back(text::trim(line));
    }
  }
  if (!saw_header || (p.requirements.empty() && p.logic_steps.empty())) {
    p.requirements.clear();
    p.logic_steps.clear();
    p.parse_degraded = true;
  }
  return p;
}

std::optional<std::string> extract_last_fenced_block(std::string_view raw) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const auto open = raw.find("```", pos);
    if (open == std::string_view::npos) break;
    const auto body_start = raw.find('\n', open);
    if (body_start == std::string_view::npos) break;
    const auto close = raw.find("```", body_start);
    if (close == std::string_view::npos) break;
    blocks.emplace_back(raw.substr(body_start + 1, close - body_start - 1));
    pos = close + 3;
  }
  if (blocks.size() > 1) {
    spdlog::debug("code extraction: {} fenced blocks, taking the last", blocks.size());
  }
  while (!blocks.empty() && text::trim(blocks.back()).empty()) blocks.pop_back();
  if (blocks.empty()) return std::nullopt;
  return blocks.back();
}

void MasAdapter::validate() const {
  for (const char* role : {"planner", "coder", "tester"}) {
    auto it = role_prompts.find(role);
    if (it == role_prompts.end() || text::trim(it->second).empty()) {
      throw AdapterError("adapter '" + name + "' lacks a " + role + " prompt");
    }
  }
  if (max_refinement_rounds < 0) throw AdapterError("max_refinement_rounds must be >= 0");
  if (!plan_parser || !code_extractor) throw AdapterError("adapter '" + name + "' lacks parsers");
}

LlmParams MasAdapter::params_for(std::string_view role) const {
  if (auto it = llm_params.find(std::string(role)); it != llm_params.end()) return it->second;
  if (auto it = llm_params.find("default"); it != llm_params.end()) return it->second;
  return {};
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : presets()) out.emplace_back(p.name);
  return out;
}

MasAdapter MasAdapter::preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name != name) continue;
    MasAdapter a;
    a.name = std::string(p.name);
    a.role_prompts["planner"] = std::string(p.planner);
    a.role_prompts["coder"] = std::string(p.coder) + " " + std::string(kCoderFormat);
    a.role_prompts["tester"] = std::string(p.tester) + " " + std::string(kTesterFormat);
    auto req = p.requirement_headers;
    auto steps = p.step_headers;
    a.plan_parser = [req, steps](std::string_view raw) {
      return parse_sectioned_plan(raw, req, steps);
    };
    a.code_extractor = extract_last_fenced_block;
    a.llm_params["default"] = LlmParams{p.temperature, 2048};
    a.max_refinement_rounds = 3;
    return a;
  }
  throw AdapterError("unknown adapter preset '" + std::string(name) + "'");
}

MasAdapter MasAdapter::from_json(const json& j, const std::filesystem::path& base_dir) {
  MasAdapter a = preset(j.value("base", std::string("sccg-style")));
  a.name = j.value("name", a.name);
  if (auto it = j.find("role_prompts"); it != j.end()) {
    for (const auto& [role, prompt] : it->items()) a.role_prompts[role] = prompt.get<std::string>();
  }
  if (auto it = j.find("role_prompt_files"); it != j.end()) {
    for (const auto& [role, path] : it->items()) {
      a.role_prompts[role] = read_file(base_dir / path.get<std::string>());
    }
  }
  if (auto it = j.find("parser"); it != j.end()) {
    const auto id = it->value("id", std::string("sections"));
    if (id != "sections") throw AdapterError("unknown plan parser id '" + id + "'");
    auto req = it->value("requirement_headers", std::vector<std::string>{"requirements"});
    auto steps = it->value("step_headers", std::vector<std::string>{"steps"});
    for (auto& h : req) h = text::to_lower(h);
    for (auto& h : steps) h = text::to_lower(h);
    a.plan_parser = [req, steps](std::string_view raw) {
      return parse_sectioned_plan(raw, req, steps);
    };
  }
  if (auto it = j.find("llm_params"); it != j.end()) {
    for (const auto& [role, p] : it->items()) {
      a.llm_params[role] = LlmParams{p.value("temperature", 0.0), p.value("max_tokens", 2048)};
    }
  }
  a.max_refinement_rounds = j.value("max_refinement_rounds", a.max_refinement_rounds);
  a.language_tag = j.value("language_tag", a.language_tag);
  a.validate();
  return a;
}

MasAdapter MasAdapter::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AdapterError("cannot read adapter config " + path.string());
  return from_json(json::parse(in), path.parent_path());
}

// ---------------------------------------------------------------------------

AgentSession::AgentSession(Gateway& gateway, const MasAdapter& adapter)
    : gateway_(gateway), adapter_(adapter) {}

std::string AgentSession::ask(std::string_view role, std::string_view stage_name,
                              std::string user_content, std::optional<std::string> system_override) {
  ChatRequest req;
  req.role_tag = std::string(role);
  req.model_id = gateway_.config().model_id;
  const auto params = adapter_.params_for(role);
  req.temperature = params.temperature;
  req.max_tokens = params.max_tokens;
  std::string system;
  if (system_override) {
    system = std::move(*system_override);
  } else if (auto it = adapter_.role_prompts.find(std::string(role));
             it != adapter_.role_prompts.end()) {
    system = it->second;
  }
  if (!system.empty()) req.messages.push_back({Speaker::System, std::move(system)});
  req.messages.push_back({Speaker::User, std::move(user_content)});
  trace_.emplace_back(stage_name);
  ++queries_;
  return gateway_.complete(req).content;
}

// ---------------------------------------------------------------------------

std::string render_question(const Question& q) {
  return "<question>\n" + q.text + rendered_entry_point(q) + "\n</question>";
}

std::string render_plan_for_coder(const Plan& plan, const InterpretedPlan* interpreted) {
  std::string out = "<plan>\n" + plan.raw_text + "\n</plan>";
  if (interpreted != nullptr) {
    out += "\n<interpretation>\n";
    for (auto s : kAllSections) {
      auto it = interpreted->sections.find(s);
      out += "## " + std::string(to_string(s)) + "\n" +
             (it == interpreted->sections.end() ? std::string(kNoneNoted) : it->second) + "\n";
    }
    out += "</interpretation>";
  }
  return out;
}

Plan plan(const Question& question, AgentSession& session) {
  const auto raw = session.ask(
      "planner", stage::kPlanner,
      render_question(question) + "\nProduce the plan for this requirement.");
  Plan p = session.adapter().plan_parser(raw);
  if (p.parse_degraded) {
    spdlog::debug("planner output for '{}' has no structured sections", question.id);
  }
  return p;
}

namespace {

CodeCandidate code_from(const std::string& raw, const MasAdapter& adapter, CodeProducer producer) {
  auto body = adapter.code_extractor(raw);
  if (!body) throw NoCodeFound("coder completion contains no code block");
  return CodeCandidate{std::move(*body), adapter.language_tag, producer};
}

}  // namespace

CodeCandidate implement(const Question& question, const Plan& plan,
                        const InterpretedPlan* interpreted, AgentSession& session) {
  const auto raw = session.ask("coder", stage::kCoder,
                               render_question(question) + "\n" +
                                   render_plan_for_coder(plan, interpreted) +
                                   "\nImplement the plan.");
  return code_from(raw, session.adapter(), CodeProducer::Coder);
}

CodeCandidate regenerate_after_check(const Question& question, const Plan& plan,
                                     const InterpretedPlan* interpreted, const CodeCandidate& code,
                                     const AlignmentVerdict& verdict, AgentSession& session) {
  std::string issues;
  for (const auto& m : verdict.mismatches) {
    issues += "- " + (m.section.empty() ? std::string{} : m.section + ": ") + m.description + "\n";
  }
  const auto raw = session.ask(
      "coder", stage::kCoderRegen,
      render_question(question) + "\n" + render_plan_for_coder(plan, interpreted) +
          "\n<code>\n" + code.source + "\n</code>\n<mismatches>\n" + issues +
          "</mismatches>\nRevise the code so it complies with the plan.");
  try {
    return code_from(raw, session.adapter(), CodeProducer::CoderAfterMonitorCheck);
  } catch (const NoCodeFound&) {
    spdlog::debug("regeneration produced no code; keeping the previous candidate");
    return code;
  }
}

TestReport parse_test_report(std::string_view raw) {
  TestReport report;
  bool saw_verdict = false, after_fail = false;
  for (auto line : text::split_lines(raw)) {
    const auto t = text::trim(line);
    if (t.starts_with("assert")) report.generated_tests.emplace_back(t);
    if (text::starts_with_ci(t, "VERDICT:")) {
      saw_verdict = true;
      const auto v = text::trim(t.substr(8));
      if (text::starts_with_ci(v, "FAIL")) {
        report.outcome = TestReport::Outcome::SomeFail;
        after_fail = true;
      } else {
        report.outcome = TestReport::Outcome::AllPass;
        after_fail = false;
      }
      continue;
    }
    if (after_fail && t.starts_with("- ")) report.failure_messages.emplace_back(t.substr(2));
  }
  if (!saw_verdict) {
    spdlog::debug("tester report has no VERDICT line; treating as AllPass");
  }
  if (report.outcome == TestReport::Outcome::SomeFail && report.failure_messages.empty()) {
    report.failure_messages.emplace_back("tester reported a failure without details");
  }
  return report;
}

RefinementResult test_and_refine(CodeCandidate code, const Question& question,
                                 AgentSession& session) {
  RefinementResult out;
  const int rounds = session.adapter().max_refinement_rounds;
  for (int round = 0; round < rounds; ++round) {
    const auto raw = session.ask("tester", stage::kTester,
                                 render_question(question) + "\n<code>\n" + code.source +
                                     "\n</code>\nTest this code.");
    out.reports.push_back(parse_test_report(raw));
    const auto& report = out.reports.back();
    if (report.outcome == TestReport::Outcome::AllPass || round + 1 == rounds) break;

    std::string failures;
    for (const auto& m : report.failure_messages) failures += "- " + m + "\n";
    const auto revised = session.ask("coder", stage::kCoderRefine,
                                     render_question(question) + "\n<code>\n" + code.source +
                                         "\n</code>\n<test_report>\n" + failures +
                                         "</test_report>\nFix the code.");
    try {
      code = code_from(revised, session.adapter(), CodeProducer::CoderAfterRefinement);
    } catch (const NoCodeFound&) {
      spdlog::debug("refinement produced no code; keeping the previous candidate");
    }
  }
  out.code = std::move(code);
  return out;
}

// ---------------------------------------------------------------------------

TrialResult run_trial(const Question& question, const TrialContext& ctx, std::size_t index) {
  const auto started = std::chrono::steady_clock::now();
  AgentSession session(ctx.gateway, ctx.adapter);
  TrialResult result;
  result.index = index;
  result.prompt_question_id = question.id;

  try {
    result.plan = plan(question, session);
    const InterpretedPlan* interpreted = nullptr;
    if (ctx.hooks.after_plan) {
      result.interpreted_plan = ctx.hooks.after_plan(result.plan, question, session);
      interpreted = &*result.interpreted_plan;
    }
    auto code = implement(question, result.plan, interpreted, session);
    if (ctx.hooks.after_code) {
      const auto verdict = ctx.hooks.after_code(code, interpreted, result.plan, session);
      if (!verdict.aligned) {
        code = regenerate_after_check(question, result.plan, interpreted, code, verdict, session);
      }
    }
    auto refined = test_and_refine(std::move(code), question, session);
    result.code = std::move(refined.code);

    session.note_stage(stage::kSandbox);
    const auto outcome = ctx.evaluator.evaluate(result.code, ctx.suite);
    result.verdict = outcome.verdict;
    if (outcome.verdict != Verdict::Pass) result.note = outcome.detail;
  } catch (const NoCodeFound& e) {
    result.verdict = Verdict::RuntimeError;
    result.note = e.what();
  } catch (const Error& e) {
    // Provider outages and contract errors end this trial only.
    result.verdict = Verdict::RuntimeError;
    result.note = e.what();
    spdlog::warn("trial {} of '{}' aborted: {}", index, question.id, e.what());
  }
  if (result.plan.raw_text.empty()) {
    result.plan.raw_text = "(no plan)";
    result.plan.parse_degraded = true;
  }

  result.queries_consumed = std::max<std::int64_t>(1, session.queries());
  result.trace = session.trace();
  result.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return result;
}

void run_trials_into(const Question& prompted, std::size_t count, const TrialContext& ctx,
                     std::vector<TrialResult>& out, std::size_t first, std::size_t workers) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      out[first + i] = run_trial(prompted, ctx, first + i);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(workers, 1, count == 0 ? 1 : count);
  if (threads == 1) {
    work();
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
}

TrialBatch run_batch(const Question& question, std::size_t n, const TrialContext& ctx,
                     BatchOptions options) {
  if (n == 0) throw InvariantViolation("run_batch needs n >= 1");
  TrialBatch batch;
  batch.question_id = question.id;
  batch.n = n;
  batch.trials.resize(n);
  run_trials_into(question, n, ctx, batch.trials, 0, options.workers);
  batch.validate();
  return batch;
}

}  // namespace agentfuzz
