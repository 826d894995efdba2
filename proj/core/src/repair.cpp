#include "agentfuzz/repair.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz {

std::vector<std::size_t> allocate_trials(std::size_t n, std::size_t k) {
  if (n < k + 1) {
    throw InsufficientTrials("cannot spread " + std::to_string(n) + " trials over " +
                             std::to_string(k + 1) + " prompts");
  }
  std::vector<std::size_t> out(k + 1, n / (k + 1));
  for (std::size_t i = 0; i < n % (k + 1); ++i) ++out[i];
  return out;
}

void VariantSet::validate(std::size_t n) const {
  if (allocation.size() != variants.size() + 1) {
    throw InvariantViolation("variant allocation has the wrong number of slots");
  }
  std::size_t sum = 0;
  for (auto a : allocation) {
    if (a == 0) throw InvariantViolation("variant allocation has an empty slot");
    sum += a;
  }
  if (sum != n) throw InvariantViolation("variant allocation does not sum to n");
  for (const auto& v : variants) {
    if (v.origin != Origin::Mutation || v.parent_id != original.id) {
      throw InvariantViolation("variant '" + v.id + "' is not a mutant of the original");
    }
  }
}

VariantSet generate_variants(const Question& question, std::size_t k, std::size_t n,
                             const MutationEngine& engine, Gateway& gateway, Rng& rng) {
  allocate_trials(n, k);
  VariantSet set;
  set.original = question;
  const auto calls_before = gateway.completed_calls();
  for (std::size_t i = 1; i <= k; ++i) {
    std::vector<MutationOperator> applicable;
    for (auto op : kAllOperators) {
      if (operator_applicable(op, question.text)) applicable.push_back(op);
    }
    const auto op = applicable[uniform_index(rng, applicable.size())];
    const auto id = question.id + "#v" + std::to_string(i);
    try {
      set.variants.push_back(engine.mutate(question, op, gateway, rng, id).mutated);
    } catch (const DegenerateMutation& e) {
      spdlog::warn("variant {} of '{}' dropped: {}", i, question.id, e.what());
    } catch (const ProviderUnavailable& e) {
      spdlog::warn("variant {} of '{}' dropped: {}", i, question.id, e.what());
    }
  }
  if (set.variants.size() < k) {
    spdlog::info("'{}': {} of {} variants generated; allocation recomputed", question.id,
                 set.variants.size(), k);
  }
  set.allocation = allocate_trials(n, set.variants.size());
  set.generation_queries = gateway.completed_calls() - calls_before;
  set.validate(n);
  return set;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kInterpretSystem =
    "You are a monitor agent placed between a planner and a coder. You do not change the "
    "plan's logic. You explain the plan so the coder implements exactly what it says.";

constexpr std::string_view kInterpretTemplate =
    "Interpret the plan below for the coder. Cover each of these aspects:\n"
    "- Core Concepts: the precise meaning of key terms in the requirement.\n"
    "- Edge Cases: boundary inputs the plan mentions, with concrete examples.\n"
    "- Complex Logic: a detailed step-by-step flow for any intricate step.\n"
    "- Relational Phrases: how comparative or ordering words map to code.\n"
    "- Condition Judgments: exact conditions, including strict vs non-strict bounds.\n"
    "Write 'none noted' for an aspect that does not apply.\n\n"
    "{examples}"
    "<question>\n{question}\n</question>\n<plan>\n{plan}\n</plan>\n\n"
    "Answer with exactly these headings, in order:\n"
    "## Core Concepts\n## Edge Cases\n## Complex Logic\n## Relational Phrases\n"
    "## Condition Judgments";

constexpr std::string_view kInterpretExample1 =
    "<plan>\n1. Remove the duplicated elements from the list.\n2. Return the result.\n</plan>\n"
    "## Core Concepts\n'duplicated elements' means every value occurring more than once; all "
    "occurrences of such a value are removed, not just the extra copies.\n"
    "Example: [1, 2, 2, 3] -> [1, 3].\n"
    "## Edge Cases\nAn empty list returns an empty list.\n"
    "## Complex Logic\nCount occurrences first, then keep values whose count is 1, preserving "
    "the input order.\n"
    "## Relational Phrases\nnone noted\n"
    "## Condition Judgments\nKeep a value only when its count equals 1.";

constexpr std::string_view kInterpretExample2 =
    "<plan>\n1. Count how many times the substring occurs, overlapping occurrences included.\n"
    "2. Handle the edge case when the substring is empty.\n</plan>\n"
    "## Core Concepts\n'overlapping' means a new match may start inside the previous one: "
    "'aa' occurs twice in 'aaa'.\n"
    "## Edge Cases\nAn empty substring: return 0. Example: count('abc', '') -> 0.\n"
    "## Complex Logic\nSlide a window of the substring's length over every start index "
    "0..len(s)-len(sub) and compare.\n"
    "## Relational Phrases\nnone noted\n"
    "## Condition Judgments\nThe last valid start index is len(s)-len(sub), inclusive.";

constexpr std::string_view kCheckSystem =
    "You are a monitor agent. Decide whether code complies with its plan. Judge compliance "
    "with the plan only, not general code quality.";

constexpr std::string_view kCheckTemplate =
    "<plan>\n{plan}\n</plan>\n<interpretation>\n{interpretation}\n</interpretation>\n"
    "<code>\n{code}\n</code>\n\n"
    "If the code implements the plan, answer with the single word ALIGNED. Otherwise answer "
    "MISALIGNED followed by one line per mismatch in the form '- <aspect>: <description>'.";

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw TemplateError("cannot read monitor template " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<InterpretSection> heading_section(std::string_view line) {
  auto s = text::trim(line);
  if (!s.starts_with('#')) return std::nullopt;
  while (!s.empty() && (s.front() == '#' || s.front() == ' ')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ':' || s.back() == ' ')) s.remove_suffix(1);
  const auto lowered = text::to_lower(s);
  for (auto sec : kAllSections) {
    const auto h = text::to_lower(section_heading(sec));
    // Accept "Edge Cases" as well as "EP-2 Edge Cases" / "2. Edge Cases".
    if (lowered == h || (lowered.size() > h.size() && lowered.ends_with(h))) return sec;
  }
  return std::nullopt;
}

std::string render_interpretation(const InterpretedPlan* p) {
  if (p == nullptr) return std::string(kNoneNoted);
  std::string out;
  for (auto s : kAllSections) {
    auto it = p->sections.find(s);
    out += "## " + std::string(section_heading(s)) + "\n" +
           (it == p->sections.end() ? std::string(kNoneNoted) : it->second) + "\n";
  }
  return out;
}

}  // namespace

std::string_view section_heading(InterpretSection s) {
  switch (s) {
    case InterpretSection::CoreConcepts: return "Core Concepts";
    case InterpretSection::EdgeCases: return "Edge Cases";
    case InterpretSection::ComplexLogic: return "Complex Logic";
    case InterpretSection::RelationalPhrases: return "Relational Phrases";
    case InterpretSection::ConditionJudgments: return "Condition Judgments";
  }
  return "";
}

MonitorTemplates MonitorTemplates::defaults() {
  MonitorTemplates t;
  t.interpret_system = std::string(kInterpretSystem);
  t.interpret_template = std::string(kInterpretTemplate);
  t.interpret_examples = {std::string(kInterpretExample1), std::string(kInterpretExample2)};
  t.check_system = std::string(kCheckSystem);
  t.check_template = std::string(kCheckTemplate);
  return t;
}

MonitorTemplates MonitorTemplates::load_dir(const std::filesystem::path& dir) {
  auto t = defaults();
  if (const auto p = dir / "interpret.txt"; std::filesystem::exists(p)) {
    t.interpret_template = read_text(p);
  }
  if (const auto p = dir / "interpret.examples.txt"; std::filesystem::exists(p)) {
    t.interpret_examples.clear();
    const auto content = read_text(p);
    std::string current;
    for (auto line : text::split_lines(content)) {
      if (text::trim(line) == "---") {
        if (!text::trim(current).empty()) t.interpret_examples.emplace_back(text::trim(current));
        current.clear();
      } else {
        current += std::string(line) + "\n";
      }
    }
    if (!text::trim(current).empty()) t.interpret_examples.emplace_back(text::trim(current));
  }
  if (const auto p = dir / "check.txt"; std::filesystem::exists(p)) {
    t.check_template = read_text(p);
  }
  for (const auto* tmpl : {&t.interpret_template}) {
    if (tmpl->find("{plan}") == std::string::npos) {
      throw TemplateError("interpret template lacks {plan}");
    }
  }
  for (const char* key : {"{plan}", "{code}"}) {
    if (t.check_template.find(key) == std::string::npos) {
      throw TemplateError(std::string("check template lacks ") + key);
    }
  }
  return t;
}

InterpretedPlan parse_interpretation(const Plan& base, std::string_view raw) {
  InterpretedPlan out;
  out.base = base;
  out.raw_text = std::string(raw);
  std::optional<InterpretSection> current;
  std::map<InterpretSection, std::string> found;
  for (auto line : text::split_lines(raw)) {
    if (auto sec = heading_section(line)) {
      current = sec;
      found.try_emplace(*sec);
      continue;
    }
    if (!current) continue;
    auto& body = found[*current];
    if (!body.empty()) body += "\n";
    body += std::string(line);
  }
  for (auto s : kAllSections) {
    auto it = found.find(s);
    if (it == found.end()) {
      out.sections[s] = std::string(kNoneNoted);
      out.parse_degraded = true;
      continue;
    }
    const auto body = std::string(text::trim(it->second));
    out.sections[s] = body.empty() ? std::string(kNoneNoted) : body;
  }
  if (out.parse_degraded) {
    spdlog::debug("monitor interpretation is missing {} section(s)",
                  std::count_if(std::begin(kAllSections), std::end(kAllSections),
                                [&](auto s) { return !found.contains(s); }));
  }
  if (text::trim(out.raw_text).empty()) out.raw_text = std::string(kNoneNoted);
  return out;
}

AlignmentVerdict parse_alignment(std::string_view raw) {
  AlignmentVerdict v;
  const auto lines = text::split_lines(raw);
  auto first = std::find_if(lines.begin(), lines.end(),
                            [](auto l) { return !text::trim(l).empty(); });
  if (first == lines.end()) {
    v.unparseable = true;
    return v;
  }
  auto head = text::trim(*first);
  while (!head.empty() && (head.front() == '*' || head.front() == '#')) head.remove_prefix(1);
  head = text::trim(head);
  if (text::starts_with_ci(head, "MISALIGNED")) {
    v.aligned = false;
    for (auto it = std::next(first); it != lines.end(); ++it) {
      auto t = text::trim(*it);
      if (!t.starts_with("- ")) continue;
      t.remove_prefix(2);
      AlignmentVerdict::Mismatch m;
      if (const auto colon = t.find(':'); colon != std::string_view::npos) {
        m.section = std::string(text::trim(t.substr(0, colon)));
        m.description = std::string(text::trim(t.substr(colon + 1)));
      } else {
        m.description = std::string(t);
      }
      v.mismatches.push_back(std::move(m));
    }
    if (v.mismatches.empty()) {
      v.mismatches.push_back({"", "monitor reported a mismatch without details"});
    }
    return v;
  }
  if (text::starts_with_ci(head, "ALIGNED")) return v;
  v.unparseable = true;
  return v;
}

Monitor::Monitor(MonitorTemplates templates) : templates_(std::move(templates)) {}

InterpretedPlan Monitor::interpret_plan(const Plan& plan, const Question& question,
                                        AgentSession& session) const {
  std::string examples;
  for (std::size_t i = 0; i < templates_.interpret_examples.size(); ++i) {
    examples += "Example " + std::to_string(i + 1) + ":\n" + templates_.interpret_examples[i] +
                "\n\n";
  }
  auto body = text::render(templates_.interpret_template,
                           {{"question", question.text}, {"plan", plan.raw_text},
                            {"examples", examples}});
  const auto raw =
      session.ask("monitor", stage::kMonitorInterpret, std::move(body), templates_.interpret_system);
  return parse_interpretation(plan, raw);
}

AlignmentVerdict Monitor::check_code(const CodeCandidate& code, const InterpretedPlan* interpreted,
                                     const Plan& plan, AgentSession& session) const {
  auto body = text::render(templates_.check_template,
                           {{"plan", plan.raw_text},
                            {"interpretation", render_interpretation(interpreted)},
                            {"code", code.source}});
  const auto raw =
      session.ask("monitor", stage::kMonitorCheck, std::move(body), templates_.check_system);
  auto verdict = parse_alignment(raw);
  if (verdict.unparseable) {
    spdlog::warn("monitor check verdict unparseable; treating the code as aligned");
  }
  return verdict;
}

PipelineHooks make_repair_hooks(std::shared_ptr<const Monitor> monitor) {
  PipelineHooks hooks;
  hooks.after_plan = [monitor](const Plan& plan, const Question& q, AgentSession& session) {
    return monitor->interpret_plan(plan, q, session);
  };
  hooks.after_code = [monitor](const CodeCandidate& code, const InterpretedPlan* interpreted,
                               const Plan& plan, AgentSession& session) {
    return monitor->check_code(code, interpreted, plan, session);
  };
  return hooks;
}

TrialBatch run_repaired_batch(const Question& question, std::size_t n, const RepairContext& ctx,
                              const RepairOptions& options, Rng& rng) {
  const auto variants =
      generate_variants(question, options.k, n, ctx.engine, ctx.gateway, rng);

  PipelineHooks hooks;
  if (options.monitor) {
    if (!ctx.monitor) throw InvariantViolation("repair with monitor needs a Monitor");
    hooks = make_repair_hooks(ctx.monitor);
  }
  const TrialContext trial_ctx{ctx.gateway, ctx.adapter, hooks, ctx.evaluator, ctx.suite};

  TrialBatch batch;
  batch.question_id = question.id;
  batch.n = n;
  batch.trials.resize(n);
  batch.overhead_queries = variants.generation_queries;
  std::size_t first = 0;
  for (std::size_t slot = 0; slot < variants.allocation.size(); ++slot) {
    const Question& prompted = slot == 0 ? question : variants.variants[slot - 1];
    run_trials_into(prompted, variants.allocation[slot], trial_ctx, batch.trials, first,
                    options.workers);
    first += variants.allocation[slot];
  }
  batch.validate();
  return batch;
}

}  // namespace agentfuzz
