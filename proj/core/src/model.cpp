#include "agentfuzz/model.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include <nlohmann/json.hpp>

#include "agentfuzz/errors.hpp"

namespace agentfuzz {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name,
                const std::array<std::pair<std::string_view, Enum>, N>& table,
                std::string_view what) {
  for (const auto& [key, value] : table) {
    if (key == name) return value;
  }
  throw SchemaError("unknown " + std::string(what) + ": '" + std::string(name) +
                    "'");
}

constexpr std::array<std::pair<std::string_view, MutationOperator>, 4>
    kOperatorNames{{{"Rephrase", MutationOperator::Rephrase},
                    {"Insert", MutationOperator::Insert},
                    {"Expand", MutationOperator::Expand},
                    {"Condense", MutationOperator::Condense}}};

constexpr std::array<std::pair<std::string_view, Verdict>, 5> kVerdictNames{
    {{"Pass", Verdict::Pass},
     {"Fail", Verdict::Fail},
     {"Timeout", Verdict::Timeout},
     {"RuntimeError", Verdict::RuntimeError},
     {"SandboxError", Verdict::SandboxError}}};

constexpr std::array<std::pair<std::string_view, InterpretSection>, 5>
    kSectionNames{{{"CoreConcepts", InterpretSection::CoreConcepts},
                   {"EdgeCases", InterpretSection::EdgeCases},
                   {"ComplexLogic", InterpretSection::ComplexLogic},
                   {"RelationalPhrases", InterpretSection::RelationalPhrases},
                   {"ConditionJudgments", InterpretSection::ConditionJudgments}}};

constexpr std::array<std::pair<std::string_view, Origin>, 2> kOriginNames{
    {{"dataset", Origin::Dataset}, {"mutation", Origin::Mutation}}};

constexpr std::array<std::pair<std::string_view, CodeProducer>, 3>
    kProducerNames{{{"coder", CodeProducer::Coder},
                    {"coder_after_refinement", CodeProducer::CoderAfterRefinement},
                    {"coder_after_monitor_check",
                     CodeProducer::CoderAfterMonitorCheck}}};

constexpr std::array<std::pair<std::string_view, FailureCategory>, 3>
    kCategoryNames{{{"PlannerCoderGap", FailureCategory::PlannerCoderGap},
                    {"PlanLogicError", FailureCategory::PlanLogicError},
                    {"Invalid", FailureCategory::Invalid}}};

constexpr std::array<std::pair<std::string_view, ErrorPattern>, 5>
    kPatternNames{{{"EP1_CoreConcepts", ErrorPattern::EP1_CoreConcepts},
                   {"EP2_EdgeCases", ErrorPattern::EP2_EdgeCases},
                   {"EP3_ComplexLogic", ErrorPattern::EP3_ComplexLogic},
                   {"EP4_RelationalPhrases", ErrorPattern::EP4_RelationalPhrases},
                   {"EP5_ConditionJudgments",
                    ErrorPattern::EP5_ConditionJudgments}}};

constexpr std::array<std::pair<std::string_view, SuiteMode>, 2> kModeNames{
    {{"AssertionBased", SuiteMode::AssertionBased},
     {"StdioBased", SuiteMode::StdioBased}}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value,
                         const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [key, v] : table) {
    if (v == value) return key;
  }
  return "?";
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
  if (value) {
    j[key] = *value;
  } else {
    j[key] = nullptr;
  }
}

}  // namespace

std::string_view to_string(MutationOperator op) { return name_of(op, kOperatorNames); }
std::string_view to_string(Origin origin) { return name_of(origin, kOriginNames); }
std::string_view to_string(CodeProducer p) { return name_of(p, kProducerNames); }
std::string_view to_string(Verdict v) { return name_of(v, kVerdictNames); }
std::string_view to_string(InterpretSection s) { return name_of(s, kSectionNames); }
std::string_view to_string(FailureCategory c) { return name_of(c, kCategoryNames); }
std::string_view to_string(ErrorPattern p) { return name_of(p, kPatternNames); }
std::string_view to_string(SuiteMode m) { return name_of(m, kModeNames); }

MutationOperator parse_operator(std::string_view name) {
  return parse_enum(name, kOperatorNames, "mutation operator");
}
Verdict parse_verdict(std::string_view name) {
  return parse_enum(name, kVerdictNames, "verdict");
}
InterpretSection parse_section(std::string_view name) {
  return parse_enum(name, kSectionNames, "interpretation section");
}
SuiteMode parse_suite_mode(std::string_view name) {
  return parse_enum(name, kModeNames, "suite mode");
}

// ---------------------------------------------------------------------------

Question Question::from_dataset(std::string id, std::string text,
                                std::optional<std::string> entry_point) {
  Question q;
  q.root_id = id;
  q.id = std::move(id);
  q.text = std::move(text);
  q.entry_point = std::move(entry_point);
  q.origin = Origin::Dataset;
  q.validate();
  return q;
}

Question Question::mutant_of(const Question& parent, std::string id,
                             std::string text, MutationOperator op) {
  Question q;
  q.id = std::move(id);
  q.text = std::move(text);
  q.entry_point = parent.entry_point;
  q.origin = Origin::Mutation;
  q.parent_id = parent.id;
  q.root_id = parent.root_id;
  q.operator_applied = op;
  q.validate();
  return q;
}

void Question::validate() const {
  if (id.empty()) throw InvariantViolation("question id is empty");
  if (text.empty()) throw InvariantViolation("question '" + id + "' has empty text");
  if (origin == Origin::Dataset) {
    if (parent_id) throw InvariantViolation("dataset question '" + id + "' has a parent");
    if (root_id != id) throw InvariantViolation("dataset question '" + id + "' is not its own root");
  } else {
    if (!parent_id) throw InvariantViolation("mutant '" + id + "' has no parent");
    if (root_id.empty()) throw InvariantViolation("mutant '" + id + "' has no root");
  }
}

void Plan::validate() const {
  if (raw_text.empty()) throw InvariantViolation("plan raw_text is empty");
  if (!parse_degraded && requirements.empty() && logic_steps.empty()) {
    throw InvariantViolation("structured plan has neither requirements nor steps");
  }
}

void InterpretedPlan::validate() const {
  if (raw_text.empty()) throw InvariantViolation("interpreted plan raw_text is empty");
  for (auto s : kAllSections) {
    if (!sections.contains(s)) {
      throw InvariantViolation("interpreted plan lacks section " + std::string(to_string(s)));
    }
  }
}

void TrialBatch::validate() const {
  if (n == 0) throw InvariantViolation("batch n must be positive");
  if (trials.size() != n) {
    throw InvariantViolation("batch '" + question_id + "' has " +
                             std::to_string(trials.size()) + " trials, expected " +
                             std::to_string(n));
  }
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].index != i) {
      throw InvariantViolation("batch '" + question_id + "' trial indices have a gap at " +
                               std::to_string(i));
    }
    if (trials[i].queries_consumed < 1) {
      throw InvariantViolation("trial consumed no queries");
    }
    if (trials[i].wall_time_ms < 0) throw InvariantViolation("negative wall time");
  }
  if (overhead_queries < 0) throw InvariantViolation("negative overhead queries");
}

std::int64_t TrialBatch::trial_queries() const {
  std::int64_t total = 0;
  for (const auto& t : trials) total += t.queries_consumed;
  return total;
}

std::vector<int> TrialBatch::pass_vector() const {
  std::vector<int> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(pass_indicator(t.verdict));
  return out;
}

void FailureLabel::validate() const {
  if (pattern && category != FailureCategory::PlannerCoderGap) {
    throw InvariantViolation("error pattern requires category PlannerCoderGap");
  }
}

void FailureRecord::validate() const {
  question.validate();
  batch.validate();
  if (pass_count(batch) != 0) {
    throw InvariantViolation("failure record '" + question.id + "' has passing trials");
  }
  if (label) label->validate();
}

void TestSuite::validate() const {
  if (cases.empty()) throw InvariantViolation("test suite has no cases");
  const bool want_stdio = mode == SuiteMode::StdioBased;
  for (const auto& c : cases) {
    if (std::holds_alternative<StdioCase>(c) != want_stdio) {
      throw InvariantViolation("test case shape does not match suite mode");
    }
  }
}

std::size_t pass_count(const TrialBatch& batch) {
  return static_cast<std::size_t>(std::count_if(
      batch.trials.begin(), batch.trials.end(),
      [](const TrialResult& t) { return t.verdict == Verdict::Pass; }));
}

bool is_unsolved(const TrialBatch& batch) { return pass_count(batch) == 0; }

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const Question& q) {
  j = json::object();
  j["id"] = q.id;
  j["text"] = q.text;
  put_optional(j, "entry_point", q.entry_point);
  j["origin"] = to_string(q.origin);
  put_optional(j, "parent_id", q.parent_id);
  j["root_id"] = q.root_id;
  if (q.operator_applied) {
    j["operator_applied"] = to_string(*q.operator_applied);
  } else {
    j["operator_applied"] = nullptr;
  }
}

void from_json(const json& j, Question& q) {
  q.id = j.at("id").get<std::string>();
  q.text = j.at("text").get<std::string>();
  q.entry_point = optional_field<std::string>(j, "entry_point");
  q.origin = parse_enum(j.at("origin").get<std::string>(), kOriginNames, "origin");
  q.parent_id = optional_field<std::string>(j, "parent_id");
  q.root_id = j.at("root_id").get<std::string>();
  auto op = optional_field<std::string>(j, "operator_applied");
  q.operator_applied = op ? std::optional(parse_operator(*op)) : std::nullopt;
  q.validate();
}

void to_json(json& j, const Plan& p) {
  j = json{{"requirements", p.requirements},
           {"logic_steps", p.logic_steps},
           {"raw_text", p.raw_text},
           {"parse_degraded", p.parse_degraded}};
}

void from_json(const json& j, Plan& p) {
  p.requirements = j.at("requirements").get<std::vector<std::string>>();
  p.logic_steps = j.at("logic_steps").get<std::vector<std::string>>();
  p.raw_text = j.at("raw_text").get<std::string>();
  p.parse_degraded = j.value("parse_degraded", false);
}

void to_json(json& j, const InterpretedPlan& p) {
  json sections = json::object();
  for (const auto& [k, v] : p.sections) sections[std::string(to_string(k))] = v;
  j = json{{"base", p.base},
           {"sections", sections},
           {"raw_text", p.raw_text},
           {"parse_degraded", p.parse_degraded}};
}

void from_json(const json& j, InterpretedPlan& p) {
  p.base = j.at("base").get<Plan>();
  p.sections.clear();
  for (const auto& [k, v] : j.at("sections").items()) {
    p.sections[parse_section(k)] = v.get<std::string>();
  }
  p.raw_text = j.at("raw_text").get<std::string>();
  p.parse_degraded = j.value("parse_degraded", false);
}

void to_json(json& j, const CodeCandidate& c) {
  j = json{{"source", c.source},
           {"language_tag", c.language_tag},
           {"produced_by", to_string(c.produced_by)}};
}

void from_json(const json& j, CodeCandidate& c) {
  c.source = j.at("source").get<std::string>();
  c.language_tag = j.at("language_tag").get<std::string>();
  c.produced_by =
      parse_enum(j.at("produced_by").get<std::string>(), kProducerNames, "producer");
}

void to_json(json& j, const TrialResult& t) {
  j = json::object();
  j["index"] = t.index;
  j["verdict"] = to_string(t.verdict);
  j["plan"] = t.plan;
  put_optional(j, "interpreted_plan", t.interpreted_plan);
  j["code"] = t.code;
  j["wall_time_ms"] = t.wall_time_ms;
  j["queries_consumed"] = t.queries_consumed;
  j["trace"] = t.trace;
  j["prompt_question_id"] = t.prompt_question_id;
  j["note"] = t.note;
}

void from_json(const json& j, TrialResult& t) {
  t.index = j.at("index").get<std::size_t>();
  t.verdict = parse_verdict(j.at("verdict").get<std::string>());
  t.plan = j.at("plan").get<Plan>();
  t.interpreted_plan = optional_field<InterpretedPlan>(j, "interpreted_plan");
  t.code = j.at("code").get<CodeCandidate>();
  t.wall_time_ms = j.at("wall_time_ms").get<std::int64_t>();
  t.queries_consumed = j.at("queries_consumed").get<std::int64_t>();
  t.trace = j.value("trace", std::vector<std::string>{});
  t.prompt_question_id = j.value("prompt_question_id", std::string{});
  t.note = j.value("note", std::string{});
}

void to_json(json& j, const TrialBatch& b) {
  j = json{{"question_id", b.question_id},
           {"n", b.n},
           {"trials", b.trials},
           {"overhead_queries", b.overhead_queries}};
}

void from_json(const json& j, TrialBatch& b) {
  b.question_id = j.at("question_id").get<std::string>();
  b.n = j.at("n").get<std::size_t>();
  b.trials = j.at("trials").get<std::vector<TrialResult>>();
  b.overhead_queries = j.value("overhead_queries", std::int64_t{0});
  b.validate();
}

void to_json(json& j, const FailureLabel& l) {
  j = json::object();
  j["category"] = to_string(l.category);
  if (l.pattern) {
    j["pattern"] = to_string(*l.pattern);
  } else {
    j["pattern"] = nullptr;
  }
}

void from_json(const json& j, FailureLabel& l) {
  l.category =
      parse_enum(j.at("category").get<std::string>(), kCategoryNames, "failure category");
  auto p = optional_field<std::string>(j, "pattern");
  l.pattern = p ? std::optional(parse_enum(*p, kPatternNames, "error pattern"))
                : std::nullopt;
  l.validate();
}

void to_json(json& j, const FailureRecord& r) {
  j = json::object();
  j["schema_version"] = kSchemaVersion;
  j["question"] = r.question;
  j["batch"] = r.batch;
  put_optional(j, "label", r.label);
}

void from_json(const json& j, FailureRecord& r) {
  const int version = j.value("schema_version", kSchemaVersion);
  if (version != kSchemaVersion) {
    throw SchemaError("unsupported failure record schema_version " + std::to_string(version));
  }
  r.question = j.at("question").get<Question>();
  r.batch = j.at("batch").get<TrialBatch>();
  r.label = optional_field<FailureLabel>(j, "label");
  r.validate();
}

void to_json(json& j, const TestSuite& s) {
  j = json::object();
  put_optional(j, "setup_code", s.setup_code);
  json cases = json::array();
  for (const auto& c : s.cases) {
    if (const auto* a = std::get_if<std::string>(&c)) {
      cases.push_back(*a);
    } else {
      const auto& io = std::get<StdioCase>(c);
      cases.push_back(json{{"stdin_text", io.stdin_text},
                           {"expected_stdout", io.expected_stdout}});
    }
  }
  j["cases"] = std::move(cases);
  j["mode"] = to_string(s.mode);
}

void from_json(const json& j, TestSuite& s) {
  s.setup_code = optional_field<std::string>(j, "setup_code");
  s.mode = parse_suite_mode(j.at("mode").get<std::string>());
  s.cases.clear();
  for (const auto& c : j.at("cases")) {
    if (c.is_string()) {
      s.cases.emplace_back(c.get<std::string>());
    } else {
      s.cases.emplace_back(StdioCase{c.at("stdin_text").get<std::string>(),
                                     c.at("expected_stdout").get<std::string>()});
    }
  }
  s.validate();
}

}  // namespace agentfuzz
