#pragma once

// Shared domain types. Everything here is an immutable-by-convention value
// type: construct, validate, then pass by const reference or copy freely
// between worker threads.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace agentfuzz {

/// Version stamped into every persisted JSON document.
inline constexpr int kSchemaVersion = 1;

enum class MutationOperator { Rephrase, Insert, Expand, Condense };
inline constexpr MutationOperator kAllOperators[] = {
    MutationOperator::Rephrase, MutationOperator::Insert,
    MutationOperator::Expand, MutationOperator::Condense};

enum class Origin { Dataset, Mutation };

struct Question {
  std::string id;
  std::string text;
  std::optional<std::string> entry_point;
  Origin origin = Origin::Dataset;
  std::optional<std::string> parent_id;
  std::string root_id;
  std::optional<MutationOperator> operator_applied;

  static Question from_dataset(std::string id, std::string text,
                               std::optional<std::string> entry_point = {});
  /// Child of `parent` in the mutation tree; inherits root and entry point.
  static Question mutant_of(const Question& parent, std::string id,
                            std::string text, MutationOperator op);

  /// Throws InvariantViolation when origin/lineage fields disagree.
  void validate() const;

  friend bool operator==(const Question&, const Question&) = default;
};

/// Planner output: requirement set plus coding-logic steps, raw text kept.
struct Plan {
  std::vector<std::string> requirements;
  std::vector<std::string> logic_steps;
  std::string raw_text;
  // Set when the structured parse failed and only raw_text is meaningful.
  bool parse_degraded = false;

  void validate() const;
  friend bool operator==(const Plan&, const Plan&) = default;
};

enum class InterpretSection {
  CoreConcepts,
  EdgeCases,
  ComplexLogic,
  RelationalPhrases,
  ConditionJudgments
};
inline constexpr InterpretSection kAllSections[] = {
    InterpretSection::CoreConcepts, InterpretSection::EdgeCases,
    InterpretSection::ComplexLogic, InterpretSection::RelationalPhrases,
    InterpretSection::ConditionJudgments};

inline constexpr std::string_view kNoneNoted = "none noted";

/// A plan enriched by the monitor with per-error-pattern clarifications.
struct InterpretedPlan {
  Plan base;
  std::map<InterpretSection, std::string> sections;
  std::string raw_text;
  bool parse_degraded = false;

  void validate() const;
  friend bool operator==(const InterpretedPlan&,
                         const InterpretedPlan&) = default;
};

enum class CodeProducer { Coder, CoderAfterRefinement, CoderAfterMonitorCheck };

struct CodeCandidate {
  std::string source;
  std::string language_tag = "python";
  CodeProducer produced_by = CodeProducer::Coder;

  friend bool operator==(const CodeCandidate&, const CodeCandidate&) = default;
};

enum class Verdict { Pass, Fail, Timeout, RuntimeError, SandboxError };

/// Only Pass counts as 1.
constexpr int pass_indicator(Verdict v) { return v == Verdict::Pass ? 1 : 0; }

struct TrialResult {
  std::size_t index = 0;
  Verdict verdict = Verdict::Fail;
  Plan plan;
  std::optional<InterpretedPlan> interpreted_plan;
  CodeCandidate code;
  std::int64_t wall_time_ms = 0;
  std::int64_t queries_consumed = 1;
  // Ordered stage names (planner, monitor-interpret, coder, ...).
  std::vector<std::string> trace;
  // Question whose text was actually prompted; differs from the batch's
  // question for multi-prompt variants.
  std::string prompt_question_id;
  std::string note;

  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

struct TrialBatch {
  std::string question_id;
  std::size_t n = 0;
  std::vector<TrialResult> trials;
  // LLM calls made on behalf of the whole batch (variant generation).
  std::int64_t overhead_queries = 0;

  void validate() const;
  std::int64_t trial_queries() const;
  std::int64_t total_queries() const { return trial_queries() + overhead_queries; }
  std::vector<int> pass_vector() const;

  friend bool operator==(const TrialBatch&, const TrialBatch&) = default;
};

enum class FailureCategory { PlannerCoderGap, PlanLogicError, Invalid };
enum class ErrorPattern {
  EP1_CoreConcepts,
  EP2_EdgeCases,
  EP3_ComplexLogic,
  EP4_RelationalPhrases,
  EP5_ConditionJudgments
};

struct FailureLabel {
  FailureCategory category = FailureCategory::PlannerCoderGap;
  std::optional<ErrorPattern> pattern;

  void validate() const;
  friend bool operator==(const FailureLabel&, const FailureLabel&) = default;
};

struct FailureRecord {
  Question question;
  TrialBatch batch;
  std::optional<FailureLabel> label;

  void validate() const;
  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

// ---------------------------------------------------------------------------
// Dataset ground truth, shared by the sandbox, pipeline and campaign.

enum class SuiteMode { AssertionBased, StdioBased };

struct StdioCase {
  std::string stdin_text;
  std::string expected_stdout;
  friend bool operator==(const StdioCase&, const StdioCase&) = default;
};

using TestCase = std::variant<std::string, StdioCase>;

struct TestSuite {
  std::optional<std::string> setup_code;
  std::vector<TestCase> cases;
  SuiteMode mode = SuiteMode::AssertionBased;

  void validate() const;
  friend bool operator==(const TestSuite&, const TestSuite&) = default;
};

// ---------------------------------------------------------------------------
// Verdict arithmetic.

std::size_t pass_count(const TrialBatch& batch);
bool is_unsolved(const TrialBatch& batch);

// ---------------------------------------------------------------------------
// Names used in JSON and reports.

std::string_view to_string(MutationOperator op);
std::string_view to_string(Origin origin);
std::string_view to_string(CodeProducer producer);
std::string_view to_string(Verdict verdict);
std::string_view to_string(InterpretSection section);
std::string_view to_string(FailureCategory category);
std::string_view to_string(ErrorPattern pattern);
std::string_view to_string(SuiteMode mode);

MutationOperator parse_operator(std::string_view name);
Verdict parse_verdict(std::string_view name);
InterpretSection parse_section(std::string_view name);
SuiteMode parse_suite_mode(std::string_view name);

// nlohmann ADL hooks; field names follow the domain types exactly.
void to_json(nlohmann::json& j, const Question& q);
void from_json(const nlohmann::json& j, Question& q);
void to_json(nlohmann::json& j, const Plan& p);
void from_json(const nlohmann::json& j, Plan& p);
void to_json(nlohmann::json& j, const InterpretedPlan& p);
void from_json(const nlohmann::json& j, InterpretedPlan& p);
void to_json(nlohmann::json& j, const CodeCandidate& c);
void from_json(const nlohmann::json& j, CodeCandidate& c);
void to_json(nlohmann::json& j, const TrialResult& t);
void from_json(const nlohmann::json& j, TrialResult& t);
void to_json(nlohmann::json& j, const TrialBatch& b);
void from_json(const nlohmann::json& j, TrialBatch& b);
void to_json(nlohmann::json& j, const FailureLabel& l);
void from_json(const nlohmann::json& j, FailureLabel& l);
void to_json(nlohmann::json& j, const FailureRecord& r);
void from_json(const nlohmann::json& j, FailureRecord& r);
void to_json(nlohmann::json& j, const TestSuite& s);
void from_json(const nlohmann::json& j, TestSuite& s);

}  // namespace agentfuzz
