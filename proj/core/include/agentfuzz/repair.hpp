#pragma once

// Repair layer: multi-prompt generation over the input question plus a
// monitor agent that interprets the plan before coding and checks the code
// once afterwards.

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/model.hpp"
#include "agentfuzz/mutation.hpp"
#include "agentfuzz/pipeline.hpp"
#include "agentfuzz/random.hpp"

namespace agentfuzz {

/// k+1 slots summing to n: floor(n/(k+1)) each, remainder one per slot
/// starting at the original. Throws InsufficientTrials when n < k+1.
std::vector<std::size_t> allocate_trials(std::size_t n, std::size_t k);

struct VariantSet {
  Question original;
  std::vector<Question> variants;
  // allocation[0] is the original's share.
  std::vector<std::size_t> allocation;
  // Gateway calls spent producing the variants.
  std::int64_t generation_queries = 0;

  void validate(std::size_t n) const;
};

/// k mutants of `question` made with the MAS backend. A variant whose
/// mutation degenerates is dropped and the allocation recomputed.
VariantSet generate_variants(const Question& question, std::size_t k, std::size_t n,
                             const MutationEngine& engine, Gateway& gateway, Rng& rng);

struct MonitorTemplates {
  std::string interpret_system;
  // Placeholders: {question}, {plan}, {examples}.
  std::string interpret_template;
  std::vector<std::string> interpret_examples;
  std::string check_system;
  // Placeholders: {plan}, {interpretation}, {code}.
  std::string check_template;

  static MonitorTemplates defaults();
  /// Reads interpret.txt, interpret.examples.txt (examples separated by a
  /// line holding only "---") and check.txt; missing files keep defaults.
  static MonitorTemplates load_dir(const std::filesystem::path& dir);
};

/// Header text for a section, e.g. "Core Concepts".
std::string_view section_heading(InterpretSection s);

/// Splits monitor output into the five sections. Missing sections become
/// "none noted" and flag the result parse_degraded.
InterpretedPlan parse_interpretation(const Plan& base, std::string_view raw);

/// "ALIGNED", or "MISALIGNED" followed by "- Section: description" lines.
/// Anything else is fail-open: aligned with unparseable set.
AlignmentVerdict parse_alignment(std::string_view raw);

class Monitor {
 public:
  explicit Monitor(MonitorTemplates templates = MonitorTemplates::defaults());

  /// One few-shot monitor call; augments the plan with the five sections.
  InterpretedPlan interpret_plan(const Plan& plan, const Question& question,
                                 AgentSession& session) const;
  /// One zero-shot monitor call.
  AlignmentVerdict check_code(const CodeCandidate& code, const InterpretedPlan* interpreted,
                              const Plan& plan, AgentSession& session) const;

 private:
  MonitorTemplates templates_;
};

/// Hooks wiring the monitor between planner and coder.
PipelineHooks make_repair_hooks(std::shared_ptr<const Monitor> monitor);

struct RepairOptions {
  std::size_t k = 2;
  bool monitor = true;
  std::size_t workers = 1;
};

struct RepairContext {
  Gateway& gateway;
  const MasAdapter& adapter;
  CodeEvaluator& evaluator;
  const TestSuite& suite;
  const MutationEngine& engine;
  std::shared_ptr<const Monitor> monitor;
};

/// n trials split over the original and its variants, all attributed to the
/// original question. Variant calls are charged to overhead_queries.
TrialBatch run_repaired_batch(const Question& question, std::size_t n, const RepairContext& ctx,
                              const RepairOptions& options, Rng& rng);

}  // namespace agentfuzz
