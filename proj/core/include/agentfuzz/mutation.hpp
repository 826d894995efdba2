#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/model.hpp"
#include "agentfuzz/random.hpp"

namespace agentfuzz {

/// Prompt for one operator. `tmpl` must contain {question} exactly once; it
/// may also use {sentence}, {sentence_index}, {next_sentence}.
struct MutationPromptTemplate {
  MutationOperator op = MutationOperator::Rephrase;
  std::string system;
  std::string tmpl;
  std::vector<std::pair<std::string, std::string>> few_shot_examples;

  void validate() const;
};

class MutationTemplates {
 public:
  /// Built-in prompts written from the operator descriptions.
  static MutationTemplates defaults();
  /// Reads `<dir>/<operator>.txt` (lower-case name) and optional
  /// `<dir>/<operator>.examples.json`; operators without a file keep the
  /// built-in prompt.
  static MutationTemplates load_dir(const std::filesystem::path& dir);

  const MutationPromptTemplate& get(MutationOperator op) const;
  void set(MutationPromptTemplate t);

 private:
  std::map<MutationOperator, MutationPromptTemplate> templates_;
};

struct MutationOutcome {
  Question mutated;
  MutationOperator op = MutationOperator::Rephrase;
  std::string mutator_model;
};

struct MutationOptions {
  int max_attempts = 3;
  // Treat sentence-count violations as failed attempts instead of warnings.
  bool strict_cardinality = false;
};

/// Uniform draw over the four operators (with replacement).
MutationOperator select_operator(Rng& rng);

/// Sentence segmentation on . ! ? followed by whitespace. ``` fenced blocks
/// and >>> example regions (up to the next blank line) are never split.
std::vector<std::string> sentence_split(std::string_view text);

/// Expected change in sentence count for an operator (Insert/Expand +1,
/// Condense -1, Rephrase 0).
int expected_sentence_delta(MutationOperator op);

/// Whether `op` can be applied to `text` (Condense needs two sentences).
bool operator_applicable(MutationOperator op, std::string_view text);

class MutationEngine {
 public:
  explicit MutationEngine(MutationTemplates templates = MutationTemplates::defaults(),
                          MutationOptions options = {});

  /// Throws OperatorInapplicable before any LLM call, or DegenerateMutation
  /// once every attempt returned empty or unchanged text.
  MutationOutcome mutate(const Question& seed, MutationOperator op, Gateway& gateway,
                         Rng& rng, const std::string& mutant_id) const;

  /// The chat request for one attempt; exposed for prompt inspection.
  ChatRequest build_request(const Question& seed, MutationOperator op, Rng& rng,
                            const std::string& model_id) const;

  const MutationOptions& options() const { return options_; }

 private:
  MutationTemplates templates_;
  MutationOptions options_;
};

/// Strips wrappers models commonly add around a rewritten question.
std::string clean_mutation_output(std::string_view raw);

}  // namespace agentfuzz
