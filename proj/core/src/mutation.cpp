#include "agentfuzz/mutation.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/text.hpp"

namespace agentfuzz {

namespace {

constexpr std::string_view kSystemPrompt =
    "You rewrite programming requirements without changing their meaning. "
    "Never add, drop or alter constraints, examples, names or numbers.";

constexpr std::string_view kReturnFormat =
    "Return only the complete rewritten requirement inside <question></question> tags.";

std::string default_template(MutationOperator op) {
  std::string body;
  switch (op) {
    case MutationOperator::Rephrase:
      body =
          "Rewrite sentence {sentence_index} of the requirement below using other words "
          "while maintaining the overall meaning. Keep all other sentences, code and "
          "examples unchanged.\nSentence to rewrite: {sentence}\n";
      break;
    case MutationOperator::Insert:
      body =
          "Append one additional sentence at the end of the requirement below. The new "
          "sentence must be based on the semantic content already present and must not "
          "introduce new constraints. Keep the existing text unchanged.\n";
      break;
    case MutationOperator::Expand:
      body =
          "Expand sentence {sentence_index} of the requirement below into two sentences "
          "by distributing its semantic content between them. Keep all other sentences "
          "unchanged.\nSentence to expand: {sentence}\n";
      break;
    case MutationOperator::Condense:
      body =
          "Condense sentences {sentence_index} and {next_sentence_index} of the "
          "requirement below into one sentence using appropriate conjunctions. Keep all "
          "other sentences unchanged.\nSentences to condense: {sentence} {next_sentence}\n";
      break;
  }
  return body + std::string(kReturnFormat) + "\n\n<question>\n{question}\n</question>";
}

bool is_atomic_segment(std::string_view s) {
  s = text::trim(s);
  return s.starts_with("```") || s.starts_with(">>>");
}

// Indices of segments an operator may target.
std::vector<std::size_t> eligible_targets(const std::vector<std::string>& sentences,
                                          MutationOperator op) {
  std::vector<std::size_t> out;
  if (op == MutationOperator::Condense) {
    for (std::size_t i = 0; i + 1 < sentences.size(); ++i) {
      if (!is_atomic_segment(sentences[i]) && !is_atomic_segment(sentences[i + 1])) {
        out.push_back(i);
      }
    }
    return out;
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (!is_atomic_segment(sentences[i])) out.push_back(i);
  }
  if (out.empty() && !sentences.empty()) out.push_back(0);
  return out;
}

std::string lower_name(MutationOperator op) { return text::to_lower(to_string(op)); }

}  // namespace

void MutationPromptTemplate::validate() const {
  if (text::count_occurrences(tmpl, "{question}") != 1) {
    throw TemplateError("mutation template for " + std::string(to_string(op)) +
                        " must contain {question} exactly once");
  }
}

MutationTemplates MutationTemplates::defaults() {
  MutationTemplates t;
  for (auto op : kAllOperators) {
    MutationPromptTemplate p;
    p.op = op;
    p.system = std::string(kSystemPrompt);
    p.tmpl = default_template(op);
    t.set(std::move(p));
  }
  return t;
}

MutationTemplates MutationTemplates::load_dir(const std::filesystem::path& dir) {
  auto t = defaults();
  for (auto op : kAllOperators) {
    const auto path = dir / (lower_name(op) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    MutationPromptTemplate p = t.get(op);
    p.tmpl = buf.str();
    const auto examples = dir / (lower_name(op) + ".examples.json");
    if (std::filesystem::exists(examples)) {
      std::ifstream ein(examples);
      const auto j = nlohmann::json::parse(ein);
      for (const auto& e : j) {
        p.few_shot_examples.emplace_back(e.at("input").get<std::string>(),
                                         e.at("output").get<std::string>());
      }
    }
    t.set(std::move(p));
  }
  return t;
}

const MutationPromptTemplate& MutationTemplates::get(MutationOperator op) const {
  return templates_.at(op);
}

void MutationTemplates::set(MutationPromptTemplate t) {
  t.validate();
  const auto op = t.op;
  templates_.insert_or_assign(op, std::move(t));
}

// ---------------------------------------------------------------------------

MutationOperator select_operator(Rng& rng) {
  return kAllOperators[uniform_index(rng, std::size(kAllOperators))];
}

std::vector<std::string> sentence_split(std::string_view input) {
  // Mark bytes that belong to atomic regions.
  std::vector<bool> atomic(input.size(), false);
  for (std::size_t i = 0; i < input.size();) {
    if (input.compare(i, 3, "```") == 0) {
      auto close = input.find("```", i + 3);
      const std::size_t end = close == std::string_view::npos ? input.size() : close + 3;
      for (std::size_t k = i; k < end; ++k) atomic[k] = true;
      i = end;
    } else if (input.compare(i, 3, ">>>") == 0) {
      auto blank = input.find("\n\n", i);
      const std::size_t end = blank == std::string_view::npos ? input.size() : blank;
      for (std::size_t k = i; k < end; ++k) atomic[k] = true;
      i = end;
    } else {
      ++i;
    }
  }

  std::vector<std::string> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    auto seg = text::trim(input.substr(start, end - start));
    if (!seg.empty()) out.emplace_back(seg);
    start = end;
  };
  for (std::size_t i = 0; i < input.size(); ++i) {
    // Atomic regions are segments of their own.
    if (i > 0 && atomic[i] != atomic[i - 1]) flush(i);
    const char c = input[i];
    if (atomic[i] || (c != '.' && c != '!' && c != '?')) continue;
    if (i + 1 < input.size() &&
        std::isspace(static_cast<unsigned char>(input[i + 1])) != 0) {
      flush(i + 1);
    }
  }
  flush(input.size());
  return out;
}

int expected_sentence_delta(MutationOperator op) {
  switch (op) {
    case MutationOperator::Insert:
    case MutationOperator::Expand:
      return 1;
    case MutationOperator::Condense:
      return -1;
    case MutationOperator::Rephrase:
      return 0;
  }
  return 0;
}

bool operator_applicable(MutationOperator op, std::string_view text) {
  if (text::trim(text).empty()) return false;
  if (op != MutationOperator::Condense) return true;
  return !eligible_targets(sentence_split(text), op).empty();
}

std::string clean_mutation_output(std::string_view raw) {
  std::string s = text::extract_tag(raw, "question");
  if (s.empty()) s = std::string(text::trim(raw));
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    s = std::string(text::trim(std::string_view(s).substr(1, s.size() - 2)));
  }
  return s;
}

// ---------------------------------------------------------------------------

MutationEngine::MutationEngine(MutationTemplates templates, MutationOptions options)
    : templates_(std::move(templates)), options_(options) {
  if (options_.max_attempts < 1) throw ContractError("max_attempts must be >= 1");
}

ChatRequest MutationEngine::build_request(const Question& seed, MutationOperator op, Rng& rng,
                                          const std::string& model_id) const {
  const auto sentences = sentence_split(seed.text);
  const auto targets = eligible_targets(sentences, op);
  if (targets.empty()) {
    throw OperatorInapplicable(std::string(to_string(op)) + " needs two consecutive sentences; '" +
                               seed.id + "' has " + std::to_string(sentences.size()));
  }
  std::map<std::string, std::string> values{{"question", seed.text}};
  if (op != MutationOperator::Insert) {
    const std::size_t idx = targets[uniform_index(rng, targets.size())];
    values["sentence_index"] = std::to_string(idx + 1);
    values["sentence"] = sentences[idx];
    if (op == MutationOperator::Condense) {
      values["next_sentence_index"] = std::to_string(idx + 2);
      values["next_sentence"] = sentences[idx + 1];
    }
  }

  const auto& t = templates_.get(op);
  ChatRequest req;
  req.role_tag = "mutator";
  req.model_id = model_id;
  req.temperature = 0.7;
  req.max_tokens = 2048;
  if (!t.system.empty()) req.messages.push_back({Speaker::System, t.system});
  for (const auto& [in, out] : t.few_shot_examples) {
    auto shot = values;
    shot["question"] = in;
    req.messages.push_back({Speaker::User, text::render(t.tmpl, shot)});
    req.messages.push_back({Speaker::Assistant, "<question>\n" + out + "\n</question>"});
  }
  req.messages.push_back({Speaker::User, text::render(t.tmpl, values)});
  return req;
}

MutationOutcome MutationEngine::mutate(const Question& seed, MutationOperator op,
                                       Gateway& gateway, Rng& rng,
                                       const std::string& mutant_id) const {
  if (text::trim(seed.text).empty()) throw ContractError("seed question text is empty");
  if (!operator_applicable(op, seed.text)) {
    throw OperatorInapplicable(std::string(to_string(op)) + " is not applicable to '" +
                               seed.id + "'");
  }
  const auto seed_count = static_cast<int>(sentence_split(seed.text).size());
  const auto seed_trimmed = text::trim(seed.text);

  std::string last_problem;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    const auto req = build_request(seed, op, rng, gateway.config().model_id);
    const auto reply = gateway.complete(req);
    std::string candidate = clean_mutation_output(reply.content);
    if (candidate.empty() || text::trim(candidate) == seed_trimmed) {
      last_problem = candidate.empty() ? "empty output" : "output identical to seed";
      continue;
    }
    const int got = static_cast<int>(sentence_split(candidate).size());
    const int want = seed_count + expected_sentence_delta(op);
    if (got != want) {
      last_problem = "sentence count " + std::to_string(got) + ", expected " +
                     std::to_string(want);
      if (options_.strict_cardinality) continue;
      spdlog::warn("mutation {} of '{}': {}", to_string(op), seed.id, last_problem);
    }
    MutationOutcome outcome{Question::mutant_of(seed, mutant_id, std::move(candidate), op), op,
                            gateway.config().model_id};
    return outcome;
  }
  throw DegenerateMutation(std::string(to_string(op)) + " on '" + seed.id + "' failed after " +
                           std::to_string(options_.max_attempts) + " attempts: " + last_problem);
}

}  // namespace agentfuzz
