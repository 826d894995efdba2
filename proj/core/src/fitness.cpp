#include "agentfuzz/fitness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/text.hpp"
#include "http_client.hpp"

namespace agentfuzz {

using nlohmann::json;

bool EmbeddingVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DimMismatch("embedding dims differ: " + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine of a zero vector is undefined");
  // Identical vectors are exactly similar; sqrt rounding would otherwise
  // leave a 1e-16 residue that flips the strict admission test.
  if (a.values == b.values) return 1.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double code_reward(const TrialBatch& original, const TrialBatch& mutated) {
  if (original.n == 0 || original.n != mutated.n || original.trials.size() != original.n ||
      mutated.trials.size() != mutated.n) {
    throw BatchSizeMismatch("code reward needs equal non-empty batches (" +
                            std::to_string(original.n) + " vs " + std::to_string(mutated.n) +
                            ")");
  }
  const auto diff = static_cast<long long>(pass_count(original)) -
                    static_cast<long long>(pass_count(mutated));
  return static_cast<double>(diff) / static_cast<double>(original.n);
}

// ---------------------------------------------------------------------------

std::vector<EmbeddingVector> HashEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    EmbeddingVector v{std::vector<double>(dim_, 0.0)};
    std::string token;
    bool any = false;
    auto flush = [&] {
      if (token.empty()) return;
      v.values[text::fnv1a64(token) % dim_] += 1.0;
      token.clear();
      any = true;
    };
    for (unsigned char c : t) {
      if (std::isalnum(c) != 0 || c == '_') {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    if (!any && !t.empty()) v.values[text::fnv1a64(t) % dim_] = 1.0;
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v.values) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::optional<std::size_t> HttpEmbedder::pinned_dim() const {
  std::lock_guard lock(mu_);
  return dim_;
}

std::vector<EmbeddingVector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  json body{{"model", config_.model_id}, {"input", texts}};
  json reply;
  try {
    const auto http = detail::http_post_json(config_.endpoint_url, body.dump(),
                                             detail::auth_headers(config_.api_key_env_var),
                                             config_.timeout_s);
    detail::raise_for_status(http, "embedding endpoint");
    reply = json::parse(http.body);
  } catch (const Error& e) {
    throw EmbedderUnavailable(e.what());
  } catch (const json::exception& e) {
    throw EmbedderUnavailable(std::string("embedding endpoint returned bad JSON: ") + e.what());
  }

  std::vector<EmbeddingVector> out;
  try {
    if (reply.contains("data")) {
      for (const auto& item : reply.at("data")) {
        out.push_back({item.at("embedding").get<std::vector<double>>()});
      }
    } else {
      for (const auto& item : reply.at("embeddings")) {
        out.push_back({item.get<std::vector<double>>()});
      }
    }
  } catch (const json::exception& e) {
    throw EmbedderUnavailable(std::string("embedding response has unexpected shape: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw EmbedderUnavailable("embedding endpoint returned " + std::to_string(out.size()) +
                              " vectors for " + std::to_string(texts.size()) + " texts");
  }
  std::lock_guard lock(mu_);
  for (const auto& v : out) {
    if (!dim_) dim_ = v.dim();
    if (v.dim() != *dim_) {
      throw DimMismatch("embedding dim " + std::to_string(v.dim()) + " differs from pinned " +
                        std::to_string(*dim_));
    }
  }
  return out;
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner) : inner_(std::move(inner)) {}

std::vector<EmbeddingVector> CachingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::string> missing;
  {
    std::lock_guard lock(mu_);
    for (const auto& t : texts) {
      if (cache_.contains(t) ||
          std::find(missing.begin(), missing.end(), t) != missing.end()) {
        continue;
      }
      missing.push_back(t);
    }
  }
  if (!missing.empty()) {
    auto vectors = inner_->embed(missing);
    backend_texts_ += static_cast<std::int64_t>(missing.size());
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < missing.size(); ++i) {
      cache_.try_emplace(missing[i], std::move(vectors[i]));
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::lock_guard lock(mu_);
  for (const auto& t : texts) out.push_back(cache_.at(t));
  cache_hits_ += static_cast<std::int64_t>(texts.size() - missing.size());
  return out;
}

// ---------------------------------------------------------------------------

std::string plan_embedding_text(const Plan& plan) {
  if (plan.parse_degraded || (plan.requirements.empty() && plan.logic_steps.empty())) {
    return plan.raw_text;
  }
  std::string s = "Requirements:\n";
  for (const auto& r : plan.requirements) s += "- " + r + "\n";
  s += "Steps:\n";
  for (const auto& l : plan.logic_steps) s += "- " + l + "\n";
  return s;
}

double plan_reward(const std::vector<Plan>& original_plans, const std::vector<Plan>& mutated_plans,
                   Embedder& embedder) {
  if (original_plans.size() != mutated_plans.size() || original_plans.empty()) {
    throw LengthMismatch("plan lists differ in length: " + std::to_string(original_plans.size()) +
                         " vs " + std::to_string(mutated_plans.size()));
  }
  const std::size_t n = original_plans.size();
  std::vector<std::string> texts;
  texts.reserve(2 * n);
  for (const auto& p : original_plans) texts.push_back(plan_embedding_text(p));
  for (const auto& p : mutated_plans) texts.push_back(plan_embedding_text(p));
  const auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw EmbedderUnavailable("embedder returned the wrong number of vectors");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sim = std::clamp(cosine_similarity(vectors[n + i], vectors[i]), 0.0, 1.0);
    sum += 1.0 - sim;
  }
  return sum / static_cast<double>(n);
}

std::vector<Plan> plans_of(const TrialBatch& batch) {
  std::vector<Plan> out;
  out.reserve(batch.trials.size());
  for (const auto& t : batch.trials) out.push_back(t.plan);
  return out;
}

FitnessBreakdown fitness(const TrialBatch& original, const TrialBatch& mutated,
                         Embedder& embedder) {
  FitnessBreakdown f;
  f.code_reward = code_reward(original, mutated);
  f.plan_reward = plan_reward(plans_of(original), plans_of(mutated), embedder);
  f.total = f.code_reward + f.plan_reward;
  return f;
}

}  // namespace agentfuzz
