#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "agentfuzz/llm_gateway.hpp"
#include "agentfuzz/model.hpp"

namespace agentfuzz {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool is_zero() const;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// (sum c_i - sum c^_i) / n over the two batches' pass indicators.
double code_reward(const TrialBatch& original, const TrialBatch& mutated);

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// One vector per input text, all of the same dimension.
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

/// Offline embedder: hashed bag of lower-cased word tokens, L2-normalised.
/// Identical texts map to identical vectors; disjoint vocabularies map to
/// (near-)orthogonal ones.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256) : dim_(dim) {}
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
};

/// HTTP embedding endpoint: POST {"model", "input": [texts]}, accepts either
/// {"data": [{"embedding": [...]}, ...]} or {"embeddings": [[...], ...]}.
/// The dimension of the first response is pinned for the embedder's lifetime.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(ProviderConfig config);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::optional<std::size_t> pinned_dim() const;

 private:
  ProviderConfig config_;
  mutable std::mutex mu_;
  std::optional<std::size_t> dim_;
};

/// Synchronized text -> vector cache in front of another embedder.
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(std::shared_ptr<Embedder> inner);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

  std::int64_t backend_texts() const { return backend_texts_.load(); }
  std::int64_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::shared_ptr<Embedder> inner_;
  std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
  std::atomic<std::int64_t> backend_texts_{0};
  std::atomic<std::int64_t> cache_hits_{0};
};

/// Text that represents a plan for embedding: the structured R/L rendering,
/// or raw_text when the structured parse failed.
std::string plan_embedding_text(const Plan& plan);

/// (1/n) sum (1 - clamp(cos(p^_i, p_i), 0, 1)), pairing plans by index.
double plan_reward(const std::vector<Plan>& original_plans, const std::vector<Plan>& mutated_plans,
                   Embedder& embedder);

struct FitnessBreakdown {
  double code_reward = 0.0;
  double plan_reward = 0.0;
  double total = 0.0;

  /// Seed-pool admission predicate (strictly positive).
  bool admits() const { return total > 0.0; }
};

FitnessBreakdown fitness(const TrialBatch& original, const TrialBatch& mutated,
                         Embedder& embedder);

std::vector<Plan> plans_of(const TrialBatch& batch);

}  // namespace agentfuzz
