#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agentfuzz/errors.hpp"

namespace agentfuzz {

enum class Speaker { System, User, Assistant };

struct ChatMessage {
  Speaker speaker = Speaker::User;
  std::string content;
};

struct ChatRequest {
  std::string role_tag;  // planner / coder / tester / monitor / mutator
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string model_id;

  void validate() const;
  /// Content of the last user message, or empty when there is none.
  std::string_view last_user_content() const;
};

struct ChatResponse {
  std::string content;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t latency_ms = 0;
};

struct ProviderConfig {
  std::string endpoint_url;
  std::string api_key_env_var;
  std::string model_id;
  int max_retries = 3;
  int requests_per_minute = 60;
  double timeout_s = 60.0;
  // Backoff schedule: base * 2^attempt, jittered by +-20%.
  double backoff_base_s = 1.0;

  void validate() const;
};

/// Raised by backends for failures that are worth retrying
/// (network errors, 429, 5xx, scripted failures).
class TransientProviderError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Clocks. The gateway sleeps only through its clock so retry and rate-limit
// behaviour can be exercised on simulated time.

class Clock {
 public:
  using Duration = std::chrono::nanoseconds;
  using TimePoint = std::chrono::time_point<std::chrono::steady_clock, Duration>;

  virtual ~Clock() = default;
  virtual TimePoint now() = 0;
  virtual void sleep_for(Duration d) = 0;
};

class SteadyClock final : public Clock {
 public:
  TimePoint now() override;
  void sleep_for(Duration d) override;
};

/// Simulated clock: sleeping advances time instantly.
class ManualClock final : public Clock {
 public:
  TimePoint now() override;
  void sleep_for(Duration d) override;
  void advance(Duration d) { sleep_for(d); }
  Duration total_slept() const;

 private:
  mutable std::mutex mu_;
  TimePoint now_{};
  Duration slept_{};
};

// ---------------------------------------------------------------------------
// Backends

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// One attempt. Throws TransientProviderError, AuthError or ContractError.
  virtual ChatResponse send(const ChatRequest& request, const ProviderConfig& config) = 0;
};

/// OpenAI-style chat-completions endpoint over HTTP(S).
class HttpChatBackend final : public ChatBackend {
 public:
  ChatResponse send(const ChatRequest& request, const ProviderConfig& config) override;
};

struct ScriptRule {
  // All present conditions must hold. `contains`/`regex` test the last user
  // message; `predicate` sees the whole request.
  std::optional<std::string> role;
  std::optional<std::string> contains;
  std::optional<std::string> not_contains;
  std::optional<std::string> regex;
  std::function<bool(const ChatRequest&)> predicate;

  // Placeholders: {content} last user message, {role}, {hash} stable 8-hex
  // digest of the last user message, {tag:NAME} text inside <NAME>...</NAME>.
  std::string response_template;
  int fail_times = 0;

  bool matches(const ChatRequest& request) const;
};

struct ScriptedBehavior {
  std::vector<ScriptRule> rules;
  std::string default_response = "OK";
};

ScriptedBehavior scripted_behavior_from_json(const nlohmann::json& j);

/// Expands a response template against a request (see ScriptRule).
std::string render_script_template(std::string_view tmpl, const ChatRequest& request);

/// Deterministic offline backend. First matching rule wins.
class ScriptedBackend final : public ChatBackend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(ScriptedBehavior behavior);

  /// Replaces the behaviour and resets failure counters.
  void script(ScriptedBehavior behavior);

  ChatResponse send(const ChatRequest& request, const ProviderConfig& config) override;

  std::int64_t calls() const { return calls_.load(); }

 private:
  std::mutex mu_;
  ScriptedBehavior behavior_;
  std::vector<int> failures_left_;
  std::atomic<std::int64_t> calls_{0};
};

void script(ScriptedBackend& mock, ScriptedBehavior behavior);

// ---------------------------------------------------------------------------

/// Sliding 60-second window limiter, internally synchronized.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock);
  void acquire();

 private:
  int rpm_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<Clock::TimePoint> issued_;
};

/// One gateway per backend LLM, shared by every agent role of a MAS.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, ProviderConfig config,
          std::shared_ptr<Clock> clock = nullptr);

  /// Blocking request/response with retries and rate limiting.
  ChatResponse complete(const ChatRequest& request);

  const ProviderConfig& config() const { return config_; }
  std::int64_t completed_calls() const { return calls_.load(); }
  std::int64_t attempts() const { return attempts_.load(); }

 private:
  Clock::Duration backoff_delay(int retry);

  std::shared_ptr<ChatBackend> backend_;
  ProviderConfig config_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;
  std::mutex jitter_mu_;
  std::mt19937 jitter_rng_{0x5eed};
  std::atomic<std::int64_t> calls_{0};
  std::atomic<std::int64_t> attempts_{0};
};

/// Builds a gateway from a provider description:
///   {"kind": "scripted", "rules": [...], "default_response": "..."}
///   {"kind": "http", "endpoint_url": ..., "api_key_env_var": ..., "model_id": ...}
std::shared_ptr<Gateway> make_gateway(const nlohmann::json& provider);

ProviderConfig provider_config_from_json(const nlohmann::json& j);

}  // namespace agentfuzz
