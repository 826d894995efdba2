#include "agentfuzz/llm_gateway.hpp"

#include <cmath>
#include <regex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "agentfuzz/text.hpp"
#include "http_client.hpp"

namespace agentfuzz {

using nlohmann::json;

void ChatRequest::validate() const {
  if (messages.empty()) throw ContractError("chat request has no messages");
  for (const auto& m : messages) {
    if (m.content.empty()) throw ContractError("chat request has an empty message");
  }
  if (temperature < 0.0) throw ContractError("negative temperature");
  if (max_tokens <= 0) throw ContractError("max_tokens must be positive");
}

std::string_view ChatRequest::last_user_content() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->speaker == Speaker::User) return it->content;
  }
  return {};
}

void ProviderConfig::validate() const {
  if (max_retries < 0 || max_retries > 10) {
    throw ContractError("max_retries must be in [0, 10]");
  }
  if (timeout_s <= 0.0) throw ContractError("timeout_s must be positive");
  if (requests_per_minute <= 0) throw ContractError("requests_per_minute must be positive");
  if (backoff_base_s < 0.0) throw ContractError("backoff_base_s must be non-negative");
}

// ---------------------------------------------------------------------------

Clock::TimePoint SteadyClock::now() {
  return std::chrono::time_point_cast<Duration>(std::chrono::steady_clock::now());
}

void SteadyClock::sleep_for(Duration d) {
  if (d > Duration::zero()) std::this_thread::sleep_for(d);
}

Clock::TimePoint ManualClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_for(Duration d) {
  if (d <= Duration::zero()) return;
  std::lock_guard lock(mu_);
  now_ += d;
  slept_ += d;
}

Clock::Duration ManualClock::total_slept() const {
  std::lock_guard lock(mu_);
  return slept_;
}

// ---------------------------------------------------------------------------

ChatResponse HttpChatBackend::send(const ChatRequest& request, const ProviderConfig& config) {
  static constexpr const char* kSpeaker[] = {"system", "user", "assistant"};
  json body;
  body["model"] = request.model_id.empty() ? config.model_id : request.model_id;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back(
        {{"role", kSpeaker[static_cast<int>(m.speaker)]}, {"content", m.content}});
  }

  const auto headers = detail::auth_headers(config.api_key_env_var);
  const auto started = std::chrono::steady_clock::now();
  const auto http =
      detail::http_post_json(config.endpoint_url, body.dump(), headers, config.timeout_s);
  const auto elapsed = std::chrono::steady_clock::now() - started;
  detail::raise_for_status(http, "chat endpoint");

  json reply;
  try {
    reply = json::parse(http.body);
  } catch (const json::parse_error&) {
    throw TransientProviderError("chat endpoint returned non-JSON body");
  }

  ChatResponse out;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    out.content = content.is_string() ? content.get<std::string>() : std::string{};
  } catch (const json::exception&) {
    throw ContractError("chat endpoint response lacks choices[0].message.content");
  }
  if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
    out.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
    out.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
  }
  out.latency_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  return out;
}

// ---------------------------------------------------------------------------

bool ScriptRule::matches(const ChatRequest& request) const {
  if (role && *role != request.role_tag) return false;
  const auto content = request.last_user_content();
  if (contains && content.find(*contains) == std::string_view::npos) return false;
  if (not_contains && content.find(*not_contains) != std::string_view::npos) return false;
  if (regex) {
    const std::regex re(*regex);
    if (!std::regex_search(content.begin(), content.end(), re)) return false;
  }
  if (predicate && !predicate(request)) return false;
  return true;
}

std::string render_script_template(std::string_view tmpl, const ChatRequest& request) {
  const auto content = request.last_user_content();
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      out.push_back(tmpl[i++]);
      continue;
    }
    const auto close = tmpl.find('}', i);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    const auto key = tmpl.substr(i + 1, close - i - 1);
    if (key == "content") {
      out.append(content);
    } else if (key == "role") {
      out.append(request.role_tag);
    } else if (key == "hash") {
      out.append(text::hex8(text::fnv1a64(content)));
    } else if (key.starts_with("tag:")) {
      out.append(text::extract_tag(content, key.substr(4)));
    } else {
      out.append(tmpl.substr(i, close - i + 1));
    }
    i = close + 1;
  }
  return out;
}

ScriptedBackend::ScriptedBackend(ScriptedBehavior behavior) { script(std::move(behavior)); }

void ScriptedBackend::script(ScriptedBehavior behavior) {
  std::lock_guard lock(mu_);
  failures_left_.clear();
  for (const auto& r : behavior.rules) failures_left_.push_back(r.fail_times);
  behavior_ = std::move(behavior);
}

void script(ScriptedBackend& mock, ScriptedBehavior behavior) { mock.script(std::move(behavior)); }

ChatResponse ScriptedBackend::send(const ChatRequest& request, const ProviderConfig&) {
  ++calls_;
  std::string tmpl;
  {
    std::lock_guard lock(mu_);
    bool matched = false;
    for (std::size_t i = 0; i < behavior_.rules.size(); ++i) {
      const auto& rule = behavior_.rules[i];
      if (!rule.matches(request)) continue;
      if (failures_left_[i] > 0) {
        --failures_left_[i];
        throw TransientProviderError("scripted transient failure");
      }
      tmpl = rule.response_template;
      matched = true;
      break;
    }
    if (!matched) tmpl = behavior_.default_response;
  }
  ChatResponse out;
  out.content = render_script_template(tmpl, request);
  auto words = [](std::string_view s) {
    std::int64_t n = 0;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;) ++n;
    return n;
  };
  for (const auto& m : request.messages) out.prompt_tokens += words(m.content);
  out.completion_tokens = words(out.content);
  return out;
}

ScriptedBehavior scripted_behavior_from_json(const json& j) {
  ScriptedBehavior behavior;
  behavior.default_response = j.value("default_response", std::string("OK"));
  for (const auto& r : j.value("rules", json::array())) {
    ScriptRule rule;
    if (r.contains("role")) rule.role = r.at("role").get<std::string>();
    if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
    if (r.contains("not_contains")) rule.not_contains = r.at("not_contains").get<std::string>();
    if (r.contains("regex")) rule.regex = r.at("regex").get<std::string>();
    rule.response_template = r.at("response").get<std::string>();
    rule.fail_times = r.value("fail_times", 0);
    behavior.rules.push_back(std::move(rule));
  }
  return behavior;
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int requests_per_minute, std::shared_ptr<Clock> clock)
    : rpm_(requests_per_minute), clock_(std::move(clock)) {}

void RateLimiter::acquire() {
  constexpr auto kWindow = std::chrono::seconds(60);
  for (;;) {
    Clock::Duration wait{};
    {
      std::lock_guard lock(mu_);
      const auto now = clock_->now();
      while (!issued_.empty() && issued_.front() + kWindow <= now) issued_.pop_front();
      if (static_cast<int>(issued_.size()) < rpm_) {
        issued_.push_back(now);
        return;
      }
      wait = issued_.front() + kWindow - now;
    }
    clock_->sleep_for(wait);
  }
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, ProviderConfig config,
                 std::shared_ptr<Clock> clock)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      clock_(clock ? std::move(clock) : std::make_shared<SteadyClock>()),
      limiter_(config_.requests_per_minute, clock_) {
  config_.validate();
}

Clock::Duration Gateway::backoff_delay(int retry) {
  double jitter;
  {
    std::lock_guard lock(jitter_mu_);
    jitter = std::uniform_real_distribution<double>(0.8, 1.2)(jitter_rng_);
  }
  const double seconds = config_.backoff_base_s * std::pow(2.0, retry) * jitter;
  return std::chrono::duration_cast<Clock::Duration>(std::chrono::duration<double>(seconds));
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  ++calls_;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) clock_->sleep_for(backoff_delay(attempt - 1));
    limiter_.acquire();
    ++attempts_;
    try {
      auto response = backend_->send(request, config_);
      if (text::trim(response.content).empty()) {
        throw ContractError("backend returned an empty completion for role '" +
                            request.role_tag + "'");
      }
      return response;
    } catch (const TransientProviderError& e) {
      last_error = e.what();
      spdlog::debug("gateway: attempt {} for role '{}' failed: {}", attempt + 1,
                    request.role_tag, last_error);
    }
  }
  throw ProviderUnavailable("provider unavailable after " +
                            std::to_string(config_.max_retries + 1) +
                            " attempts: " + last_error);
}

ProviderConfig provider_config_from_json(const json& j) {
  ProviderConfig c;
  c.endpoint_url = j.value("endpoint_url", std::string{});
  c.api_key_env_var = j.value("api_key_env_var", std::string{});
  c.model_id = j.value("model_id", std::string{});
  c.max_retries = j.value("max_retries", 3);
  c.requests_per_minute = j.value("requests_per_minute", 60);
  c.timeout_s = j.value("timeout_s", 60.0);
  c.backoff_base_s = j.value("backoff_base_s", 1.0);
  c.validate();
  return c;
}

std::shared_ptr<Gateway> make_gateway(const json& provider) {
  const auto kind = provider.value("kind", std::string("http"));
  if (kind == "scripted") {
    ProviderConfig config;
    config.model_id = provider.value("model_id", std::string("scripted"));
    config.max_retries = provider.value("max_retries", 3);
    config.requests_per_minute = provider.value("requests_per_minute", 1'000'000);
    config.backoff_base_s = provider.value("backoff_base_s", 0.0);
    auto backend = std::make_shared<ScriptedBackend>(scripted_behavior_from_json(provider));
    return std::make_shared<Gateway>(std::move(backend), config);
  }
  if (kind == "http") {
    return std::make_shared<Gateway>(std::make_shared<HttpChatBackend>(),
                                     provider_config_from_json(provider));
  }
  throw ContractError("unknown provider kind '" + kind + "'");
}

}  // namespace agentfuzz
