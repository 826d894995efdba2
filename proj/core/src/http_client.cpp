#include "http_client.hpp"

#include <cstdlib>
#include <memory>
#include <mutex>

#include <curl/curl.h>

#include "agentfuzz/errors.hpp"
#include "agentfuzz/llm_gateway.hpp"

namespace agentfuzz::detail {

namespace {

std::once_flag g_curl_init;

size_t write_body(char* data, size_t size, size_t nmemb, void* user) {
  auto* out = static_cast<std::string*>(user);
  out->append(data, size * nmemb);
  return size * nmemb;
}

struct CurlDeleter {
  void operator()(CURL* c) const { curl_easy_cleanup(c); }
};
struct SlistDeleter {
  void operator()(curl_slist* l) const { curl_slist_free_all(l); }
};

}  // namespace

HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::string>& headers, double timeout_s) {
  std::call_once(g_curl_init, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });

  std::unique_ptr<CURL, CurlDeleter> curl(curl_easy_init());
  if (!curl) throw TransientProviderError("curl_easy_init failed");

  curl_slist* raw_list = curl_slist_append(nullptr, "Content-Type: application/json");
  for (const auto& h : headers) raw_list = curl_slist_append(raw_list, h.c_str());
  std::unique_ptr<curl_slist, SlistDeleter> list(raw_list);

  HttpResponse response;
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_HTTPHEADER, list.get());
  curl_easy_setopt(curl.get(), CURLOPT_POSTFIELDS, body.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_POSTFIELDSIZE, static_cast<long>(body.size()));
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, write_body);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &response.body);
  curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT_MS, static_cast<long>(timeout_s * 1000.0));
  curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);

  const CURLcode rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK) {
    throw TransientProviderError(std::string("HTTP transport error: ") +
                                 curl_easy_strerror(rc));
  }
  curl_easy_getinfo(curl.get(), CURLINFO_RESPONSE_CODE, &response.status);
  return response;
}

std::vector<std::string> auth_headers(const std::string& env_var) {
  if (env_var.empty()) return {};
  const char* key = std::getenv(env_var.c_str());
  if (key == nullptr || *key == '\0') {
    throw AuthError("credential environment variable " + env_var + " is not set");
  }
  return {std::string("Authorization: Bearer ") + key};
}

void raise_for_status(const HttpResponse& response, const std::string& what) {
  const long s = response.status;
  if (s >= 200 && s < 300) return;
  const std::string msg = what + " returned HTTP " + std::to_string(s);
  if (s == 401 || s == 403) throw AuthError(msg);
  if (s == 408 || s == 429 || s >= 500) throw TransientProviderError(msg);
  throw ContractError(msg);
}

}  // namespace agentfuzz::detail
