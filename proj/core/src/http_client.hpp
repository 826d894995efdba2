#pragma once

// Minimal libcurl wrapper shared by the chat and embedding backends.

#include <string>
#include <vector>

namespace agentfuzz::detail {

struct HttpResponse {
  long status = 0;
  std::string body;
};

/// POSTs a JSON body. Throws TransientProviderError on transport failure.
HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::string>& headers, double timeout_s);

/// Reads the credential named by `env_var`; empty name means no auth header.
/// Throws AuthError when a name is given but the variable is unset.
std::vector<std::string> auth_headers(const std::string& env_var);

/// Maps an HTTP status to the gateway error classes; returns for 2xx.
void raise_for_status(const HttpResponse& response, const std::string& what);

}  // namespace agentfuzz::detail
