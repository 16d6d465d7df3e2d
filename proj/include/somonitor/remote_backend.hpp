#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "somonitor/gateway.hpp"

namespace somonitor::llm {

struct RemoteConfig {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string api_key;
  std::string chat_model = "gpt-4o";
  std::string embedding_model = "text-embedding-ada-002";
  std::chrono::seconds timeout{60};
};

// Reads SOMONITOR_LLM_BASE_URL and SOMONITOR_LLM_API_KEY; nullopt when the base URL is unset.
std::optional<RemoteConfig> remote_config_from_env();

// Chat-completion and embedding client for OpenAI-compatible HTTP JSON APIs:
//   POST {base}/chat/completions  {model, messages, temperature, seed?, max_tokens}
//   POST {base}/embeddings        {model, input}
// 401/403 map to AuthFailure; 408, 429, 5xx and transport errors are retryable.
class RemoteBackend : public CompletionBackend, public EmbeddingBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  std::string complete(const CompletionRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  Json post(const std::string& path, const Json& body);

  RemoteConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

void register_remote_backend(Gateway& gateway, const std::string& id, RemoteConfig config);

}  // namespace somonitor::llm
