#include "somonitor/remote_backend.hpp"

#include <cstdlib>

#include <httplib.h>

#include "somonitor/error.hpp"

namespace somonitor::llm {

std::optional<RemoteConfig> remote_config_from_env() {
  const char* base = std::getenv("SOMONITOR_LLM_BASE_URL");
  if (base == nullptr || *base == '\0') return std::nullopt;
  RemoteConfig cfg;
  cfg.base_url = base;
  if (const char* key = std::getenv("SOMONITOR_LLM_API_KEY")) cfg.api_key = key;
  return cfg;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidArgument, "base URL needs a scheme: " + config_.base_url);
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = config_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

Json RemoteBackend::post(const std::string& path, const Json& body) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Post(path_prefix_ + path, headers, body.dump(), "application/json");
  if (!res) throw TransientFailure("transport error: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) {
    throw Error(Errc::AuthFailure, "remote backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status == 408 || res->status == 429 || res->status >= 500) {
    throw TransientFailure("HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(Errc::BackendUnavailable, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    return Json::parse(res->body);
  } catch (const Json::parse_error&) {
    throw Error(Errc::BackendUnavailable, "remote backend returned non-JSON body");
  }
}

std::string RemoteBackend::complete(const CompletionRequest& request) {
  Json body = {{"model", config_.chat_model},
               {"messages", Json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                         {{"role", "user"}, {"content", request.user_prompt}}})},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output}};
  if (request.seed) body["seed"] = *request.seed;
  const Json reply = post("/chat/completions", body);
  try {
    const auto& choice = reply.at("choices").at(0);
    if (choice.value("finish_reason", std::string{}) == "length") {
      throw Error(Errc::ResponseTooLong, "completion truncated at max_tokens=" + std::to_string(request.max_output));
    }
    return choice.at("message").at("content").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(Errc::BackendUnavailable, std::string("malformed completion reply: ") + e.what());
  }
}

std::vector<std::vector<double>> RemoteBackend::embed(const std::vector<std::string>& texts) {
  const Json reply = post("/embeddings", {{"model", config_.embedding_model}, {"input", texts}});
  std::vector<std::vector<double>> rows(texts.size());
  try {
    for (const auto& item : reply.at("data")) {
      const auto index = item.at("index").get<std::size_t>();
      if (index >= rows.size()) throw Error(Errc::BackendUnavailable, "embedding index out of range");
      rows[index] = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::BackendUnavailable, std::string("malformed embedding reply: ") + e.what());
  }
  return rows;
}

void register_remote_backend(Gateway& gateway, const std::string& id, RemoteConfig config) {
  auto backend = std::make_shared<RemoteBackend>(std::move(config));
  gateway.register_backend(id, backend);
  gateway.register_embedder(id, backend);
}

}  // namespace somonitor::llm
