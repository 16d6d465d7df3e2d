#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "somonitor/domain.hpp"

namespace somonitor::store {
class Store;
}

namespace somonitor::llm {

using Bindings = std::map<std::string, std::string>;

// Placeholders are {name}; "{{" and "}}" render as literal braces.
struct PromptTemplate {
  std::string template_id;
  std::string body;
  std::set<std::string> required_bindings;

  // Declares every placeholder found in the body as required.
  static PromptTemplate from_body(std::string template_id, std::string body);
};

std::set<std::string> placeholders(std::string_view body);
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

inline constexpr double kRankingTemperature = 0.1;

struct CompletionRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = kRankingTemperature;
  std::optional<std::int64_t> seed;
  int max_output = 1024;
  std::string backend_id;
  // Not sent to remote backends; lets offline backends key on structure.
  std::string template_id;
  Bindings bindings;
};

std::string request_digest(const CompletionRequest& request);

struct CompletionResult {
  std::string text;
  std::string backend_id;
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;
  std::string request_digest;
};

enum class NormPolicy { L2Normalized, Raw };

struct EmbeddingMatrix {
  Eigen::MatrixXd vectors;  // n x d, row i embeds input i
  NormPolicy norm_policy = NormPolicy::L2Normalized;
  std::vector<std::size_t> zero_rows;

  Eigen::Index rows() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Thrown by backends for failures worth retrying (timeouts, 429, 5xx).
class TransientFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

class CallbackBackend : public CompletionBackend {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit CallbackBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const CompletionRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

// FIFO-fair counting semaphore.
class FairSemaphore {
 public:
  explicit FairSemaphore(int permits) : permits_(permits) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int permits_;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
};

struct GatewayConfig {
  std::string default_backend = "offline";
  double temperature = kRankingTemperature;
  int max_parallel = 4;
  int retry_limit = 3;
  std::chrono::milliseconds base_backoff{200};
};

class Gateway {
 public:
  explicit Gateway(GatewayConfig config = {}, store::Store* audit_store = nullptr);

  const GatewayConfig& config() const { return config_; }

  void register_backend(const std::string& id, std::shared_ptr<CompletionBackend> backend);
  void register_embedder(const std::string& id, std::shared_ptr<EmbeddingBackend> backend);
  bool has_backend(const std::string& id) const;
  bool has_embedder(const std::string& id) const;

  // Retries TransientFailure up to retry_limit extra attempts with exponential
  // backoff; the concurrency slot is released while backing off.
  CompletionResult complete(CompletionRequest request);

  EmbeddingMatrix embed(const std::vector<std::string>& texts, const std::string& backend_id,
                        NormPolicy policy = NormPolicy::L2Normalized);

 private:
  struct Slot {
    std::shared_ptr<CompletionBackend> backend;
    std::unique_ptr<FairSemaphore> gate;
  };

  GatewayConfig config_;
  store::Store* audit_;
  mutable std::mutex mu_;
  std::map<std::string, Slot> backends_;
  std::map<std::string, std::shared_ptr<EmbeddingBackend>> embedders_;
};

}  // namespace somonitor::llm
