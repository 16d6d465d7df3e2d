#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "somonitor/engine.hpp"
#include "somonitor/error.hpp"

namespace somonitor::api {

enum class Stage { Pillars, Clusters, Ranking, Evaluation, Story };
enum class RunStatus { Pending, Running, Done, Failed };
std::string_view to_string(Stage s);
std::string_view to_string(RunStatus s);

struct RunDescriptor {
  std::string run_id;
  Stage stage = Stage::Pillars;
  RunStatus status = RunStatus::Pending;
  double progress = 0.0;
  std::optional<std::string> error;
  std::string dataset_id;
  std::string request_digest;
  Json result;  // null until Done
};

void to_json(Json& j, const RunDescriptor& r);

// Background executor for long stages. One in-flight run per
// (dataset, stage); a Done run is reused for an identical request digest.
class RunManager {
 public:
  using ReportProgress = std::function<void(double)>;
  using Job = std::function<Json(const ReportProgress&)>;

  explicit RunManager(int workers);
  ~RunManager();
  RunManager(const RunManager&) = delete;
  RunManager& operator=(const RunManager&) = delete;

  struct Submission {
    RunDescriptor run;
    bool cached = false;
  };

  // Throws Conflict when a run for the same dataset and stage is in flight.
  Submission submit(Stage stage, const std::string& dataset_id, const std::string& digest, Job job);
  std::optional<RunDescriptor> get(const std::string& run_id) const;

 private:
  void worker_loop(std::stop_token stop);
  void update(const std::string& run_id, const std::function<void(RunDescriptor&)>& fn);

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<std::pair<std::string, Job>> queue_;
  std::map<std::string, RunDescriptor> runs_;
  std::map<std::pair<std::string, Stage>, std::string> in_flight_;
  std::map<std::string, std::string> done_by_digest_;
  std::uint64_t next_id_ = 1;
  std::vector<std::jthread> workers_;
};

// HTTP status for an error code: 400 validation, 404 unknown id, 409 conflict,
// 502 backend or model-output failure.
int http_status(Errc code);

// OpenAPI 3 description of the routes, served at GET /spec.
Json openapi_document();

class Server {
 public:
  explicit Server(Engine& engine, int workers = 2);
  ~Server();

  // Blocks until stop().
  bool listen(const std::string& host, int port);
  // Binds (port 0 picks a free port), serves on a background thread and returns the port.
  int start(const std::string& host, int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace somonitor::api
