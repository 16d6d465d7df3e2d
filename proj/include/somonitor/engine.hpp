#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "somonitor/cluster.hpp"
#include "somonitor/eval.hpp"
#include "somonitor/gateway.hpp"
#include "somonitor/pillars.hpp"
#include "somonitor/rank.hpp"
#include "somonitor/settings.hpp"
#include "somonitor/store.hpp"
#include "somonitor/story.hpp"

namespace somonitor {

using Progress = std::function<void(double)>;

struct RankRequest {
  std::string dataset_id;
  std::string ranker = "score";  // "score" | "llm"
  std::optional<bool> grounded;
  std::optional<std::string> label;
  RankSettings settings;
};

// Artifact label a ranking is stored under: "score", "llm" or "llm-gd".
std::string default_rank_label(const RankRequest& request);

struct StoryResult {
  story::Story story;
  std::filesystem::path brief_path;
  std::string brief;
};

struct DemoResult {
  store::DatasetHandle corpus;
  store::DatasetHandle candidates;
  store::DatasetHandle history;
  store::DatasetStats stats;
  cluster::ClusterRun personas;
  cluster::ClusterRun challenges;
  std::map<std::string, rank::RankedList> rankings;
  eval::Report report;
  std::vector<story::OpportunityCell> opportunities;
  story::Selection selection;
  StoryResult story;
};

// Wires the store, gateway and backends from Settings and runs each stage.
class Engine {
 public:
  explicit Engine(Settings settings);

  const Settings& settings() const { return settings_; }
  store::Store& store() { return *store_; }
  llm::Gateway& gateway() { return *gateway_; }
  llm::PromptTemplate prompt(std::string_view template_id) const;

  store::DatasetHandle ingest(const std::filesystem::path& path, store::DatasetFormat format);
  pillars::PillarTable run_pillars(const std::string& dataset_id, const Progress& progress = {});
  cluster::ClusterRun run_clusters(const std::string& dataset_id, const cluster::ClusterConfig& config,
                                   const Progress& progress = {});
  rank::RankedList run_rank(const RankRequest& request);
  eval::Report run_evaluate(const std::string& dataset_id, const std::vector<std::string>& labels,
                            const eval::EvalConfig& config);
  std::vector<story::OpportunityCell> opportunities(const std::string& dataset_id, const std::string& own,
                                                    const std::string& competitor);
  StoryResult run_story(const std::string& persona_id, const std::string& challenge_id, const std::string& brand);

  // The full offline pipeline on the bundled synthetic corpus.
  DemoResult run_demo();

  // Card lookup by id "<dataset_id>:P<n>" / "<dataset_id>:C<n>"; NotFound otherwise.
  cluster::ClusterCard find_card(const std::string& card_id) const;

 private:
  Settings settings_;
  std::unique_ptr<store::Store> store_;
  std::unique_ptr<llm::Gateway> gateway_;
};

inline constexpr std::string_view kRankingsKind = "rankings";
inline constexpr std::string_view kEvaluationsKind = "evaluations";

}  // namespace somonitor
