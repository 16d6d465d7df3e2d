#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "somonitor/cluster.hpp"
#include "somonitor/eval.hpp"
#include "somonitor/gateway.hpp"
#include "somonitor/story.hpp"

namespace somonitor {

struct RankSettings {
  ScoreLayer layer;
  std::string classifier = "lexical-baseline";
  int ensemble_runs = 5;
  bool grounded = false;
  std::int64_t seed_base = 0;
  double temperature = llm::kRankingTemperature;
  std::string grounding_dataset_id;
};

struct Settings {
  std::filesystem::path store_dir = "somonitor-store";
  std::filesystem::path templates_dir;  // empty: built-in templates
  llm::GatewayConfig gateway;
  std::string backend_id = "offline";
  std::string embed_backend_id = "offline";
  std::filesystem::path scripted_fixtures;  // registers backend "scripted" when set

  double pillars_max_failure_rate = 0.2;
  int pillars_parallelism = 4;

  cluster::ClusterConfig cluster;
  RankSettings rank;
  eval::EvalConfig eval;

  story::SelectionPolicy story_policy = story::SelectionPolicy::MaxGap;
  std::string own_brand;
  std::string competitor_brand;

  std::string api_host = "127.0.0.1";
  int api_port = 8787;
  int api_workers = 2;
};

// Applies one "section.key" = value pair, e.g. ("rank.alpha", "2").
// Throws InvalidArgument for unknown keys or malformed values.
void apply_setting(Settings& s, std::string_view key, std::string_view value);

// Key/value document with optional [section] headers:
//
//   store = "./store"
//   [cluster]
//   k0 = 3
//   [eval]
//   cutoffs = [3, 5, 10]
//
// '#' starts a comment; strings may be quoted. Unknown keys are errors.
void apply_config_text(Settings& s, std::string_view text);
void apply_config_file(Settings& s, const std::filesystem::path& path);

}  // namespace somonitor
