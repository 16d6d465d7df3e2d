#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "somonitor/domain.hpp"
#include "somonitor/rank.hpp"

namespace somonitor::eval {

struct EvalConfig {
  int relevance_size = 5;  // R
  std::vector<int> cutoffs = {3, 5, 10};

  void validate() const;
};

// The R ads with highest CTR, ties by ascending id.
std::set<std::string> relevance_set(const std::vector<AdCreative>& ads, int r);

// |top-k ∩ relevant| / |relevant|; k past the end uses the whole list.
double recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, int k);

struct Ndcg {
  double value = 0.0;
  bool undefined_ideal = false;  // relevant set empty; value is 0
};

// Binary gains, log2(i + 1) discount, normalized by the all-relevant-first ideal.
Ndcg ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, int k);

struct MetricRow {
  std::string ranker;
  std::string brand;
  std::string objective;
  std::map<int, double> ndcg_at;
  std::map<int, double> recall_at;
};

struct Report {
  std::string dataset_id;
  EvalConfig config;
  std::vector<MetricRow> rows;
};

// One row per ranker per (brand, objective) group of the ads. Every ranking
// must cover exactly the ids of the ads (CandidateMismatch otherwise).
std::vector<MetricRow> evaluate(const std::map<std::string, rank::RankedList>& rankings,
                                const std::vector<AdCreative>& ads, const EvalConfig& config);

// Three decimals with trailing zeros removed: 0.6 -> "0.6", 0.5883 -> "0.588".
std::string format_metric(double v);

// Aligned columns: Ranker, nDCG@5, nDCG@10, Recall@3, Recall@5 (and a group
// column when rows span several groups).
std::string render_table(const std::vector<MetricRow>& rows);

void to_json(Json& j, const EvalConfig& c);
void from_json(const Json& j, EvalConfig& c);
void to_json(Json& j, const MetricRow& r);
void from_json(const Json& j, MetricRow& r);
void to_json(Json& j, const Report& r);

}  // namespace somonitor::eval
