#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "somonitor/domain.hpp"
#include "somonitor/gateway.hpp"

namespace somonitor::rank {

enum class RankerKind { ScoreLayer, LlmSingle, LlmEnsemble };
std::string_view to_string(RankerKind k);
RankerKind parse_ranker_kind(std::string_view s);

struct RankedList {
  std::string dataset_id;
  std::vector<std::string> candidate_ids;
  std::optional<std::vector<double>> scores;  // non-increasing when present
  RankerKind ranker = RankerKind::ScoreLayer;
  bool grounded = false;
  std::vector<std::string> run_ids;
  // Per-run orderings kept for audit (LLM rankers only).
  std::vector<std::vector<std::string>> run_orderings;
  // More than half of the ensemble runs failed; the list comes from the survivors.
  bool degraded = false;
  std::vector<std::string> failures;
};

inline constexpr std::size_t kExcerptChars = 500;

struct RankerConfig {
  double temperature = llm::kRankingTemperature;
  int ensemble_runs = 5;
  int grounding_exemplars = 3;  // 0 or 3
  std::string backend_id = "offline";
  std::int64_t seed_base = 0;
  std::size_t excerpt_chars = kExcerptChars;

  void validate() const;
};

struct Exemplar {
  std::string ad_id;
  std::string excerpt;
  std::string label;  // "Best", "Average" or "Worst"
  double ctr = 0.0;
};

struct GroundingBlock {
  Exemplar best;
  Exemplar average;
  Exemplar worst;
  std::string source_brand;
};

// ---- classifiers ----

class CtrClassifier {
 public:
  virtual ~CtrClassifier() = default;
  virtual CtrDistribution classify(const AdCreative& ad) const = 0;
};

// Reads the true CTR, labels it by tercile and puts 0.8 on that label, 0.1 on the others.
class OracleClassifier : public CtrClassifier {
 public:
  explicit OracleClassifier(CtrThresholds thresholds) : thresholds_(thresholds) {}
  // Thresholds at the 1/3 and 2/3 CTR quantiles of the ads that carry counters.
  static CtrThresholds tercile_thresholds(const std::vector<AdCreative>& ads);
  CtrDistribution classify(const AdCreative& ad) const override;
  CtrThresholds thresholds() const { return thresholds_; }

 private:
  CtrThresholds thresholds_;
};

// Logistic model over hashed word features with a fixed, shipped weight table.
// Logits are (z, 0, -z) for (high, average, low).
class LexicalClassifier : public CtrClassifier {
 public:
  static constexpr std::size_t kBuckets = 1024;
  LexicalClassifier();
  CtrDistribution classify(const AdCreative& ad) const override;
  double logit(std::string_view text) const;

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

class ClassifierRegistry {
 public:
  void add(const std::string& id, std::shared_ptr<const CtrClassifier> classifier);
  const CtrClassifier& get(const std::string& id) const;  // UnknownClassifier
  bool contains(const std::string& id) const { return classifiers_.contains(id); }

  // "oracle" (thresholds from the given ads) and "lexical-baseline".
  static ClassifierRegistry with_builtins(const std::vector<AdCreative>& dataset);

 private:
  std::map<std::string, std::shared_ptr<const CtrClassifier>> classifiers_;
};

CtrDistribution classify_ctr(const AdCreative& ad, const std::string& classifier_id, const ClassifierRegistry& registry);

// alpha * p_high + beta * (1 - p_high)
double score(const CtrDistribution& dist, const ScoreLayer& layer);

// Sorted by score descending, ties by ascending ad id.
RankedList rank_by_score(const std::vector<AdCreative>& candidates, const ScoreLayer& layer,
                         const std::string& classifier_id, const ClassifierRegistry& registry);

// ---- LLM ranking ----

// best = max CTR, worst = min CTR, average = lower median. Ties by ascending id.
GroundingBlock build_grounding_block(const std::vector<AdCreative>& brand_pool, std::size_t excerpt_chars = kExcerptChars);

// Throws GroundingOverlap when an exemplar is also a candidate.
void check_disjoint(const GroundingBlock& block, const std::vector<AdCreative>& candidates);

std::string render_grounding(const GroundingBlock& block);
std::string render_candidates(const std::vector<AdCreative>& candidates, std::size_t excerpt_chars);

// Recognized ids in order of appearance, deduplicated, then missing ids in
// input order. UnparsableRanking when fewer than half the ids are recognized.
std::vector<std::string> parse_ranking(std::string_view response, const std::vector<std::string>& candidate_ids);

RankedList llm_rank_once(const std::vector<AdCreative>& candidates, const RankerConfig& config,
                         const GroundingBlock* grounding, int run_index, llm::Gateway& gateway,
                         const llm::PromptTemplate& tmpl);

// Rank-sum aggregation of complete orderings: 1-based positions summed per id,
// ascending total, ties by ascending id.
std::vector<std::string> rank_sum(const std::vector<std::vector<std::string>>& runs);

// Runs are issued concurrently and reduced by run_index.
RankedList ensemble_rank(const std::vector<AdCreative>& candidates, const RankerConfig& config,
                         const GroundingBlock* grounding, llm::Gateway& gateway, const llm::PromptTemplate& tmpl);

void to_json(Json& j, const RankedList& r);
void from_json(const Json& j, RankedList& r);
void to_json(Json& j, const RankerConfig& c);
void from_json(const Json& j, RankerConfig& c);
void to_json(Json& j, const GroundingBlock& g);

}  // namespace somonitor::rank
