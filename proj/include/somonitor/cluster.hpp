#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "somonitor/domain.hpp"
#include "somonitor/gateway.hpp"
#include "somonitor/store.hpp"

namespace somonitor::cluster {

// Row-major point sets: one point per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Pillar { Audience, Insight };
std::string_view to_string(Pillar p);
Pillar parse_pillar(std::string_view s);

struct ClusterConfig {
  int k0 = 3;
  int k_max = 50;
  int max_iterations = 100;
  std::uint64_t seed = 42;
  double outlier_percentile = 95.0;
  Pillar pillar = Pillar::Audience;
  // After the split phase, merge neighbouring clusters whose union scores a
  // higher BIC as one cluster. Lets K fall below k0.
  bool merge_pass = true;

  void validate() const;
};

// A hard assignment of a subset of rows (members) to K clusters.
struct Partition {
  std::vector<std::size_t> members;  // row indices, ascending
  std::vector<int> labels;           // parallel to members, in [0, K)
  Matrix centroids;                  // K x d
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after each Lloyd iteration

  int k() const { return static_cast<int>(centroids.rows()); }
  std::vector<std::size_t> cluster_members(int c) const;
  std::vector<std::size_t> cluster_sizes() const;
};

// Seeded k-means++ followed by Lloyd iterations until the assignment is a
// fixpoint or max_iterations is reached. Empty clusters are reseeded to the
// point farthest from its centroid. Clusters are relabelled by their first
// member's row index. Rows are visited in lexicographic coordinate order, so
// the result does not depend on input row order.
Partition kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations = 100);

// Lloyd iterations from explicit starting centroids over the given rows.
Partition lloyd(const Matrix& points, std::vector<std::size_t> rows, Matrix centroids, int max_iterations);

struct BicScore {
  double value = 0.0;
  bool degenerate = false;  // pooled variance <= 0; value is -inf
};

// Identical-spherical-Gaussian BIC over the partition's members:
//   var = SSE / (n - K)
//   loglik = sum_j [ n_j ln(n_j / n) - (n_j d / 2) ln(2 pi var) - (n_j - K) / 2 ]
//   BIC = loglik - (p / 2) ln n,   p = (K - 1) + d K + 1
BicScore bic(const Partition& partition, const Matrix& points);

// Splits each cluster with a local 2-means whenever the split's BIC beats the
// parent's on that cluster's points (ties keep the parent), refines globally,
// and repeats until nothing splits or K would exceed k_max.
Partition xmeans(const Matrix& points, const ClusterConfig& config);

struct OutlierResult {
  Partition partition;
  std::vector<std::size_t> excluded;  // row indices, ascending
};

// Nearest-rank quantile per cluster: with sorted centroid distances
// d_1 <= ... <= d_m and r = ceil(percentile * m / 100), rows farther than d_r
// are excluded. Centroids of clusters that lost members are recomputed.
OutlierResult filter_outliers(const Partition& partition, const Matrix& points, double percentile);

struct BrandCount {
  std::size_t count = 0;
  double share = 0.0;
};
using BrandShares = std::map<std::string, BrandCount>;

// brands[row] is the brand of each row; result is indexed by cluster.
std::vector<BrandShares> brand_shares(const Partition& partition, const std::vector<std::string>& brands);

struct ClusterCard {
  std::string cluster_id;
  std::string name;
  std::string description;
  std::size_t member_count = 0;
  BrandShares per_brand;
  std::vector<std::string> exemplar_ids;
};

struct MemberRow {
  std::string ad_id;
  std::string brand;
  ContentPillars pillars;
};

inline constexpr std::size_t kDefaultExemplars = 20;

// Name and description come from the model; counts and shares never do.
// Members should be ordered most-representative first.
ClusterCard annotate_cluster(const std::vector<MemberRow>& members, Pillar pillar, const llm::PromptTemplate& tmpl,
                             const std::string& backend_id, llm::Gateway& gateway,
                             std::size_t max_exemplars = kDefaultExemplars);

// Parses "Name:" / "Description:" lines; throws AnnotationParseError.
std::pair<std::string, std::string> parse_annotation(std::string_view response);

// Full persona or challenge run over a dataset's latest pillar table.
struct ClusterRun {
  std::string dataset_id;
  std::string run_id;
  ClusterConfig config;
  std::vector<std::string> item_ids;           // row order of the embedded points
  std::map<std::string, int> assignments;      // surviving item -> cluster index
  std::vector<std::string> excluded;           // outliers
  Matrix centroids;
  int k_before_filter = 0;
  std::vector<ClusterCard> cards;
};

inline constexpr std::string_view kArtifactKind = "clusters";

ClusterRun cluster_pillar(store::Store& store, const std::string& dataset_id, const ClusterConfig& config,
                          llm::Gateway& gateway, const std::string& backend_id, const std::string& embed_backend_id,
                          const llm::PromptTemplate& annotate_template);

// Latest persona (Audience) or challenge (Insight) cards of a dataset.
std::vector<ClusterCard> load_cards(const store::Store& store, const std::string& dataset_id, Pillar pillar);
ClusterRun load_run(const store::Store& store, const std::string& dataset_id, Pillar pillar);

void to_json(Json& j, const ClusterConfig& c);
void from_json(const Json& j, ClusterConfig& c);
void to_json(Json& j, const ClusterCard& c);
void from_json(const Json& j, ClusterCard& c);
void to_json(Json& j, const ClusterRun& r);
void from_json(const Json& j, ClusterRun& r);

}  // namespace somonitor::cluster
