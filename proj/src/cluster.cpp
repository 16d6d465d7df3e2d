#include "somonitor/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "somonitor/error.hpp"
#include "somonitor/pillars.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"

namespace somonitor::cluster {

std::string_view to_string(Pillar p) { return p == Pillar::Audience ? "audience" : "insight"; }

Pillar parse_pillar(std::string_view s) {
  const std::string lower = text::to_lower_ascii(s);
  if (lower == "audience" || lower == "persona" || lower == "personas") return Pillar::Audience;
  if (lower == "insight" || lower == "challenge" || lower == "challenges") return Pillar::Insight;
  throw Error(Errc::InvalidArgument, "unknown pillar '" + std::string(s) + "' (expected audience|insight)");
}

void ClusterConfig::validate() const {
  if (k0 < 1 || k0 > k_max) throw Error(Errc::InvalidArgument, "need 1 <= k0 <= k_max");
  if (max_iterations < 1) throw Error(Errc::InvalidArgument, "max_iterations must be >= 1");
  if (!(outlier_percentile > 0.0 && outlier_percentile <= 100.0)) {
    throw Error(Errc::InvalidArgument, "outlier_percentile must be in (0, 100]");
  }
}

std::vector<std::size_t> Partition::cluster_members(int c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (labels[i] == c) out.push_back(members[i]);
  }
  return out;
}

std::vector<std::size_t> Partition::cluster_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k()), 0);
  for (int l : labels) sizes[static_cast<std::size_t>(l)] += 1;
  return sizes;
}

namespace {

using Index = Eigen::Index;

double sq_dist(const Matrix& a, Index ra, const Matrix& b, Index rb) { return (a.row(ra) - b.row(rb)).squaredNorm(); }

bool row_less(const Matrix& m, Index a, Index b) {
  for (Index c = 0; c < m.cols(); ++c) {
    if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
  }
  return false;
}

std::vector<std::size_t> canonical_order(const Matrix& points, std::vector<std::size_t> rows) {
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    if (row_less(points, static_cast<Index>(a), static_cast<Index>(b))) return true;
    if (row_less(points, static_cast<Index>(b), static_cast<Index>(a))) return false;
    return a < b;
  });
  return rows;
}

Matrix sorted_rows(const Matrix& m) {
  std::vector<Index> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return row_less(m, a, b); });
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
  return out;
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_points(const Matrix& points) {
  if (!points.allFinite()) throw Error(Errc::InvalidArgument, "points contain non-finite values");
}

// k-means++ seeding over rows in canonical order.
Matrix seed_plus_plus(const Matrix& points, const std::vector<std::size_t>& order, int k, std::mt19937_64& rng) {
  const std::size_t n = order.size();
  Matrix centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
  centroids.row(0) = points.row(static_cast<Index>(order[first]));
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points, static_cast<Index>(order[i]), centroids, 0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      // Every remaining point coincides with a chosen centre.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
      if (pick == n) pick = 0;
    }
    chosen[pick] = true;
    centroids.row(c) = points.row(static_cast<Index>(order[pick]));
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points, static_cast<Index>(order[i]), centroids, c));
  }
  return centroids;
}

void canonicalize_labels(Partition& p) {
  std::vector<int> remap(static_cast<std::size_t>(p.k()), -1);
  int next = 0;
  for (int l : p.labels) {
    if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
  }
  for (auto& r : remap) {
    if (r < 0) r = next++;
  }
  Matrix c(p.centroids.rows(), p.centroids.cols());
  for (std::size_t old = 0; old < remap.size(); ++old) c.row(remap[old]) = p.centroids.row(static_cast<Index>(old));
  p.centroids = std::move(c);
  for (int& l : p.labels) l = remap[static_cast<std::size_t>(l)];
}

Partition single_cluster(const Matrix& points, const std::vector<std::size_t>& rows) {
  Partition p;
  p.members = rows;
  std::sort(p.members.begin(), p.members.end());
  p.labels.assign(p.members.size(), 0);
  p.centroids = Matrix::Zero(1, points.cols());
  for (auto r : canonical_order(points, p.members)) p.centroids.row(0) += points.row(static_cast<Index>(r));
  p.centroids.row(0) /= static_cast<double>(p.members.size());
  for (auto r : p.members) p.inertia += sq_dist(points, static_cast<Index>(r), p.centroids, 0);
  return p;
}

// Partition of rows with given labels (row -> label), centroids = member means.
Partition from_labels(const Matrix& points, const std::vector<std::size_t>& rows, const std::vector<int>& labels, int k) {
  Partition p;
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rows[a] < rows[b]; });
  for (auto i : idx) {
    p.members.push_back(rows[i]);
    p.labels.push_back(labels[i]);
  }
  p.centroids = Matrix::Zero(k, points.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  std::vector<int> label_of_row(static_cast<std::size_t>(points.rows()), -1);
  for (std::size_t i = 0; i < p.members.size(); ++i) label_of_row[p.members[i]] = p.labels[i];
  for (auto r : canonical_order(points, p.members)) {
    const int l = label_of_row[r];
    p.centroids.row(l) += points.row(static_cast<Index>(r));
    counts[static_cast<std::size_t>(l)] += 1;
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) p.centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  for (std::size_t i = 0; i < p.members.size(); ++i) {
    p.inertia += sq_dist(points, static_cast<Index>(p.members[i]), p.centroids, p.labels[i]);
  }
  return p;
}

}  // namespace

Partition lloyd(const Matrix& points, std::vector<std::size_t> rows, Matrix centroids, int max_iterations) {
  if (rows.empty()) throw Error(Errc::TooFewPoints, "no points");
  if (max_iterations < 1) throw Error(Errc::InvalidArgument, "max_iterations must be >= 1");
  centroids = sorted_rows(centroids);
  const int k = static_cast<int>(centroids.rows());
  const auto order = canonical_order(points, std::move(rows));
  const std::size_t n = order.size();
  const Index d = points.cols();
  std::vector<int> assign(n, -1);
  std::vector<double> dist(n, 0.0);
  Partition p;

  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dc = sq_dist(points, static_cast<Index>(order[i]), centroids, c);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;

    Matrix sums = Matrix::Zero(k, d);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(static_cast<Index>(order[i]));
      counts[static_cast<std::size_t>(assign[i])] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      // Reseed to the point farthest from its own centroid, taken from a cluster that can spare it.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(assign[i])] < 2) continue;
        const double di = sq_dist(points, static_cast<Index>(order[i]), centroids, assign[i]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      if (far == n) break;
      const int donor = assign[far];
      sums.row(donor) -= points.row(static_cast<Index>(order[far]));
      counts[static_cast<std::size_t>(donor)] -= 1;
      centroids.row(donor) = sums.row(donor) / static_cast<double>(counts[static_cast<std::size_t>(donor)]);
      assign[far] = c;
      sums.row(c) = points.row(static_cast<Index>(order[far]));
      counts[static_cast<std::size_t>(c)] = 1;
      centroids.row(c) = points.row(static_cast<Index>(order[far]));
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = sq_dist(points, static_cast<Index>(order[i]), centroids, assign[i]);
      inertia += dist[i];
    }
    p.inertia_trace.push_back(inertia);
  }

  std::vector<std::size_t> by_row(n);
  std::iota(by_row.begin(), by_row.end(), 0);
  std::sort(by_row.begin(), by_row.end(), [&](std::size_t a, std::size_t b) { return order[a] < order[b]; });
  for (auto i : by_row) {
    p.members.push_back(order[i]);
    p.labels.push_back(assign[i]);
  }
  p.centroids = std::move(centroids);
  p.inertia = p.inertia_trace.empty() ? 0.0 : p.inertia_trace.back();
  canonicalize_labels(p);
  return p;
}

Partition kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations) {
  check_points(points);
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  if (points.rows() < k) {
    throw Error(Errc::TooFewPoints, std::to_string(points.rows()) + " points for k=" + std::to_string(k));
  }
  std::vector<std::size_t> rows(static_cast<std::size_t>(points.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  const auto order = canonical_order(points, rows);
  std::mt19937_64 rng(seed);
  Matrix init = seed_plus_plus(points, order, k, rng);
  return lloyd(points, std::move(rows), std::move(init), max_iterations);
}

BicScore bic(const Partition& partition, const Matrix& points) {
  const double n = static_cast<double>(partition.members.size());
  const int k = partition.k();
  const double d = static_cast<double>(points.cols());
  double sse = 0.0;
  for (std::size_t i = 0; i < partition.members.size(); ++i) {
    sse += sq_dist(points, static_cast<Index>(partition.members[i]), partition.centroids, partition.labels[i]);
  }
  if (n <= k || !(sse > 0.0)) return {-std::numeric_limits<double>::infinity(), true};
  const double variance = sse / (n - k);
  double loglik = 0.0;
  for (auto nj_count : partition.cluster_sizes()) {
    if (nj_count == 0) continue;
    const double nj = static_cast<double>(nj_count);
    loglik += nj * std::log(nj / n) - (nj * d / 2.0) * std::log(2.0 * std::numbers::pi * variance) - (nj - k) / 2.0;
  }
  const double params = (k - 1) + d * k + 1;
  return {loglik - (params / 2.0) * std::log(n), false};
}

namespace {

constexpr double kBicTieTolerance = 1e-12;

struct SplitCandidate {
  int cluster = 0;
  double gain = 0.0;
  Matrix children;
};

std::vector<SplitCandidate> evaluate_splits(const Matrix& points, const Partition& p, std::uint64_t seed,
                                            int max_iterations) {
  std::vector<SplitCandidate> accepted;
  for (int c = 0; c < p.k(); ++c) {
    const auto rows = p.cluster_members(c);
    if (rows.size() < 3) continue;
    const Partition parent = single_cluster(points, rows);
    const BicScore parent_bic = bic(parent, points);
    if (parent_bic.degenerate) continue;
    std::mt19937_64 rng(seed);
    const auto order = canonical_order(points, rows);
    Partition child = lloyd(points, rows, seed_plus_plus(points, order, 2, rng), max_iterations);
    const BicScore child_bic = bic(child, points);
    if (child_bic.degenerate) continue;
    if (child_bic.value > parent_bic.value + kBicTieTolerance) {
      accepted.push_back({c, child_bic.value - parent_bic.value, child.centroids});
    }
  }
  return accepted;
}

// Returns true when a merge was applied.
bool merge_best_pair(const Matrix& points, Partition& p, int max_iterations) {
  int best_a = -1, best_b = -1;
  double best_gain = 0.0;
  for (int a = 0; a < p.k(); ++a) {
    for (int b = a + 1; b < p.k(); ++b) {
      std::vector<std::size_t> rows;
      std::vector<int> labels;
      for (std::size_t i = 0; i < p.members.size(); ++i) {
        if (p.labels[i] == a || p.labels[i] == b) {
          rows.push_back(p.members[i]);
          labels.push_back(p.labels[i] == a ? 0 : 1);
        }
      }
      const BicScore split = bic(from_labels(points, rows, labels, 2), points);
      const BicScore merged = bic(single_cluster(points, rows), points);
      if (merged.degenerate && !split.degenerate) continue;
      // Equal scores favour the simpler, merged model.
      const double gain = merged.degenerate ? 0.0 : merged.value - split.value;
      if (gain >= -kBicTieTolerance && (best_a < 0 || gain > best_gain)) {
        best_a = a;
        best_b = b;
        best_gain = gain;
      }
    }
  }
  if (best_a < 0) return false;
  Matrix next(p.k() - 1, points.cols());
  const auto sizes = p.cluster_sizes();
  int r = 0;
  for (int c = 0; c < p.k(); ++c) {
    if (c == best_b) continue;
    if (c == best_a) {
      const double na = static_cast<double>(sizes[static_cast<std::size_t>(best_a)]);
      const double nb = static_cast<double>(sizes[static_cast<std::size_t>(best_b)]);
      next.row(r++) = (p.centroids.row(best_a) * na + p.centroids.row(best_b) * nb) / (na + nb);
    } else {
      next.row(r++) = p.centroids.row(c);
    }
  }
  p = lloyd(points, p.members, std::move(next), max_iterations);
  return true;
}

}  // namespace

Partition xmeans(const Matrix& points, const ClusterConfig& config) {
  config.validate();
  check_points(points);
  if (points.rows() < config.k0) {
    throw Error(Errc::TooFewPoints, std::to_string(points.rows()) + " points for k0=" + std::to_string(config.k0));
  }
  Partition p = kmeans(points, config.k0, config.seed, config.max_iterations);

  for (int round = 0; p.k() < config.k_max; ++round) {
    auto accepted = evaluate_splits(points, p, mix_seed(config.seed, static_cast<std::uint64_t>(round)),
                                    config.max_iterations);
    if (accepted.empty()) break;
    const auto budget = static_cast<std::size_t>(config.k_max - p.k());
    if (accepted.size() > budget) {
      std::stable_sort(accepted.begin(), accepted.end(),
                       [](const SplitCandidate& a, const SplitCandidate& b) { return a.gain > b.gain; });
      accepted.resize(budget);
    }
    std::vector<const SplitCandidate*> split_of(static_cast<std::size_t>(p.k()), nullptr);
    for (const auto& s : accepted) split_of[static_cast<std::size_t>(s.cluster)] = &s;
    Matrix next(p.k() + static_cast<Index>(accepted.size()), points.cols());
    Index r = 0;
    for (int c = 0; c < p.k(); ++c) {
      if (const auto* s = split_of[static_cast<std::size_t>(c)]) {
        next.row(r++) = s->children.row(0);
        next.row(r++) = s->children.row(1);
      } else {
        next.row(r++) = p.centroids.row(c);
      }
    }
    p = lloyd(points, p.members, std::move(next), config.max_iterations);
  }

  if (config.merge_pass) {
    while (p.k() > 1 && merge_best_pair(points, p, config.max_iterations)) {
    }
  }
  return lloyd(points, p.members, p.centroids, config.max_iterations);
}

OutlierResult filter_outliers(const Partition& partition, const Matrix& points, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) throw Error(Errc::InvalidArgument, "percentile must be in (0, 100]");
  OutlierResult out;
  std::vector<bool> drop(partition.members.size(), false);
  std::vector<bool> touched(static_cast<std::size_t>(partition.k()), false);
  for (int c = 0; c < partition.k(); ++c) {
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < partition.members.size(); ++i) {
      if (partition.labels[i] != c) continue;
      dist.emplace_back(sq_dist(points, static_cast<Index>(partition.members[i]), partition.centroids, c), i);
    }
    if (dist.empty()) continue;
    std::vector<double> sorted;
    for (const auto& [dd, i] : dist) sorted.push_back(dd);
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(percentile * m / 100.0 - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    const double threshold = sorted[rank - 1];
    for (const auto& [dd, i] : dist) {
      if (dd > threshold) {
        drop[i] = true;
        touched[static_cast<std::size_t>(c)] = true;
      }
    }
  }
  Partition& p = out.partition;
  p.centroids = partition.centroids;
  p.inertia_trace = partition.inertia_trace;
  for (std::size_t i = 0; i < partition.members.size(); ++i) {
    if (drop[i]) {
      out.excluded.push_back(partition.members[i]);
    } else {
      p.members.push_back(partition.members[i]);
      p.labels.push_back(partition.labels[i]);
    }
  }
  if (std::any_of(touched.begin(), touched.end(), [](bool t) { return t; })) {
    const Partition recomputed = from_labels(points, p.members, p.labels, partition.k());
    for (int c = 0; c < partition.k(); ++c) {
      if (touched[static_cast<std::size_t>(c)]) p.centroids.row(c) = recomputed.centroids.row(c);
    }
  }
  p.inertia = 0.0;
  for (std::size_t i = 0; i < p.members.size(); ++i) {
    p.inertia += sq_dist(points, static_cast<Index>(p.members[i]), p.centroids, p.labels[i]);
  }
  if (out.excluded.empty()) p.inertia = partition.inertia;
  return out;
}

std::vector<BrandShares> brand_shares(const Partition& partition, const std::vector<std::string>& brands) {
  std::vector<BrandShares> out(static_cast<std::size_t>(partition.k()));
  const auto sizes = partition.cluster_sizes();
  for (std::size_t i = 0; i < partition.members.size(); ++i) {
    const auto row = partition.members[i];
    if (row >= brands.size()) throw Error(Errc::InvalidArgument, "no brand for row " + std::to_string(row));
    out[static_cast<std::size_t>(partition.labels[i])][brands[row]].count += 1;
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (auto& [brand, bc] : out[c]) bc.share = static_cast<double>(bc.count) / static_cast<double>(sizes[c]);
  }
  return out;
}

std::pair<std::string, std::string> parse_annotation(std::string_view response) {
  std::string name, description;
  for (const auto& raw : text::split_lines(response)) {
    std::string line = text::trim(raw);
    while (!line.empty() && (line.front() == '*' || line.front() == '-' || line.front() == '#')) line.erase(0, 1);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = text::to_lower_ascii(text::trim(line.substr(0, colon)));
    std::string value = line.substr(colon + 1);
    while (!value.empty() && (value.front() == '*' || value.front() == ' ')) value.erase(0, 1);
    while (!value.empty() && (value.back() == '*' || value.back() == ' ')) value.pop_back();
    if (key == "name" && name.empty()) name = value;
    if (key == "description" && description.empty()) description = value;
  }
  if (name.empty() || description.empty()) {
    std::vector<std::string> missing;
    if (name.empty()) missing.push_back("Name");
    if (description.empty()) missing.push_back("Description");
    throw Error(Errc::AnnotationParseError, "annotation lacks " + missing.front() + ":", missing);
  }
  return {name, description};
}

ClusterCard annotate_cluster(const std::vector<MemberRow>& members, Pillar pillar, const llm::PromptTemplate& tmpl,
                             const std::string& backend_id, llm::Gateway& gateway, std::size_t max_exemplars) {
  if (members.empty()) throw Error(Errc::InvalidArgument, "cannot annotate an empty cluster");
  ClusterCard card;
  card.member_count = members.size();
  for (const auto& m : members) card.per_brand[m.brand].count += 1;
  for (auto& [brand, bc] : card.per_brand) bc.share = static_cast<double>(bc.count) / static_cast<double>(members.size());

  std::string exemplars;
  for (std::size_t i = 0; i < members.size() && i < max_exemplars; ++i) {
    const auto& p = members[i].pillars;
    const std::string& primary = pillar == Pillar::Audience ? p.audience : p.insight;
    exemplars += "- " + primary + " || need: " + p.need + "; product: " + p.product + "; archetype: " + p.archetype +
                 "; tone: " + p.tone + "\n";
    card.exemplar_ids.push_back(members[i].ad_id);
  }
  llm::CompletionRequest req;
  req.system_prompt = std::string(templates::kSystemPrompt);
  req.bindings = {{"pillar", std::string(to_string(pillar))},
                  {"member_count", std::to_string(members.size())},
                  {"exemplars", exemplars}};
  req.user_prompt = llm::render_prompt(tmpl, req.bindings);
  req.template_id = tmpl.template_id;
  req.backend_id = backend_id;
  req.temperature = gateway.config().temperature;
  req.seed = 0;
  auto [name, description] = parse_annotation(gateway.complete(std::move(req)).text);
  card.name = std::move(name);
  card.description = std::move(description);
  return card;
}

ClusterRun cluster_pillar(store::Store& store, const std::string& dataset_id, const ClusterConfig& config,
                          llm::Gateway& gateway, const std::string& backend_id, const std::string& embed_backend_id,
                          const llm::PromptTemplate& annotate_template) {
  config.validate();
  const auto table = pillars::load_latest(store, dataset_id);
  const auto ads = store.records(dataset_id);
  std::map<std::string, const AdCreative*> by_id;
  for (const auto& ad : *ads) by_id.emplace(ad.id, &ad);

  ClusterRun run;
  run.dataset_id = dataset_id;
  run.config = config;
  std::vector<std::string> texts;
  std::vector<std::string> brands;
  std::vector<const ContentPillars*> rows;
  for (const auto& [id, p] : table.rows) {
    run.item_ids.push_back(id);
    texts.push_back(config.pillar == Pillar::Audience ? p.audience : p.insight);
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(Errc::ValidationError, "pillar row for unknown ad " + id);
    brands.push_back(it->second->brand);
    rows.push_back(&p);
  }
  if (texts.empty()) throw Error(Errc::EmptyInput, "pillar table for " + dataset_id + " has no rows");

  const auto embedding = gateway.embed(texts, embed_backend_id, llm::NormPolicy::L2Normalized);
  const Matrix points = embedding.vectors;
  const Partition full = xmeans(points, config);
  run.k_before_filter = full.k();
  const auto filtered = filter_outliers(full, points, config.outlier_percentile);
  const Partition& p = filtered.partition;
  run.centroids = p.centroids;
  for (std::size_t i = 0; i < p.members.size(); ++i) run.assignments[run.item_ids[p.members[i]]] = p.labels[i];
  for (auto r : filtered.excluded) run.excluded.push_back(run.item_ids[r]);

  Json cfg = config;
  run.run_id = std::string(to_string(config.pillar)) + "-" +
               text::sha256_hex(dataset_id + table.run_id + cfg.dump() + backend_id + embed_backend_id +
                                annotate_template.body)
                   .substr(0, 12);
  const char prefix = config.pillar == Pillar::Audience ? 'P' : 'C';
  for (int c = 0; c < p.k(); ++c) {
    std::vector<std::pair<double, std::size_t>> ordered;
    for (std::size_t i = 0; i < p.members.size(); ++i) {
      if (p.labels[i] != c) continue;
      const auto r = static_cast<Eigen::Index>(p.members[i]);
      ordered.emplace_back((points.row(r) - p.centroids.row(c)).squaredNorm(), p.members[i]);
    }
    std::sort(ordered.begin(), ordered.end());
    std::vector<MemberRow> members;
    for (const auto& [dist, r] : ordered) members.push_back({run.item_ids[r], brands[r], *rows[r]});
    ClusterCard card = annotate_cluster(members, config.pillar, annotate_template, backend_id, gateway);
    card.cluster_id = dataset_id + ":" + prefix + std::to_string(c + 1);
    run.cards.push_back(std::move(card));
  }
  const Json doc = run;
  store.put_artifact({std::string(kArtifactKind), dataset_id, run.run_id}, doc);
  store.put_artifact({std::string(kArtifactKind), dataset_id, "latest-" + std::string(to_string(config.pillar))}, doc);
  return run;
}

ClusterRun load_run(const store::Store& store, const std::string& dataset_id, Pillar pillar) {
  return store.get_artifact({std::string(kArtifactKind), dataset_id, "latest-" + std::string(to_string(pillar))})
      .get<ClusterRun>();
}

std::vector<ClusterCard> load_cards(const store::Store& store, const std::string& dataset_id, Pillar pillar) {
  return load_run(store, dataset_id, pillar).cards;
}

void to_json(Json& j, const ClusterConfig& c) {
  j = Json{{"k0", c.k0},
           {"k_max", c.k_max},
           {"max_iterations", c.max_iterations},
           {"seed", c.seed},
           {"outlier_percentile", c.outlier_percentile},
           {"pillar", to_string(c.pillar)},
           {"merge_pass", c.merge_pass}};
}

void from_json(const Json& j, ClusterConfig& c) {
  c.k0 = j.value("k0", c.k0);
  c.k_max = j.value("k_max", c.k_max);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.seed = j.value("seed", c.seed);
  c.outlier_percentile = j.value("outlier_percentile", c.outlier_percentile);
  if (j.contains("pillar")) c.pillar = parse_pillar(j.at("pillar").get<std::string>());
  c.merge_pass = j.value("merge_pass", c.merge_pass);
}

void to_json(Json& j, const ClusterCard& c) {
  Json brands = Json::object();
  for (const auto& [b, bc] : c.per_brand) brands[b] = Json{{"count", bc.count}, {"share", bc.share}};
  j = Json{{"cluster_id", c.cluster_id},     {"name", c.name},
           {"description", c.description},   {"member_count", c.member_count},
           {"per_brand", brands},            {"exemplar_ids", c.exemplar_ids}};
}

void from_json(const Json& j, ClusterCard& c) {
  c.cluster_id = j.at("cluster_id").get<std::string>();
  c.name = j.at("name").get<std::string>();
  c.description = j.at("description").get<std::string>();
  c.member_count = j.at("member_count").get<std::size_t>();
  c.per_brand.clear();
  for (const auto& [b, v] : j.at("per_brand").items()) {
    c.per_brand[b] = BrandCount{v.at("count").get<std::size_t>(), v.at("share").get<double>()};
  }
  c.exemplar_ids = j.value("exemplar_ids", std::vector<std::string>{});
}

void to_json(Json& j, const ClusterRun& r) {
  Json centroids = Json::array();
  for (Eigen::Index i = 0; i < r.centroids.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < r.centroids.cols(); ++c) row.push_back(r.centroids(i, c));
    centroids.push_back(std::move(row));
  }
  j = Json{{"dataset_id", r.dataset_id}, {"run_id", r.run_id},       {"config", r.config},
           {"item_ids", r.item_ids},     {"assignments", r.assignments}, {"excluded", r.excluded},
           {"k", r.centroids.rows()},    {"k_before_filter", r.k_before_filter}, {"centroids", centroids},
           {"cards", r.cards}};
}

void from_json(const Json& j, ClusterRun& r) {
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.run_id = j.at("run_id").get<std::string>();
  r.config = j.at("config").get<ClusterConfig>();
  r.item_ids = j.at("item_ids").get<std::vector<std::string>>();
  r.assignments = j.at("assignments").get<std::map<std::string, int>>();
  r.excluded = j.at("excluded").get<std::vector<std::string>>();
  r.k_before_filter = j.value("k_before_filter", 0);
  const auto& rows = j.at("centroids");
  const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = k > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
  r.centroids.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) r.centroids(i, c) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  }
  r.cards = j.at("cards").get<std::vector<ClusterCard>>();
}

}  // namespace somonitor::cluster
