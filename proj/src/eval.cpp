#include "somonitor/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "somonitor/error.hpp"

namespace somonitor::eval {

void EvalConfig::validate() const {
  if (relevance_size < 1) throw Error(Errc::InvalidArgument, "relevance size R must be >= 1");
  if (cutoffs.empty()) throw Error(Errc::InvalidArgument, "at least one cutoff is required");
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] < 1) throw Error(Errc::InvalidArgument, "cutoffs must be positive");
    if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) throw Error(Errc::InvalidArgument, "cutoffs must be strictly increasing");
  }
}

std::set<std::string> relevance_set(const std::vector<AdCreative>& ads, int r) {
  if (r < 1) throw Error(Errc::InvalidArgument, "R must be >= 1");
  if (static_cast<std::size_t>(r) > ads.size()) {
    throw Error(Errc::RTooLarge, "R=" + std::to_string(r) + " exceeds " + std::to_string(ads.size()) + " ads");
  }
  std::vector<std::pair<double, const std::string*>> rows;
  for (const auto& ad : ads) rows.emplace_back(ctr(ad).value, &ad.id);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::set<std::string> out;
  for (int i = 0; i < r; ++i) out.insert(*rows[static_cast<std::size_t>(i)].second);
  return out;
}

double recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, int k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  if (relevant.empty()) throw Error(Errc::InvalidArgument, "relevant set is empty");
  const std::size_t limit = std::min(ranking.size(), static_cast<std::size_t>(k));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) hits += relevant.contains(ranking[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

Ndcg ndcg_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& relevant, int k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  if (relevant.empty()) return {0.0, true};
  const std::size_t limit = std::min(ranking.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (relevant.contains(ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  const std::size_t ideal_hits = std::min(relevant.size(), static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal_hits; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return {std::min(1.0, dcg / idcg), false};
}

std::vector<MetricRow> evaluate(const std::map<std::string, rank::RankedList>& rankings,
                                const std::vector<AdCreative>& ads, const EvalConfig& config) {
  config.validate();
  if (rankings.empty()) throw Error(Errc::InvalidArgument, "no rankings to evaluate");
  using Group = std::pair<std::string, std::string>;
  std::map<Group, std::vector<AdCreative>> groups;
  std::map<std::string, Group> group_of;
  for (const auto& ad : ads) {
    Group g{ad.brand, std::string(to_string(ad.objective))};
    groups[g].push_back(ad);
    group_of[ad.id] = g;
  }
  for (const auto& [label, list] : rankings) {
    std::set<std::string> ids(list.candidate_ids.begin(), list.candidate_ids.end());
    if (ids.size() != list.candidate_ids.size() || ids.size() != group_of.size() ||
        !std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return group_of.contains(id); })) {
      throw Error(Errc::CandidateMismatch, "ranking '" + label + "' does not cover the evaluated candidate set");
    }
  }
  std::vector<MetricRow> rows;
  for (const auto& [group, members] : groups) {
    const auto relevant = relevance_set(members, config.relevance_size);
    for (const auto& [label, list] : rankings) {
      std::vector<std::string> sub;
      for (const auto& id : list.candidate_ids) {
        if (group_of.at(id) == group) sub.push_back(id);
      }
      MetricRow row{label, group.first, group.second, {}, {}};
      for (int k : config.cutoffs) {
        row.ndcg_at[k] = ndcg_at_k(sub, relevant, k).value;
        row.recall_at[k] = recall_at_k(sub, relevant, k);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

namespace {

std::string cell(const std::map<int, double>& m, int k) {
  auto it = m.find(k);
  return it == m.end() ? "-" : format_metric(it->second);
}

}  // namespace

std::string render_table(const std::vector<MetricRow>& rows) {
  std::set<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) groups.emplace(r.brand, r.objective);
  const bool grouped = groups.size() > 1;

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header;
  if (grouped) header.push_back("Group");
  for (const char* h : {"Ranker", "nDCG@5", "nDCG@10", "Recall@3", "Recall@5"}) header.emplace_back(h);
  table.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line;
    if (grouped) line.push_back(r.brand + "/" + r.objective);
    line.push_back(r.ranker);
    line.push_back(cell(r.ndcg_at, 5));
    line.push_back(cell(r.ndcg_at, 10));
    line.push_back(cell(r.recall_at, 3));
    line.push_back(cell(r.recall_at, 5));
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream os;
  for (const auto& line : table) {
    std::string out;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out += "  ";
      out += line[c];
      if (c + 1 < line.size()) out += std::string(width[c] - line[c].size(), ' ');
    }
    os << out << "\n";
  }
  return os.str();
}

namespace {

Json metric_map(const std::map<int, double>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> parse_metric_map(const Json& j) {
  std::map<int, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<double>();
  return m;
}

}  // namespace

void to_json(Json& j, const EvalConfig& c) { j = Json{{"relevance_size", c.relevance_size}, {"cutoffs", c.cutoffs}}; }

void from_json(const Json& j, EvalConfig& c) {
  c.relevance_size = j.value("relevance_size", c.relevance_size);
  c.cutoffs = j.value("cutoffs", c.cutoffs);
}

void to_json(Json& j, const MetricRow& r) {
  j = Json{{"ranker", r.ranker},
           {"brand", r.brand},
           {"objective", r.objective},
           {"ndcg_at", metric_map(r.ndcg_at)},
           {"recall_at", metric_map(r.recall_at)}};
}

void from_json(const Json& j, MetricRow& r) {
  r.ranker = j.at("ranker").get<std::string>();
  r.brand = j.value("brand", std::string());
  r.objective = j.value("objective", std::string());
  r.ndcg_at = parse_metric_map(j.at("ndcg_at"));
  r.recall_at = parse_metric_map(j.at("recall_at"));
}

void to_json(Json& j, const Report& r) {
  j = Json{{"dataset_id", r.dataset_id}, {"config", r.config}, {"rows", r.rows}, {"table", render_table(r.rows)}};
}

}  // namespace somonitor::eval
