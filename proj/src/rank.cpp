#include "somonitor/rank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <set>

#include "somonitor/error.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"

namespace somonitor::rank {

std::string_view to_string(RankerKind k) {
  switch (k) {
    case RankerKind::ScoreLayer: return "ScoreLayer";
    case RankerKind::LlmSingle: return "LlmSingle";
    case RankerKind::LlmEnsemble: return "LlmEnsemble";
  }
  return "ScoreLayer";
}

RankerKind parse_ranker_kind(std::string_view s) {
  if (s == "ScoreLayer") return RankerKind::ScoreLayer;
  if (s == "LlmSingle") return RankerKind::LlmSingle;
  if (s == "LlmEnsemble") return RankerKind::LlmEnsemble;
  throw Error(Errc::ValidationError, "unknown ranker kind '" + std::string(s) + "'");
}

void RankerConfig::validate() const {
  if (ensemble_runs < 1) throw Error(Errc::InvalidArgument, "ensemble_runs must be >= 1");
  if (grounding_exemplars != 0 && grounding_exemplars != 3) {
    throw Error(Errc::InvalidArgument, "grounding_exemplars must be 0 or 3");
  }
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw Error(Errc::InvalidArgument, "temperature outside [0,2]");
  if (excerpt_chars == 0) throw Error(Errc::InvalidArgument, "excerpt_chars must be positive");
}

// ---- classifiers ----

CtrThresholds OracleClassifier::tercile_thresholds(const std::vector<AdCreative>& ads) {
  std::vector<double> values;
  for (const auto& ad : ads) {
    if (ad.impressions > 0) values.push_back(ctr(ad).value);
  }
  if (values.empty()) return {0.0, 0.0};
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return {values[n / 3], values[(2 * n) / 3]};
}

CtrDistribution OracleClassifier::classify(const AdCreative& ad) const {
  if (ad.impressions == 0) throw Error(Errc::MissingPerformance, "ad " + ad.id + " has no impressions");
  switch (tercile_label(ctr(ad).value, thresholds_)) {
    case CtrLabel::High: return {0.8, 0.1, 0.1};
    case CtrLabel::Average: return {0.1, 0.8, 0.1};
    case CtrLabel::Low: return {0.1, 0.1, 0.8};
  }
  return {0.1, 0.8, 0.1};
}

namespace {

constexpr std::uint64_t kLexicalSeed = 0x6c65786963616c31ULL;

struct WordWeight {
  const char* word;
  double weight;
};

constexpr WordWeight kLexicalWeights[] = {
    {"free", 0.9},       {"save", 0.7},        {"instant", 0.6},    {"today", 0.5},     {"exclusive", 0.5},
    {"bonus", 0.6},      {"off", 0.4},         {"discount", 0.6},   {"now", 0.3},       {"new", 0.2},
    {"limited", 0.4},    {"win", 0.5},         {"cashback", 0.6},   {"easy", 0.3},      {"fast", 0.3},
    {"terms", -0.6},     {"conditions", -0.6}, {"subject", -0.5},   {"fees", -0.5},     {"apply", -0.3},
    {"disclaimer", -0.7}, {"eligible", -0.2},  {"learn", -0.2},     {"more", -0.1},     {"policy", -0.4},
};

std::size_t bucket(std::string_view word) { return text::hash64(word, kLexicalSeed) % LexicalClassifier::kBuckets; }

}  // namespace

LexicalClassifier::LexicalClassifier() : weights_(kBuckets, 0.0), bias_(-0.2) {
  for (const auto& w : kLexicalWeights) weights_[bucket(w.word)] += w.weight;
}

double LexicalClassifier::logit(std::string_view ad_text) const {
  double z = bias_;
  for (const auto& tok : text::word_tokens(ad_text)) z += weights_[bucket(tok)];
  return z;
}

CtrDistribution LexicalClassifier::classify(const AdCreative& ad) const {
  const double z = std::clamp(logit(ad.text), -30.0, 30.0);
  const double eh = std::exp(z), el = std::exp(-z);
  const double total = eh + 1.0 + el;
  CtrDistribution d{eh / total, 1.0 / total, 0.0};
  d.p_low = 1.0 - d.p_high - d.p_avg;
  return d;
}

void ClassifierRegistry::add(const std::string& id, std::shared_ptr<const CtrClassifier> classifier) {
  classifiers_[id] = std::move(classifier);
}

const CtrClassifier& ClassifierRegistry::get(const std::string& id) const {
  auto it = classifiers_.find(id);
  if (it == classifiers_.end()) throw Error(Errc::UnknownClassifier, "classifier '" + id + "' is not registered");
  return *it->second;
}

ClassifierRegistry ClassifierRegistry::with_builtins(const std::vector<AdCreative>& dataset) {
  ClassifierRegistry r;
  r.add("oracle", std::make_shared<OracleClassifier>(OracleClassifier::tercile_thresholds(dataset)));
  r.add("lexical-baseline", std::make_shared<LexicalClassifier>());
  return r;
}

CtrDistribution classify_ctr(const AdCreative& ad, const std::string& classifier_id, const ClassifierRegistry& registry) {
  const CtrDistribution d = registry.get(classifier_id).classify(ad);
  if (!is_simplex(d)) throw Error(Errc::ValidationError, "classifier '" + classifier_id + "' returned a non-simplex");
  return d;
}

double score(const CtrDistribution& dist, const ScoreLayer& layer) {
  // Same value as alpha*p + beta*(1-p), written so it is exactly monotone in p_high.
  return layer.beta + (layer.alpha - layer.beta) * dist.p_high;
}

RankedList rank_by_score(const std::vector<AdCreative>& candidates, const ScoreLayer& layer,
                         const std::string& classifier_id, const ClassifierRegistry& registry) {
  if (candidates.empty()) throw Error(Errc::InvalidArgument, "no candidates to rank");
  struct Row {
    const AdCreative* ad;
    double p_high;
    double score;
  };
  std::vector<Row> rows;
  for (const auto& ad : candidates) {
    const auto d = classify_ctr(ad, classifier_id, registry);
    rows.push_back({&ad, d.p_high, score(d, layer)});
  }
  // Order by p_high in the direction of sign(alpha - beta) so the ranking never
  // depends on rounding in the affine map.
  const double direction = layer.alpha > layer.beta ? 1.0 : (layer.alpha < layer.beta ? -1.0 : 0.0);
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (direction != 0.0 && a.p_high != b.p_high) return direction > 0 ? a.p_high > b.p_high : a.p_high < b.p_high;
    return a.ad->id < b.ad->id;
  });
  RankedList out;
  out.ranker = RankerKind::ScoreLayer;
  std::vector<double> scores;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.candidate_ids.push_back(rows[i].ad->id);
    // Clamp float noise so the published scores stay non-increasing.
    scores.push_back(i == 0 ? rows[i].score : std::min(rows[i].score, scores.back()));
  }
  out.scores = std::move(scores);
  return out;
}

// ---- grounding ----

namespace {

std::string one_line(std::string_view s, std::size_t max_chars) {
  std::string flat(s);
  for (char& c : flat) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return text::truncate_utf8(text::trim(flat), max_chars);
}

}  // namespace

GroundingBlock build_grounding_block(const std::vector<AdCreative>& brand_pool, std::size_t excerpt_chars) {
  if (brand_pool.size() < 3) {
    throw Error(Errc::PoolTooSmall, "grounding needs at least 3 ads, got " + std::to_string(brand_pool.size()));
  }
  struct Row {
    const AdCreative* ad;
    double ctr;
  };
  std::vector<Row> rows;
  for (const auto& ad : brand_pool) rows.push_back({&ad, ctr(ad).value});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.ctr != b.ctr) return a.ctr > b.ctr;
    return a.ad->id < b.ad->id;
  });
  // rows is descending; the lower median of the ascending order sits at index (n-1) - (n-1)/2.
  const std::size_t n = rows.size();
  auto make = [&](const Row& r, std::string label) {
    return Exemplar{r.ad->id, one_line(r.ad->text, excerpt_chars), std::move(label), r.ctr};
  };
  GroundingBlock g;
  g.best = make(rows.front(), "Best");
  g.average = make(rows[(n - 1) - (n - 1) / 2], "Average");
  g.worst = make(rows.back(), "Worst");
  g.source_brand = brand_pool.front().brand;
  return g;
}

void check_disjoint(const GroundingBlock& block, const std::vector<AdCreative>& candidates) {
  std::vector<std::string> overlap;
  for (const auto& ad : candidates) {
    if (ad.id == block.best.ad_id || ad.id == block.average.ad_id || ad.id == block.worst.ad_id) {
      overlap.push_back(ad.id);
    }
  }
  if (!overlap.empty()) throw Error(Errc::GroundingOverlap, "grounding exemplar is also a candidate", overlap);
}

std::string render_grounding(const GroundingBlock& block) {
  std::string out = "\nReference advertisements from " + block.source_brand + " with known performance:\n";
  out += "Best (highest CTR): " + block.best.excerpt + "\n";
  out += "Average (median CTR): " + block.average.excerpt + "\n";
  out += "Worst (lowest CTR): " + block.worst.excerpt + "\n";
  return out;
}

std::string render_candidates(const std::vector<AdCreative>& candidates, std::size_t excerpt_chars) {
  std::string out;
  for (const auto& ad : candidates) out += ad.id + " | " + one_line(ad.text, excerpt_chars) + "\n";
  return out;
}

// ---- LLM ranking ----

std::vector<std::string> parse_ranking(std::string_view response, const std::vector<std::string>& candidate_ids) {
  const std::set<std::string> known(candidate_ids.begin(), candidate_ids.end());
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto is_sep = [](char c) {
    return c == ',' || c == ';' || c == '>' || c == '[' || c == ']' || c == '"' || c == '\'' || c == '`' ||
           c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c));
  };
  std::size_t i = 0;
  while (i < response.size()) {
    while (i < response.size() && is_sep(response[i])) ++i;
    std::size_t j = i;
    while (j < response.size() && !is_sep(response[j])) ++j;
    if (j > i) {
      std::string tok(response.substr(i, j - i));
      while (!tok.empty() && (tok.back() == '.' || tok.back() == ':' || tok.back() == '*')) tok.pop_back();
      while (!tok.empty() && tok.front() == '*') tok.erase(0, 1);
      if (known.contains(tok) && seen.insert(tok).second) out.push_back(tok);
    }
    i = j;
  }
  if (out.size() * 2 < candidate_ids.size()) {
    throw Error(Errc::UnparsableRanking, "recognized " + std::to_string(out.size()) + " of " +
                                             std::to_string(candidate_ids.size()) + " candidate ids");
  }
  for (const auto& id : candidate_ids) {
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

RankedList llm_rank_once(const std::vector<AdCreative>& candidates, const RankerConfig& config,
                         const GroundingBlock* grounding, int run_index, llm::Gateway& gateway,
                         const llm::PromptTemplate& tmpl) {
  config.validate();
  if (candidates.size() < 2) throw Error(Errc::InvalidArgument, "LLM ranking needs at least 2 candidates");
  std::vector<std::string> ids;
  for (const auto& ad : candidates) ids.push_back(ad.id);
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw Error(Errc::DuplicateId, "candidate ids are not unique");
  }
  if (grounding) check_disjoint(*grounding, candidates);

  llm::CompletionRequest req;
  req.system_prompt = std::string(templates::kSystemPrompt);
  req.bindings = {{"count", std::to_string(candidates.size())},
                  {"grounding", grounding ? render_grounding(*grounding) : std::string()},
                  {"candidates", render_candidates(candidates, config.excerpt_chars)}};
  req.user_prompt = llm::render_prompt(tmpl, req.bindings);
  req.template_id = tmpl.template_id;
  req.temperature = config.temperature;
  req.seed = config.seed_base + run_index;
  req.backend_id = config.backend_id;
  const auto result = gateway.complete(std::move(req));

  RankedList out;
  out.ranker = RankerKind::LlmSingle;
  out.grounded = grounding != nullptr;
  out.candidate_ids = parse_ranking(result.text, ids);
  out.run_ids.push_back(result.request_digest.substr(0, 16));
  out.run_orderings.push_back(out.candidate_ids);
  return out;
}

std::vector<std::string> rank_sum(const std::vector<std::vector<std::string>>& runs) {
  if (runs.empty()) throw Error(Errc::InvalidArgument, "no runs to aggregate");
  std::map<std::string, std::size_t> totals;
  for (const auto& run : runs) {
    if (run.size() != runs.front().size()) throw Error(Errc::InvalidArgument, "runs rank different candidate sets");
    for (std::size_t pos = 0; pos < run.size(); ++pos) totals[run[pos]] += pos + 1;
  }
  if (totals.size() != runs.front().size()) throw Error(Errc::InvalidArgument, "runs rank different candidate sets");
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [id, t] : totals) order.emplace_back(t, id);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (auto& [t, id] : order) out.push_back(std::move(id));
  return out;
}

RankedList ensemble_rank(const std::vector<AdCreative>& candidates, const RankerConfig& config,
                         const GroundingBlock* grounding, llm::Gateway& gateway, const llm::PromptTemplate& tmpl) {
  config.validate();
  std::vector<std::future<RankedList>> futures;
  for (int run = 0; run < config.ensemble_runs; ++run) {
    futures.push_back(std::async(std::launch::async, [&, run] {
      return llm_rank_once(candidates, config, grounding, run, gateway, tmpl);
    }));
  }
  RankedList out;
  out.ranker = RankerKind::LlmEnsemble;
  out.grounded = grounding != nullptr;
  std::vector<std::vector<std::string>> survivors;
  std::optional<Error> first_error;
  for (int run = 0; run < config.ensemble_runs; ++run) {
    try {
      auto single = futures[static_cast<std::size_t>(run)].get();
      survivors.push_back(single.candidate_ids);
      out.run_ids.push_back(single.run_ids.front());
      out.run_orderings.push_back(std::move(single.candidate_ids));
    } catch (const Error& e) {
      out.failures.push_back("run " + std::to_string(run) + ": " + e.what());
      if (!first_error) first_error = e;
    }
  }
  if (survivors.empty()) {
    throw Error(Errc::AllRunsFailed, "all " + std::to_string(config.ensemble_runs) + " ensemble runs failed",
                out.failures);
  }
  out.degraded = out.failures.size() * 2 > static_cast<std::size_t>(config.ensemble_runs);
  out.candidate_ids = rank_sum(survivors);
  return out;
}

// ---- json ----

void to_json(Json& j, const RankedList& r) {
  j = Json{{"dataset_id", r.dataset_id},
           {"candidate_ids", r.candidate_ids},
           {"scores", r.scores ? Json(*r.scores) : Json(nullptr)},
           {"ranker", to_string(r.ranker)},
           {"grounded", r.grounded},
           {"run_ids", r.run_ids},
           {"run_orderings", r.run_orderings},
           {"degraded", r.degraded},
           {"failures", r.failures}};
}

void from_json(const Json& j, RankedList& r) {
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.candidate_ids = j.at("candidate_ids").get<std::vector<std::string>>();
  if (j.contains("scores") && !j.at("scores").is_null()) {
    r.scores = j.at("scores").get<std::vector<double>>();
  } else {
    r.scores.reset();
  }
  r.ranker = parse_ranker_kind(j.at("ranker").get<std::string>());
  r.grounded = j.value("grounded", false);
  r.run_ids = j.value("run_ids", std::vector<std::string>{});
  r.run_orderings = j.value("run_orderings", std::vector<std::vector<std::string>>{});
  r.degraded = j.value("degraded", false);
  r.failures = j.value("failures", std::vector<std::string>{});
}

void to_json(Json& j, const RankerConfig& c) {
  j = Json{{"temperature", c.temperature},        {"ensemble_runs", c.ensemble_runs},
           {"grounding_exemplars", c.grounding_exemplars}, {"backend_id", c.backend_id},
           {"seed_base", c.seed_base},            {"excerpt_chars", c.excerpt_chars}};
}

void from_json(const Json& j, RankerConfig& c) {
  c.temperature = j.value("temperature", c.temperature);
  c.ensemble_runs = j.value("ensemble_runs", c.ensemble_runs);
  c.grounding_exemplars = j.value("grounding_exemplars", c.grounding_exemplars);
  c.backend_id = j.value("backend_id", c.backend_id);
  c.seed_base = j.value("seed_base", c.seed_base);
  c.excerpt_chars = j.value("excerpt_chars", c.excerpt_chars);
}

void to_json(Json& j, const GroundingBlock& g) {
  auto ex = [](const Exemplar& e) {
    return Json{{"ad_id", e.ad_id}, {"excerpt", e.excerpt}, {"label", e.label}, {"ctr", e.ctr}};
  };
  j = Json{{"best", ex(g.best)}, {"average", ex(g.average)}, {"worst", ex(g.worst)}, {"source_brand", g.source_brand}};
}

}  // namespace somonitor::rank
