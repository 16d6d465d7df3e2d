#include "somonitor/engine.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "somonitor/error.hpp"
#include "somonitor/offline_backends.hpp"
#include "somonitor/remote_backend.hpp"
#include "somonitor/synthetic.hpp"
#include "somonitor/templates.hpp"

namespace somonitor {

std::string default_rank_label(const RankRequest& request) {
  if (request.label && !request.label->empty()) return *request.label;
  if (request.ranker == "score") return "score";
  const bool grounded = request.grounded.value_or(request.settings.grounded);
  return grounded ? "llm-gd" : "llm";
}

Engine::Engine(Settings settings) : settings_(std::move(settings)) {
  store_ = std::make_unique<store::Store>(settings_.store_dir);
  gateway_ = std::make_unique<llm::Gateway>(settings_.gateway, store_.get());
  llm::register_offline_backends(*gateway_);
  if (auto remote = llm::remote_config_from_env()) llm::register_remote_backend(*gateway_, "remote", *remote);
  if (!settings_.scripted_fixtures.empty()) {
    auto scripted = std::make_shared<llm::ScriptedBackend>();
    scripted->load_fixtures(settings_.scripted_fixtures);
    gateway_->register_backend("scripted", scripted);
  }
}

llm::PromptTemplate Engine::prompt(std::string_view template_id) const {
  return templates::load(template_id, settings_.templates_dir);
}

store::DatasetHandle Engine::ingest(const std::filesystem::path& path, store::DatasetFormat format) {
  return store_->load_dataset(path, format);
}

pillars::PillarTable Engine::run_pillars(const std::string& dataset_id, const Progress& progress) {
  pillars::BatchOptions options;
  options.max_failure_rate = settings_.pillars_max_failure_rate;
  options.parallelism = settings_.pillars_parallelism;
  options.on_progress = progress;
  return pillars::batch_extract(*store_, store_->handle(dataset_id), prompt(templates::kPillars), settings_.backend_id,
                                *gateway_, options);
}

cluster::ClusterRun Engine::run_clusters(const std::string& dataset_id, const cluster::ClusterConfig& config,
                                         const Progress& progress) {
  store_->handle(dataset_id);
  if (progress) progress(0.0);
  auto run = cluster::cluster_pillar(*store_, dataset_id, config, *gateway_, settings_.backend_id,
                                     settings_.embed_backend_id, prompt(templates::kAnnotate));
  if (progress) progress(1.0);
  return run;
}

namespace {

std::string majority_brand(const std::vector<AdCreative>& ads) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ad : ads) counts[ad.brand] += 1;
  std::string best;
  std::size_t best_n = 0;
  for (const auto& [brand, n] : counts) {
    if (n > best_n) {
      best = brand;
      best_n = n;
    }
  }
  return best;
}

}  // namespace

rank::RankedList Engine::run_rank(const RankRequest& request) {
  const auto records = store_->records(request.dataset_id);
  const std::string label = default_rank_label(request);
  const RankSettings& rs = request.settings;
  rank::RankedList list;
  Json config;
  if (request.ranker == "score") {
    const auto registry = rank::ClassifierRegistry::with_builtins(*records);
    list = rank::rank_by_score(*records, rs.layer, rs.classifier, registry);
    config = Json{{"alpha", rs.layer.alpha}, {"beta", rs.layer.beta}, {"classifier", rs.classifier}};
  } else if (request.ranker == "llm") {
    const bool grounded = request.grounded.value_or(rs.grounded);
    rank::RankerConfig rc;
    rc.temperature = rs.temperature;
    rc.ensemble_runs = rs.ensemble_runs;
    rc.grounding_exemplars = grounded ? 3 : 0;
    rc.backend_id = settings_.backend_id;
    rc.seed_base = rs.seed_base;
    rc.validate();
    std::optional<rank::GroundingBlock> block;
    if (grounded) {
      if (rs.grounding_dataset_id.empty()) {
        throw Error(Errc::InvalidArgument, "grounded ranking needs a grounding dataset (rank.grounding_dataset)");
      }
      const std::string brand = majority_brand(*records);
      std::vector<AdCreative> pool;
      for (const auto& ad : *store_->records(rs.grounding_dataset_id)) {
        if (ad.brand == brand && ad.impressions > 0) pool.push_back(ad);
      }
      block = rank::build_grounding_block(pool, rc.excerpt_chars);
    }
    const auto tmpl = prompt(templates::kRank);
    list = rc.ensemble_runs == 1 ? rank::llm_rank_once(*records, rc, block ? &*block : nullptr, 0, *gateway_, tmpl)
                                 : rank::ensemble_rank(*records, rc, block ? &*block : nullptr, *gateway_, tmpl);
    config = rc;
    if (block) config["grounding"] = *block;
  } else {
    throw Error(Errc::InvalidArgument, "unknown ranker '" + request.ranker + "' (expected score|llm)");
  }
  list.dataset_id = request.dataset_id;
  Json doc = list;
  doc["label"] = label;
  doc["config"] = config;
  store_->put_artifact({std::string(kRankingsKind), request.dataset_id, label}, doc);
  return list;
}

eval::Report Engine::run_evaluate(const std::string& dataset_id, const std::vector<std::string>& labels,
                                  const eval::EvalConfig& config) {
  if (labels.empty()) throw Error(Errc::InvalidArgument, "no rankers to evaluate");
  const auto records = store_->records(dataset_id);
  std::map<std::string, rank::RankedList> rankings;
  for (const auto& label : labels) {
    rankings[label] = store_->get_artifact({std::string(kRankingsKind), dataset_id, label}).get<rank::RankedList>();
  }
  eval::Report report;
  report.dataset_id = dataset_id;
  report.config = config;
  // Keep the caller's ranker order in the table.
  auto rows = eval::evaluate(rankings, *records, config);
  std::stable_sort(rows.begin(), rows.end(), [&](const eval::MetricRow& a, const eval::MetricRow& b) {
    if (std::tie(a.brand, a.objective) != std::tie(b.brand, b.objective)) {
      return std::tie(a.brand, a.objective) < std::tie(b.brand, b.objective);
    }
    auto pos = [&](const std::string& l) { return std::find(labels.begin(), labels.end(), l) - labels.begin(); };
    return pos(a.ranker) < pos(b.ranker);
  });
  report.rows = std::move(rows);
  store_->put_artifact({std::string(kEvaluationsKind), dataset_id, "report"}, Json(report));
  return report;
}

std::vector<story::OpportunityCell> Engine::opportunities(const std::string& dataset_id, const std::string& own,
                                                          const std::string& competitor) {
  if (own.empty() || competitor.empty()) throw Error(Errc::InvalidArgument, "both own and competitor brands are required");
  store_->handle(dataset_id);
  const auto personas = cluster::load_cards(*store_, dataset_id, cluster::Pillar::Audience);
  const auto challenges = cluster::load_cards(*store_, dataset_id, cluster::Pillar::Insight);
  return story::opportunity_matrix(personas, challenges, own, competitor);
}

cluster::ClusterCard Engine::find_card(const std::string& card_id) const {
  const auto colon = card_id.rfind(':');
  if (colon == std::string::npos || colon + 1 >= card_id.size()) {
    throw Error(Errc::NotFound, "malformed card id '" + card_id + "'");
  }
  const std::string dataset_id = card_id.substr(0, colon);
  const char kind = card_id[colon + 1];
  if (kind != 'P' && kind != 'C') throw Error(Errc::NotFound, "malformed card id '" + card_id + "'");
  const auto pillar = kind == 'P' ? cluster::Pillar::Audience : cluster::Pillar::Insight;
  std::vector<cluster::ClusterCard> cards;
  try {
    cards = cluster::load_cards(*store_, dataset_id, pillar);
  } catch (const Error& e) {
    throw Error(Errc::NotFound, "no card '" + card_id + "'");
  }
  for (auto& c : cards) {
    if (c.cluster_id == card_id) return c;
  }
  throw Error(Errc::NotFound, "no card '" + card_id + "'");
}

StoryResult Engine::run_story(const std::string& persona_id, const std::string& challenge_id, const std::string& brand) {
  if (brand.empty()) throw Error(Errc::InvalidArgument, "brand is required");
  const auto persona = find_card(persona_id);
  const auto challenge = find_card(challenge_id);
  if (persona_id.find(":P") == std::string::npos) throw Error(Errc::InvalidArgument, persona_id + " is not a persona");
  if (challenge_id.find(":C") == std::string::npos) {
    throw Error(Errc::InvalidArgument, challenge_id + " is not a challenge");
  }
  const auto character =
      story::generate_character(persona, prompt(templates::kCharacter), settings_.backend_id, *gateway_);
  StoryResult out;
  out.story = story::generate_story(character, persona, challenge, brand, prompt(templates::kStory),
                                    settings_.backend_id, *gateway_);
  out.brief_path = story::save_story(*store_, out.story);
  out.brief = story::export_brief(out.story);
  return out;
}

DemoResult Engine::run_demo() {
  DemoResult out;
  const auto corpus_path = store_->root() / "demo" / "corpus.jsonl";
  synthetic::write_jsonl(corpus_path.string(), synthetic::demo_corpus());
  out.corpus = ingest(corpus_path, store::DatasetFormat::Jsonl);
  out.stats = store_->dataset_stats(out.corpus);

  run_pillars(out.corpus.dataset_id);
  auto config = settings_.cluster;
  config.pillar = cluster::Pillar::Audience;
  out.personas = run_clusters(out.corpus.dataset_id, config);
  config.pillar = cluster::Pillar::Insight;
  out.challenges = run_clusters(out.corpus.dataset_id, config);

  const std::string own = settings_.own_brand.empty() ? synthetic::kOwnBrand : settings_.own_brand;
  const std::string competitor =
      settings_.competitor_brand.empty() ? synthetic::kCompetitorBrand : settings_.competitor_brand;

  using std::chrono::sys_days;
  using namespace std::chrono;
  store::SubsetFilter candidates;
  candidates.brands = std::set<std::string>{own};
  candidates.objective = Objective::Sales;
  candidates.date_range = store::DateRange{sys_days{2024y / June / 1}, sys_days{2024y / June / 30} + hours{23} + minutes{59} + seconds{59}};
  out.candidates = store_->filter_subset(out.corpus, candidates);
  store::SubsetFilter history;
  history.brands = std::set<std::string>{own};
  history.date_range = store::DateRange{sys_days{2024y / January / 1}, sys_days{2024y / May / 31} + hours{23} + minutes{59} + seconds{59}};
  out.history = store_->filter_subset(out.corpus, history);

  RankRequest score{out.candidates.dataset_id, "score", false, std::nullopt, settings_.rank};
  out.rankings["score"] = run_rank(score);
  RankRequest llm{out.candidates.dataset_id, "llm", false, std::nullopt, settings_.rank};
  out.rankings["llm"] = run_rank(llm);
  RankRequest grounded{out.candidates.dataset_id, "llm", true, std::nullopt, settings_.rank};
  grounded.settings.grounding_dataset_id = out.history.dataset_id;
  out.rankings["llm-gd"] = run_rank(grounded);

  out.report = run_evaluate(out.candidates.dataset_id, {"score", "llm", "llm-gd"}, settings_.eval);

  out.opportunities = opportunities(out.corpus.dataset_id, own, competitor);
  out.selection = story::select_opportunity(out.opportunities, settings_.story_policy);
  out.story = run_story(out.selection.cell.persona_id, out.selection.cell.challenge_id, own);
  return out;
}

}  // namespace somonitor
