#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "somonitor/api.hpp"
#include "somonitor/engine.hpp"
#include "somonitor/error.hpp"
#include "somonitor/settings.hpp"
#include "somonitor/text.hpp"

using namespace somonitor;

namespace {

struct GlobalOptions {
  std::string store;
  std::string config;
  std::string backend;
  std::vector<std::string> set;
};

// Defaults, then the config file, then --set pairs, then dedicated flags.
Settings load_settings(const GlobalOptions& g) {
  Settings s;
  if (!g.config.empty()) apply_config_file(s, g.config);
  for (const auto& kv : g.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidArgument, "--set expects key=value, got '" + kv + "'");
    apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!g.store.empty()) s.store_dir = g.store;
  if (!g.backend.empty()) s.backend_id = g.backend;
  return s;
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

void summary(const std::string& line) { std::cerr << line << "\n"; }

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = text::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "P1" / "C2" are shorthand for cards of the given dataset.
std::string card_id(const std::string& dataset_id, const std::string& id) {
  return id.find(':') == std::string::npos ? dataset_id + ":" + id : id;
}

void summarize_cards(const std::string& title, const std::vector<cluster::ClusterCard>& cards) {
  summary(title + ": " + std::to_string(cards.size()));
  for (const auto& c : cards) {
    std::string shares;
    for (const auto& [brand, share] : c.per_brand) {
      shares += (shares.empty() ? "" : ", ") + brand + " " + fmt(share.share, 2);
    }
    summary("  " + c.cluster_id + "  " + c.name + "  (" + std::to_string(c.member_count) + " members; " + shares + ")");
  }
}

Json cluster_json(const cluster::ClusterRun& run) {
  Json j = run;
  j.erase("centroids");
  return j;
}

void summarize_ranking(const rank::RankedList& list) {
  summary("ranking of " + std::to_string(list.candidate_ids.size()) + " creatives (" + (list.grounded ? "grounded" : "ungrounded") +
          (list.degraded ? ", degraded" : "") + ")");
  for (std::size_t i = 0; i < list.candidate_ids.size() && i < 10; ++i) {
    std::string line = "  " + std::to_string(i + 1) + ". " + list.candidate_ids[i];
    if (list.scores) line += "  " + fmt((*list.scores)[i], 4);
    summary(line);
  }
}

void summarize_story(const StoryResult& r) {
  summary("character: " + r.story.character.name + " (" + r.story.character.role + ")");
  summary("insight: " + r.story.concluding_insight);
  summary("brief: " + r.brief_path.string());
}

int run(int argc, char** argv) {
  CLI::App app{"somonitor: explainable ad-creative analytics"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--store", g.store, "Store directory");
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--backend", g.backend, "LLM backend id (offline, scripted, remote)");
  app.add_option("--set", g.set, "Override a config key, e.g. --set rank.alpha=2");

  std::string path, format, dataset_id, pillar = "audience", ranker, rankers, own, competitor, persona, challenge, brand,
                                         cutoffs, label, grounding_dataset, policy;
  std::optional<int> k0, kmax, runs, relevance_size, port;
  std::optional<std::uint64_t> seed;
  std::optional<double> outlier_pct, alpha, beta;
  std::optional<std::int64_t> seed_base;
  bool grounded = false;

  auto* ingest = app.add_subcommand("ingest", "Load a JSONL or CSV dataset");
  ingest->add_option("path", path)->required();
  ingest->add_option("--format", format)->check(CLI::IsMember({"jsonl", "csv"}));

  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  stats->add_option("dataset_id", dataset_id)->required();

  auto* pillars_cmd = app.add_subcommand("pillars", "Extract content pillars for every creative");
  pillars_cmd->add_option("dataset_id", dataset_id)->required();

  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster a pillar into persona or challenge cards");
  cluster_cmd->add_option("dataset_id", dataset_id)->required();
  cluster_cmd->add_option("--pillar", pillar)->check(CLI::IsMember({"audience", "insight"}));
  cluster_cmd->add_option("--k0", k0);
  cluster_cmd->add_option("--kmax", kmax);
  cluster_cmd->add_option("--seed", seed);
  cluster_cmd->add_option("--outlier-pct", outlier_pct);

  auto* rank_cmd = app.add_subcommand("rank", "Rank the creatives of a dataset");
  rank_cmd->add_option("dataset_id", dataset_id)->required();
  rank_cmd->add_option("--ranker", ranker)->required()->check(CLI::IsMember({"score", "llm"}));
  rank_cmd->add_flag("--grounded", grounded);
  rank_cmd->add_option("--grounding-dataset", grounding_dataset, "Historical dataset supplying the exemplars");
  rank_cmd->add_option("--alpha", alpha);
  rank_cmd->add_option("--beta", beta);
  rank_cmd->add_option("--runs", runs);
  rank_cmd->add_option("--seed-base", seed_base);
  rank_cmd->add_option("--label", label, "Stored ranking label (default score, llm or llm-gd)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score stored rankings against observed CTR");
  eval_cmd->add_option("dataset_id", dataset_id)->required();
  eval_cmd->add_option("--rankers", rankers)->required();
  eval_cmd->add_option("--R", relevance_size);
  eval_cmd->add_option("--cutoffs", cutoffs);

  auto* opp_cmd = app.add_subcommand("opportunities", "Persona x challenge gap matrix");
  opp_cmd->add_option("dataset_id", dataset_id)->required();
  opp_cmd->add_option("--own", own)->required();
  opp_cmd->add_option("--competitor", competitor)->required();
  opp_cmd->add_option("--policy", policy);

  auto* story_cmd = app.add_subcommand("story", "Generate a character, story and brief");
  story_cmd->add_option("dataset_id", dataset_id)->required();
  story_cmd->add_option("--persona", persona)->required();
  story_cmd->add_option("--challenge", challenge)->required();
  story_cmd->add_option("--brand", brand)->required();

  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  serve_cmd->add_option("--port", port);

  auto* demo_cmd = app.add_subcommand("demo", "Run the full offline pipeline on the bundled synthetic corpus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Settings settings = load_settings(g);

  if (ingest->parsed()) {
    Engine engine(settings);
    const auto fmt_kind = !format.empty()                 ? store::parse_format(format)
                          : text::to_lower_ascii(path).ends_with(".csv") ? store::DatasetFormat::Csv
                                                                       : store::DatasetFormat::Jsonl;
    const auto handle = engine.ingest(path, fmt_kind);
    print_json(handle);
    summary("dataset " + handle.dataset_id + ": " + std::to_string(handle.item_count) + " items");
  } else if (stats->parsed()) {
    Engine engine(settings);
    const auto s = engine.store().dataset_stats(engine.store().handle(dataset_id));
    print_json(s);
    summary(std::to_string(s.total) + " items: " + std::to_string(s.ads) + " ads, " + std::to_string(s.organic) +
            " organic");
    for (const auto& [b, share] : s.per_brand) {
      summary("  " + b + "  " + std::to_string(share.count) + "  " + fmt(share.share));
    }
  } else if (pillars_cmd->parsed()) {
    Engine engine(settings);
    const auto table = engine.run_pillars(dataset_id);
    print_json(Json{{"dataset_id", table.dataset_id},
                    {"run_id", table.run_id},
                    {"rows", table.rows.size()},
                    {"failures", table.failures}});
    summary("pillars extracted for " + std::to_string(table.rows.size()) + " creatives, " +
            std::to_string(table.failures.size()) + " failures");
  } else if (cluster_cmd->parsed()) {
    auto config = settings.cluster;
    config.pillar = cluster::parse_pillar(pillar);
    if (k0) config.k0 = *k0;
    if (kmax) config.k_max = *kmax;
    if (seed) config.seed = *seed;
    if (outlier_pct) config.outlier_percentile = *outlier_pct;
    config.validate();
    summary("k0=" + std::to_string(config.k0) + " kmax=" + std::to_string(config.k_max) +
            " seed=" + std::to_string(config.seed) + " outlier_pct=" + fmt(config.outlier_percentile, 1) +
            " pillar=" + pillar);
    Engine engine(settings);
    const auto run = engine.run_clusters(dataset_id, config);
    print_json(cluster_json(run));
    summarize_cards(config.pillar == cluster::Pillar::Audience ? "personas" : "challenges", run.cards);
  } else if (rank_cmd->parsed()) {
    RankRequest request;
    request.dataset_id = dataset_id;
    request.ranker = ranker;
    if (grounded) request.grounded = true;
    if (!label.empty()) request.label = label;
    request.settings = settings.rank;
    if (alpha) request.settings.layer.alpha = *alpha;
    if (beta) request.settings.layer.beta = *beta;
    if (runs) request.settings.ensemble_runs = *runs;
    if (seed_base) request.settings.seed_base = *seed_base;
    if (!grounding_dataset.empty()) request.settings.grounding_dataset_id = grounding_dataset;
    if (ranker == "llm") summary("ensemble size " + std::to_string(request.settings.ensemble_runs));
    else summary("alpha=" + fmt(request.settings.layer.alpha) + " beta=" + fmt(request.settings.layer.beta) +
                 " classifier=" + request.settings.classifier);
    Engine engine(settings);
    const auto list = engine.run_rank(request);
    Json j = list;
    j["label"] = default_rank_label(request);
    print_json(j);
    summarize_ranking(list);
  } else if (eval_cmd->parsed()) {
    auto config = settings.eval;
    if (relevance_size) config.relevance_size = *relevance_size;
    if (!cutoffs.empty()) {
      config.cutoffs.clear();
      for (const auto& c : split_csv(cutoffs)) {
        try {
          config.cutoffs.push_back(std::stoi(c));
        } catch (const std::exception&) {
          throw Error(Errc::InvalidArgument, "--cutoffs expects integers, got '" + c + "'");
        }
      }
    }
    Engine engine(settings);
    const auto report = engine.run_evaluate(dataset_id, split_csv(rankers), config);
    print_json(report);
    std::cerr << eval::render_table(report.rows);
  } else if (opp_cmd->parsed()) {
    Engine engine(settings);
    const auto cells = engine.opportunities(dataset_id, own, competitor);
    const auto sel = story::select_opportunity(cells, policy.empty() ? settings.story_policy : story::parse_policy(policy));
    print_json(Json{{"dataset_id", dataset_id},
                    {"cells", cells},
                    {"selected", {{"cell", sel.cell}, {"underexploited", sel.underexploited}}}});
    summary(std::to_string(cells.size()) + " cells; selected " + sel.cell.persona_id + " x " + sel.cell.challenge_id +
            " gap " + fmt(sel.cell.gap) + (sel.underexploited ? " (under-exploited)" : ""));
  } else if (story_cmd->parsed()) {
    Engine engine(settings);
    const auto result = engine.run_story(card_id(dataset_id, persona), card_id(dataset_id, challenge), brand);
    Json j = result.story;
    j["brief_path"] = result.brief_path.string();
    print_json(j);
    summarize_story(result);
  } else if (serve_cmd->parsed()) {
    Engine engine(settings);
    api::Server server(engine, settings.api_workers);
    const int p = port.value_or(settings.api_port);
    summary("listening on http://" + settings.api_host + ":" + std::to_string(p));
    if (!server.listen(settings.api_host, p)) {
      throw Error(Errc::InvalidArgument, "cannot listen on " + settings.api_host + ":" + std::to_string(p));
    }
  } else if (demo_cmd->parsed()) {
    Engine engine(settings);
    const auto demo = engine.run_demo();
    print_json(Json{{"corpus", demo.corpus},
                    {"candidates", demo.candidates},
                    {"history", demo.history},
                    {"personas", demo.personas.cards},
                    {"challenges", demo.challenges.cards},
                    {"rankings", demo.rankings},
                    {"report", demo.report},
                    {"selection", {{"cell", demo.selection.cell}, {"underexploited", demo.selection.underexploited}}},
                    {"story", demo.story.story},
                    {"brief_path", demo.story.brief_path.string()}});
    summary("corpus " + demo.corpus.dataset_id + ": " + std::to_string(demo.corpus.item_count) + " creatives");
    summarize_cards("personas", demo.personas.cards);
    summarize_cards("challenges", demo.challenges.cards);
    summarize_ranking(demo.rankings.at("llm-gd"));
    std::cerr << eval::render_table(demo.report.rows);
    summarize_story(demo.story);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    return is_backend_failure(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
