#include "somonitor/api.hpp"

#include <algorithm>

#include <httplib.h>

#include "somonitor/pillars.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"

namespace somonitor::api {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Pillars: return "Pillars";
    case Stage::Clusters: return "Clusters";
    case Stage::Ranking: return "Ranking";
    case Stage::Evaluation: return "Evaluation";
    case Stage::Story: return "Story";
  }
  return "Pillars";
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "Pending";
    case RunStatus::Running: return "Running";
    case RunStatus::Done: return "Done";
    case RunStatus::Failed: return "Failed";
  }
  return "Pending";
}

void to_json(Json& j, const RunDescriptor& r) {
  j = Json{{"run_id", r.run_id},
           {"stage", to_string(r.stage)},
           {"status", to_string(r.status)},
           {"progress", r.progress},
           {"error", r.error ? Json(*r.error) : Json(nullptr)},
           {"dataset_id", r.dataset_id},
           {"request_digest", r.request_digest},
           {"result", r.result}};
}

// ---- RunManager ----

RunManager::RunManager(int workers) {
  for (int i = 0; i < std::max(1, workers); ++i) {
    workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
  }
}

RunManager::~RunManager() {
  for (auto& w : workers_) w.request_stop();
  cv_.notify_all();
  workers_.clear();
}

RunManager::Submission RunManager::submit(Stage stage, const std::string& dataset_id, const std::string& digest,
                                          Job job) {
  std::lock_guard lock(mu_);
  if (auto it = done_by_digest_.find(digest); it != done_by_digest_.end()) {
    return {runs_.at(it->second), true};
  }
  if (auto it = in_flight_.find({dataset_id, stage}); it != in_flight_.end()) {
    throw Error(Errc::Conflict,
                "a " + std::string(to_string(stage)) + " run is already in flight for dataset " + dataset_id,
                {it->second});
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "run-%06llu", static_cast<unsigned long long>(next_id_++));
  RunDescriptor run;
  run.run_id = buf;
  run.stage = stage;
  run.dataset_id = dataset_id;
  run.request_digest = digest;
  runs_[run.run_id] = run;
  in_flight_[{dataset_id, stage}] = run.run_id;
  queue_.emplace_back(run.run_id, std::move(job));
  cv_.notify_one();
  return {run, false};
}

std::optional<RunDescriptor> RunManager::get(const std::string& run_id) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(run_id);
  if (it == runs_.end()) return std::nullopt;
  return it->second;
}

void RunManager::update(const std::string& run_id, const std::function<void(RunDescriptor&)>& fn) {
  std::lock_guard lock(mu_);
  fn(runs_.at(run_id));
}

void RunManager::worker_loop(std::stop_token stop) {
  while (true) {
    std::pair<std::string, Job> task;
    {
      std::unique_lock lock(mu_);
      if (!cv_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
      task = std::move(queue_.front());
      queue_.pop_front();
      runs_.at(task.first).status = RunStatus::Running;
    }
    const std::string& id = task.first;
    auto progress = [&](double p) {
      update(id, [p](RunDescriptor& r) { r.progress = std::max(r.progress, std::clamp(p, 0.0, 1.0)); });
    };
    Json result;
    std::optional<std::string> error;
    try {
      result = task.second(progress);
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(mu_);
    RunDescriptor& r = runs_.at(id);
    in_flight_.erase({r.dataset_id, r.stage});
    if (error) {
      r.status = RunStatus::Failed;
      r.error = error;
    } else {
      r.status = RunStatus::Done;
      r.progress = 1.0;
      r.result = std::move(result);
      done_by_digest_[r.request_digest] = id;
    }
  }
}

// ---- error mapping ----

int http_status(Errc code) {
  switch (code) {
    case Errc::UnknownDataset:
    case Errc::NotFound: return 404;
    case Errc::Conflict: return 409;
    case Errc::BackendUnavailable:
    case Errc::ResponseTooLong:
    case Errc::AuthFailure:
    case Errc::AllRunsFailed:
    case Errc::ExtractionIncomplete:
    case Errc::BatchFailureRateExceeded:
    case Errc::AnnotationParseError:
    case Errc::UnparsableRanking:
    case Errc::BrandMissingFromNarrative: return 502;
    default: return 400;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  Json body{{"error", {{"code", to_string(e.code())}, {"message", e.what()}, {"details", e.details()}}}};
  const int status = http_status(e.code());
  if (status == 502) body["error"]["gateway_error"] = e.what();
  send_json(res, status, body);
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const Json::exception& e) {
      send_error(res, Error(Errc::ValidationError, e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, Json{{"error", {{"code", "Internal"}, {"message", e.what()}, {"details", Json::array()}}}});
    }
  };
}

Json parse_body(const httplib::Request& req) {
  Json j;
  try {
    j = Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::ValidationError, "request body is not valid JSON");
  }
  if (!j.is_object()) throw Error(Errc::ValidationError, "request body must be a JSON object");
  return j;
}

const Json* field(const Json& j, const char* name, Json::value_t type, bool required, const char* type_name) {
  if (!j.contains(name) || j.at(name).is_null()) {
    if (required) throw Error(Errc::ValidationError, std::string("missing field '") + name + "'", {name});
    return nullptr;
  }
  const Json& v = j.at(name);
  const bool ok = type == Json::value_t::number_float ? v.is_number()
                  : type == Json::value_t::number_integer ? v.is_number_integer()
                                                          : v.type() == type;
  if (!ok) throw Error(Errc::ValidationError, std::string("field '") + name + "' must be " + type_name, {name});
  return &v;
}

std::string req_string(const Json& j, const char* name) {
  auto s = field(j, name, Json::value_t::string, true, "a string")->get<std::string>();
  if (s.empty()) throw Error(Errc::ValidationError, std::string("field '") + name + "' must not be empty", {name});
  return s;
}

std::optional<std::string> opt_string(const Json& j, const char* name) {
  if (auto* v = field(j, name, Json::value_t::string, false, "a string")) return v->get<std::string>();
  return std::nullopt;
}

std::optional<double> opt_number(const Json& j, const char* name) {
  if (auto* v = field(j, name, Json::value_t::number_float, false, "a number")) return v->get<double>();
  return std::nullopt;
}

std::optional<std::int64_t> opt_int(const Json& j, const char* name) {
  if (auto* v = field(j, name, Json::value_t::number_integer, false, "an integer")) return v->get<std::int64_t>();
  return std::nullopt;
}

std::optional<bool> opt_bool(const Json& j, const char* name) {
  if (auto* v = field(j, name, Json::value_t::boolean, false, "a boolean")) return v->get<bool>();
  return std::nullopt;
}

std::string query(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw Error(Errc::ValidationError, std::string("missing query parameter '") + name + "'", {name});
  }
  return req.get_param_value(name);
}

store::DatasetFormat format_for(const std::optional<std::string>& format, const std::string& filename) {
  if (format && !format->empty()) return store::parse_format(*format);
  const auto ext = text::to_lower_ascii(std::filesystem::path(filename).extension().string());
  return ext == ".csv" ? store::DatasetFormat::Csv : store::DatasetFormat::Jsonl;
}

Json schema_ref(const std::string& name) { return Json{{"$ref", "#/components/schemas/" + name}}; }

Json json_response(const std::string& description, const std::string& schema) {
  return Json{{"description", description}, {"content", {{"application/json", {{"schema", schema_ref(schema)}}}}}};
}

Json error_responses(std::initializer_list<int> codes) {
  Json out = Json::object();
  for (int c : codes) out[std::to_string(c)] = json_response("error", "Error");
  return out;
}

}  // namespace

Json openapi_document() {
  auto op = [](const std::string& summary, Json responses, Json body = nullptr, Json params = Json::array()) {
    Json o{{"summary", summary}, {"responses", std::move(responses)}};
    if (!body.is_null()) o["requestBody"] = Json{{"required", true}, {"content", std::move(body)}};
    if (!params.empty()) o["parameters"] = std::move(params);
    return o;
  };
  auto qp = [](const std::string& name, bool required) {
    return Json{{"name", name}, {"in", "query"}, {"required", required}, {"schema", {{"type", "string"}}}};
  };
  auto pp = [](const std::string& name) {
    return Json{{"name", name}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}};
  };
  auto merge = [](Json a, const Json& b) {
    a.update(b);
    return a;
  };
  auto body = [](const std::string& schema) { return Json{{"application/json", {{"schema", schema_ref(schema)}}}}; };

  Json paths;
  paths["/datasets"]["post"] = op(
      "Ingest a dataset from a server-side path or a multipart upload (field 'file', optional 'format').",
      merge(Json{{"201", json_response("dataset handle", "DatasetHandle")}}, error_responses({400, 404})),
      Json{{"application/json", {{"schema", schema_ref("DatasetRef")}}},
           {"multipart/form-data", {{"schema", {{"type", "object"}}}}}});
  paths["/datasets/{dataset_id}/stats"]["get"] =
      op("Dataset statistics", merge(Json{{"200", json_response("stats", "DatasetStats")}}, error_responses({404})),
         nullptr, Json::array({pp("dataset_id")}));
  paths["/runs/pillars"]["post"] =
      op("Start (or reuse) a pillar extraction run",
         merge(Json{{"202", json_response("accepted", "RunDescriptor")}, {"200", json_response("cached", "RunDescriptor")}},
               error_responses({400, 404, 409})),
         body("PillarRunRequest"));
  paths["/runs/clusters"]["post"] =
      op("Start (or reuse) a persona or challenge clustering run",
         merge(Json{{"202", json_response("accepted", "RunDescriptor")}, {"200", json_response("cached", "RunDescriptor")}},
               error_responses({400, 404, 409})),
         body("ClusterRunRequest"));
  paths["/runs/{run_id}"]["get"] = op("Run status",
                                      merge(Json{{"200", json_response("run", "RunDescriptor")}}, error_responses({404})),
                                      nullptr, Json::array({pp("run_id")}));
  paths["/personas"]["get"] =
      op("Persona cards of the latest audience clustering",
         merge(Json{{"200", json_response("cards", "CardList")}}, error_responses({400, 404})), nullptr,
         Json::array({qp("dataset_id", true)}));
  paths["/challenges"]["get"] =
      op("Challenge cards of the latest insight clustering",
         merge(Json{{"200", json_response("cards", "CardList")}}, error_responses({400, 404})), nullptr,
         Json::array({qp("dataset_id", true)}));
  paths["/rank"]["post"] =
      op("Rank every creative of a dataset",
         merge(Json{{"200", json_response("ranking", "RankedList")}}, error_responses({400, 404, 502})),
         body("RankRequest"));
  paths["/evaluate"]["post"] =
      op("Evaluate stored rankings against observed CTR",
         merge(Json{{"200", json_response("report", "Report")}}, error_responses({400, 404})), body("EvaluateRequest"));
  paths["/opportunities"]["get"] =
      op("Persona x challenge opportunity matrix",
         merge(Json{{"200", json_response("matrix", "OpportunityMatrix")}}, error_responses({400, 404})), nullptr,
         Json::array({qp("dataset_id", true), qp("own", true), qp("competitor", true), qp("policy", false)}));
  paths["/stories"]["post"] =
      op("Generate a character and story for a persona and challenge",
         merge(Json{{"200", json_response("story", "Story")}}, error_responses({400, 404, 502})), body("StoryRequest"));
  paths["/spec"]["get"] = op("This document", Json{{"200", {{"description", "OpenAPI document"}}}});

  auto obj = [](Json props, std::vector<std::string> required = {}) {
    Json o{{"type", "object"}, {"properties", std::move(props)}};
    if (!required.empty()) o["required"] = required;
    return o;
  };
  const Json str{{"type", "string"}}, num{{"type", "number"}}, integer{{"type", "integer"}}, boolean{{"type", "boolean"}};
  auto arr = [](Json items) { return Json{{"type", "array"}, {"items", std::move(items)}}; };
  Json schemas;
  schemas["Error"] = obj({{"error", obj({{"code", str}, {"message", str}, {"details", arr(str)}, {"gateway_error", str}})}});
  schemas["DatasetRef"] = obj({{"path", str}, {"format", {{"type", "string"}, {"enum", {"jsonl", "csv"}}}}}, {"path"});
  schemas["DatasetHandle"] =
      obj({{"dataset_id", str}, {"item_count", integer}, {"source_path", str}, {"checksum", str}});
  schemas["DatasetStats"] = obj({{"dataset_id", str}, {"total", integer}, {"ads", integer}, {"organic", integer},
                                 {"per_brand", {{"type", "object"}}}});
  schemas["PillarRunRequest"] = obj({{"dataset_id", str}}, {"dataset_id"});
  schemas["ClusterRunRequest"] =
      obj({{"dataset_id", str}, {"pillar", {{"type", "string"}, {"enum", {"audience", "insight"}}}},
           {"config", obj({{"k0", integer}, {"k_max", integer}, {"seed", integer}, {"outlier_percentile", num}})}},
          {"dataset_id", "pillar"});
  schemas["RunDescriptor"] =
      obj({{"run_id", str},
           {"stage", {{"type", "string"}, {"enum", {"Pillars", "Clusters", "Ranking", "Evaluation", "Story"}}}},
           {"status", {{"type", "string"}, {"enum", {"Pending", "Running", "Done", "Failed"}}}},
           {"progress", num},
           {"error", {{"type", "string"}, {"nullable", true}}},
           {"dataset_id", str},
           {"request_digest", str},
           {"result", {{"nullable", true}}}});
  schemas["ClusterCard"] = obj({{"cluster_id", str}, {"name", str}, {"description", str}, {"member_count", integer},
                                {"per_brand", {{"type", "object"}}}, {"exemplar_ids", arr(str)}});
  schemas["CardList"] = obj({{"dataset_id", str}, {"run_id", str}, {"cards", arr(schema_ref("ClusterCard"))}});
  schemas["RankRequest"] =
      obj({{"dataset_id", str},
           {"ranker", {{"type", "string"}, {"enum", {"score", "llm"}}}},
           {"grounded", boolean},
           {"label", str},
           {"config", obj({{"alpha", num}, {"beta", num}, {"classifier", str}, {"runs", integer}, {"seed_base", integer},
                           {"temperature", num}, {"grounding_dataset_id", str}})}},
          {"dataset_id", "ranker"});
  schemas["RankedList"] = obj({{"dataset_id", str}, {"label", str}, {"candidate_ids", arr(str)},
                               {"scores", {{"type", "array"}, {"items", num}, {"nullable", true}}},
                               {"ranker", str}, {"grounded", boolean}, {"run_ids", arr(str)},
                               {"run_orderings", arr(arr(str))}, {"degraded", boolean}, {"failures", arr(str)}});
  schemas["EvaluateRequest"] =
      obj({{"dataset_id", str}, {"rankers", arr(str)},
           {"config", obj({{"relevance_size", integer}, {"cutoffs", arr(integer)}})}},
          {"dataset_id", "rankers"});
  schemas["MetricRow"] = obj({{"ranker", str}, {"brand", str}, {"objective", str}, {"ndcg_at", {{"type", "object"}}},
                              {"recall_at", {{"type", "object"}}}});
  schemas["Report"] = obj({{"dataset_id", str}, {"config", {{"type", "object"}}}, {"rows", arr(schema_ref("MetricRow"))},
                           {"table", str}});
  schemas["OpportunityCell"] = obj({{"persona_id", str}, {"challenge_id", str}, {"own_share", num},
                                    {"competitor_share", num}, {"gap", num}, {"volume", integer}});
  schemas["OpportunityMatrix"] = obj({{"dataset_id", str}, {"cells", arr(schema_ref("OpportunityCell"))},
                                      {"selected", obj({{"cell", schema_ref("OpportunityCell")}, {"underexploited", boolean}})}});
  schemas["StoryRequest"] = obj({{"persona_id", str}, {"challenge_id", str}, {"brand", str}},
                                {"persona_id", "challenge_id", "brand"});
  schemas["Story"] = obj({{"character", {{"type", "object"}}}, {"persona_name", str}, {"challenge_id", str},
                          {"challenge_name", str}, {"brand", str}, {"narrative", str}, {"concluding_insight", str},
                          {"dataset_id", str}, {"run_id", str}, {"request_digests", arr(str)}, {"brief", str},
                          {"brief_path", str}});

  return Json{{"openapi", "3.0.3"},
              {"info", {{"title", "somonitor API"}, {"version", "1.0.0"}}},
              {"paths", paths},
              {"components", {{"schemas", schemas}}}};
}

// ---- Server ----

struct Server::Impl {
  Engine& engine;
  RunManager runs;
  httplib::Server http;
  std::jthread thread;

  Impl(Engine& e, int workers) : engine(e), runs(workers) { routes(); }

  std::string dataset_digest(std::string_view stage, const std::string& dataset_id, const std::string& extra) {
    const auto handle = engine.store().handle(dataset_id);
    return text::sha256_hex(std::string(stage) + "\n" + dataset_id + "\n" + handle.checksum + "\n" + extra);
  }

  void respond_submission(httplib::Response& res, const RunManager::Submission& s) {
    send_json(res, s.cached ? 200 : 202, Json(s.run));
  }

  void routes() {
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
    http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty() && res.status == 404) {
        send_json(res, 404, Json{{"error", {{"code", "NotFound"}, {"message", "no route " + req.path}, {"details", Json::array()}}}});
      }
    });

    http.Get("/spec", guarded([](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, openapi_document());
             }));

    http.Post("/datasets", guarded([this](const httplib::Request& req, httplib::Response& res) {
                store::DatasetHandle handle;
                if (req.is_multipart_form_data()) {
                  if (!req.has_file("file")) throw Error(Errc::ValidationError, "multipart upload needs a 'file' field");
                  const auto file = req.get_file_value("file");
                  std::optional<std::string> format;
                  if (req.has_file("format")) format = req.get_file_value("format").content;
                  const auto fmt = format_for(format, file.filename);
                  const auto path = engine.store().root() / "uploads" /
                                    (text::sha256_hex(file.content).substr(0, 16) +
                                     (fmt == store::DatasetFormat::Csv ? ".csv" : ".jsonl"));
                  store::write_file_atomic(path, file.content);
                  handle = engine.ingest(path, fmt);
                } else {
                  const Json body = parse_body(req);
                  const std::string path = req_string(body, "path");
                  handle = engine.ingest(path, format_for(opt_string(body, "format"), path));
                }
                send_json(res, 201, Json(handle));
              }));

    http.Get("/datasets/:id/stats", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto handle = engine.store().handle(req.path_params.at("id"));
               Json j = engine.store().dataset_stats(handle);
               j["dataset_id"] = handle.dataset_id;
               send_json(res, 200, j);
             }));

    http.Post("/runs/pillars", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                const std::string dataset_id = req_string(body, "dataset_id");
                const auto tmpl = engine.prompt(templates::kPillars);
                const std::string digest = dataset_digest(
                    "pillars", dataset_id, pillars::batch_run_id(dataset_id, tmpl, engine.settings().backend_id));
                respond_submission(
                    res, runs.submit(Stage::Pillars, dataset_id, digest, [this, dataset_id](const auto& progress) {
                      const auto table = engine.run_pillars(dataset_id, progress);
                      return Json{{"artifact", {{"kind", pillars::kArtifactKind}, {"dataset_id", dataset_id},
                                                {"run_id", table.run_id}}},
                                  {"rows", table.rows.size()},
                                  {"failures", table.failures}};
                    }));
              }));

    http.Post("/runs/clusters", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                const std::string dataset_id = req_string(body, "dataset_id");
                cluster::ClusterConfig config = engine.settings().cluster;
                config.pillar = cluster::parse_pillar(req_string(body, "pillar"));
                if (auto* c = field(body, "config", Json::value_t::object, false, "an object")) {
                  if (auto v = opt_int(*c, "k0")) config.k0 = static_cast<int>(*v);
                  if (auto v = opt_int(*c, "k_max")) config.k_max = static_cast<int>(*v);
                  if (auto v = opt_int(*c, "seed")) config.seed = static_cast<std::uint64_t>(*v);
                  if (auto v = opt_number(*c, "outlier_percentile")) config.outlier_percentile = *v;
                }
                config.validate();
                const auto tmpl = engine.prompt(templates::kAnnotate);
                std::string pillar_run = "none";
                try {
                  pillar_run = pillars::load_latest(engine.store(), dataset_id).run_id;
                } catch (const Error&) {
                }
                const std::string digest =
                    dataset_digest("clusters", dataset_id,
                                   Json(config).dump() + "\n" + pillar_run + "\n" + engine.settings().backend_id + "\n" +
                                       engine.settings().embed_backend_id + "\n" + tmpl.body);
                // Persona and challenge runs are separate stages of the same dataset.
                const Stage stage = Stage::Clusters;
                const std::string key = dataset_id + "#" + std::string(cluster::to_string(config.pillar));
                respond_submission(res, runs.submit(stage, key, digest, [this, dataset_id, config](const auto& progress) {
                  const auto run = engine.run_clusters(dataset_id, config, progress);
                  return Json{{"artifact", {{"kind", cluster::kArtifactKind}, {"dataset_id", dataset_id},
                                            {"run_id", run.run_id}}},
                              {"k", run.centroids.rows()},
                              {"excluded", run.excluded.size()},
                              {"cards", run.cards}};
                }));
              }));

    http.Get("/runs/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto run = runs.get(req.path_params.at("id"));
               if (!run) throw Error(Errc::NotFound, "no run '" + req.path_params.at("id") + "'");
               Json j = *run;
               // Cluster runs are keyed per pillar internally; report the dataset.
               const auto hash = run->dataset_id.find('#');
               if (hash != std::string::npos) j["dataset_id"] = run->dataset_id.substr(0, hash);
               send_json(res, 200, j);
             }));

    auto cards_route = [this](cluster::Pillar pillar) {
      return guarded([this, pillar](const httplib::Request& req, httplib::Response& res) {
        const std::string dataset_id = query(req, "dataset_id");
        engine.store().handle(dataset_id);
        const auto run = cluster::load_run(engine.store(), dataset_id, pillar);
        send_json(res, 200, Json{{"dataset_id", dataset_id}, {"run_id", run.run_id}, {"cards", run.cards}});
      });
    };
    http.Get("/personas", cards_route(cluster::Pillar::Audience));
    http.Get("/challenges", cards_route(cluster::Pillar::Insight));

    http.Post("/rank", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                RankRequest r;
                r.dataset_id = req_string(body, "dataset_id");
                r.ranker = req_string(body, "ranker");
                if (r.ranker != "score" && r.ranker != "llm") {
                  throw Error(Errc::ValidationError, "field 'ranker' must be 'score' or 'llm'", {"ranker"});
                }
                r.grounded = opt_bool(body, "grounded");
                r.label = opt_string(body, "label");
                r.settings = engine.settings().rank;
                if (auto* c = field(body, "config", Json::value_t::object, false, "an object")) {
                  if (auto v = opt_number(*c, "alpha")) r.settings.layer.alpha = *v;
                  if (auto v = opt_number(*c, "beta")) r.settings.layer.beta = *v;
                  if (auto v = opt_string(*c, "classifier")) r.settings.classifier = *v;
                  if (auto v = opt_int(*c, "runs")) r.settings.ensemble_runs = static_cast<int>(*v);
                  if (auto v = opt_int(*c, "seed_base")) r.settings.seed_base = *v;
                  if (auto v = opt_number(*c, "temperature")) r.settings.temperature = *v;
                  if (auto v = opt_string(*c, "grounding_dataset_id")) r.settings.grounding_dataset_id = *v;
                }
                engine.store().handle(r.dataset_id);
                if (!r.settings.grounding_dataset_id.empty()) engine.store().handle(r.settings.grounding_dataset_id);
                Json j = engine.run_rank(r);
                j["label"] = default_rank_label(r);
                send_json(res, 200, j);
              }));

    http.Post("/evaluate", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                const std::string dataset_id = req_string(body, "dataset_id");
                const Json* rankers = field(body, "rankers", Json::value_t::array, true, "an array of labels");
                std::vector<std::string> labels;
                for (const auto& l : *rankers) {
                  if (!l.is_string()) throw Error(Errc::ValidationError, "rankers must be strings", {"rankers"});
                  labels.push_back(l.get<std::string>());
                }
                eval::EvalConfig config = engine.settings().eval;
                if (auto* c = field(body, "config", Json::value_t::object, false, "an object")) {
                  if (auto v = opt_int(*c, "relevance_size")) config.relevance_size = static_cast<int>(*v);
                  if (auto* cut = field(*c, "cutoffs", Json::value_t::array, false, "an array of integers")) {
                    config.cutoffs.clear();
                    for (const auto& k : *cut) {
                      if (!k.is_number_integer()) throw Error(Errc::ValidationError, "cutoffs must be integers");
                      config.cutoffs.push_back(k.get<int>());
                    }
                  }
                }
                engine.store().handle(dataset_id);
                send_json(res, 200, Json(engine.run_evaluate(dataset_id, labels, config)));
              }));

    http.Get("/opportunities", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string dataset_id = query(req, "dataset_id");
               const auto cells = engine.opportunities(dataset_id, query(req, "own"), query(req, "competitor"));
               const auto policy = req.has_param("policy") ? story::parse_policy(req.get_param_value("policy"))
                                                           : engine.settings().story_policy;
               const auto selected = story::select_opportunity(cells, policy);
               send_json(res, 200,
                         Json{{"dataset_id", dataset_id},
                              {"cells", cells},
                              {"selected", {{"cell", selected.cell}, {"underexploited", selected.underexploited}}}});
             }));

    http.Post("/stories", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                const auto result =
                    engine.run_story(req_string(body, "persona_id"), req_string(body, "challenge_id"), req_string(body, "brand"));
                Json j = result.story;
                j["brief"] = result.brief;
                j["brief_path"] = result.brief_path.string();
                send_json(res, 200, j);
              }));
  }
};

Server::Server(Engine& engine, int workers) : impl_(std::make_unique<Impl>(engine, workers)) {}

Server::~Server() { stop(); }

bool Server::listen(const std::string& host, int port) { return impl_->http.listen(host, port); }

int Server::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(Errc::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::jthread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace somonitor::api
