#include <doctest.h>

#include <chrono>
#include <latch>
#include <thread>

#include "somonitor/api.hpp"
#include "somonitor/synthetic.hpp"
#include "support.hpp"

// After Eigen: resolv.h defines a macro named _res.
#include <httplib.h>

using namespace somonitor;
using namespace std::chrono_literals;

namespace {

// Engine plus a server on a free local port, torn down in reverse order.
struct Service {
  testing::TempDir dir;
  Engine engine;
  api::Server server;
  int port;
  httplib::Client client;

  explicit Service(const std::string& backend = "offline")
      : engine([&] {
          Settings s;
          s.store_dir = dir / "store";
          s.backend_id = backend;
          s.gateway.base_backoff = 0ms;
          return s;
        }()),
        server(engine, 2),
        port(server.start("127.0.0.1", 0)),
        client("127.0.0.1", port) {
    client.set_read_timeout(60, 0);
  }

  httplib::Result post(const std::string& path, const Json& body) {
    return client.Post(path, body.dump(), "application/json");
  }

  std::string ingest(const std::vector<AdCreative>& ads, const std::string& name = "ads.jsonl") {
    synthetic::write_jsonl((dir / name).string(), ads);
    auto res = post("/datasets", {{"path", (dir / name).string()}});
    REQUIRE(res);
    REQUIRE(res->status == 201);
    return Json::parse(res->body)["dataset_id"];
  }

  // Polls GET /runs/{id} until the run settles; returns every observed descriptor.
  std::vector<Json> poll(const std::string& run_id) {
    std::vector<Json> seen;
    for (int i = 0; i < 6000; ++i) {
      auto res = client.Get("/runs/" + run_id);
      REQUIRE(res);
      REQUIRE(res->status == 200);
      seen.push_back(Json::parse(res->body));
      const std::string status = seen.back()["status"];
      if (status == "Done" || status == "Failed") break;
      std::this_thread::sleep_for(10ms);
    }
    return seen;
  }
};

Json body_of(const httplib::Result& res) { return Json::parse(res->body); }

cluster::ClusterCard fixture_card(const std::string& id, const std::string& name, std::size_t count) {
  cluster::ClusterCard c;
  c.cluster_id = id;
  c.name = name;
  c.description = name + " description";
  c.member_count = count;
  c.per_brand["Zipto"] = {count, 1.0};
  return c;
}

}  // namespace

TEST_CASE("run manager lifecycle") {
  api::RunManager runs(1);
  std::latch started(1), release(1);
  auto first = runs.submit(api::Stage::Pillars, "ds", "d1", [&](const api::RunManager::ReportProgress& p) {
    started.count_down();
    release.wait();
    p(0.5);
    p(0.2);  // ignored: progress never goes backwards
    p(3.0);
    return Json{{"ok", true}};
  });
  CHECK_FALSE(first.cached);
  started.wait();
  try {
    runs.submit(api::Stage::Pillars, "ds", "d2", [](const auto&) { return Json(); });
    FAIL("expected Conflict");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Conflict);
  }
  CHECK_NOTHROW(runs.submit(api::Stage::Clusters, "ds", "d3", [](const auto&) { return Json(); }));
  release.count_down();

  std::optional<api::RunDescriptor> d;
  for (int i = 0; i < 1000; ++i) {
    d = runs.get(first.run.run_id);
    if (d && d->status == api::RunStatus::Done) break;
    std::this_thread::sleep_for(5ms);
  }
  REQUIRE(d);
  CHECK(d->status == api::RunStatus::Done);
  CHECK(d->progress == 1.0);
  CHECK(d->result == Json{{"ok", true}});

  const auto again = runs.submit(api::Stage::Pillars, "ds", "d1", [](const auto&) { return Json(); });
  CHECK(again.cached);
  CHECK(again.run.run_id == first.run.run_id);

  auto failing = runs.submit(api::Stage::Story, "ds", "d4", [](const auto&) -> Json {
    throw Error(Errc::BackendUnavailable, "down");
  });
  for (int i = 0; i < 1000; ++i) {
    d = runs.get(failing.run.run_id);
    if (d->status == api::RunStatus::Failed) break;
    std::this_thread::sleep_for(5ms);
  }
  CHECK(d->status == api::RunStatus::Failed);
  CHECK(d->error.value_or("").find("down") != std::string::npos);
  CHECK_FALSE(runs.get("run-missing"));
}

TEST_CASE("error codes map to HTTP statuses") {
  CHECK(api::http_status(Errc::ValidationError) == 400);
  CHECK(api::http_status(Errc::InvalidArgument) == 400);
  CHECK(api::http_status(Errc::UnknownDataset) == 404);
  CHECK(api::http_status(Errc::NotFound) == 404);
  CHECK(api::http_status(Errc::Conflict) == 409);
  CHECK(api::http_status(Errc::BackendUnavailable) == 502);
  CHECK(api::http_status(Errc::AllRunsFailed) == 502);
}

TEST_CASE("service basics: spec, CORS, unknown routes, validation") {
  Service svc;
  auto spec = svc.client.Get("/spec");
  REQUIRE(spec);
  CHECK(spec->status == 200);
  const Json doc = body_of(spec);
  CHECK(doc["openapi"] == "3.0.3");
  for (const char* path : {"/datasets", "/datasets/{dataset_id}/stats", "/runs/pillars", "/runs/clusters", "/runs/{run_id}",
                           "/personas", "/challenges", "/rank", "/evaluate", "/opportunities", "/stories"}) {
    CHECK_MESSAGE(doc["paths"].contains(path), path);
  }
  CHECK(spec->get_header_value("Access-Control-Allow-Origin") == "*");

  auto pre = svc.client.Options("/rank");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  auto missing = svc.client.Get("/nope");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(body_of(missing)["error"]["code"] == "NotFound");

  auto bad_json = svc.client.Post("/rank", "{not json", "application/json");
  CHECK(bad_json->status == 400);
  CHECK(body_of(bad_json)["error"]["code"] == "ValidationError");
  auto wrong_type = svc.post("/rank", {{"dataset_id", 5}, {"ranker", "score"}});
  CHECK(wrong_type->status == 400);
  auto no_field = svc.post("/runs/pillars", Json::object());
  CHECK(no_field->status == 400);
  CHECK(body_of(no_field)["error"]["details"] == Json::array({"dataset_id"}));
  CHECK(svc.client.Get("/datasets/ds-unknown/stats")->status == 404);
  CHECK(svc.client.Get("/runs/run-999999")->status == 404);
  CHECK(svc.client.Get("/personas?dataset_id=ds-unknown")->status == 404);
}

TEST_CASE("dataset upload by path and multipart") {
  Service svc;
  const auto ads = synthetic::brand_split_corpus(6, 4);
  const std::string id = svc.ingest(ads);
  auto stats = svc.client.Get("/datasets/" + id + "/stats");
  REQUIRE(stats);
  CHECK(stats->status == 200);
  const Json s = body_of(stats);
  CHECK(s["total"] == 10);
  CHECK(s["dataset_id"] == id);

  std::string csv = "id,brand,objective,kind,text,impressions,clicks,published_at\n";
  csv += "u1,Zipto,Sales,Ad,\"Hello, world\",100,4,2024-01-01\n";
  csv += "u2,Rydex,Sales,Ad,Bye,100,2,2024-01-02\n";
  httplib::MultipartFormDataItems items = {{"file", csv, "upload.csv", "text/csv"}};
  auto up = svc.client.Post("/datasets", items);
  REQUIRE(up);
  CHECK(up->status == 201);
  CHECK(body_of(up)["item_count"] == 2);

  auto bad = svc.post("/datasets", {{"path", (svc.dir / "missing.jsonl").string()}});
  CHECK(bad->status == 400);
  CHECK(body_of(bad)["error"]["code"] == "ParseError");
}

TEST_CASE("personas come from the latest cluster run") {
  Service svc;
  const std::string id = svc.ingest(synthetic::brand_split_corpus(3, 3));
  cluster::ClusterRun run;
  run.dataset_id = id;
  run.run_id = "clusters-fixture";
  run.centroids = cluster::Matrix::Zero(3, 2);
  run.cards = {fixture_card(id + ":P1", "Efficiency Enthusiasts", 206), fixture_card(id + ":P2", "Budget Riders", 144),
               fixture_card(id + ":P3", "Night Owls", 707)};
  svc.engine.store().put_artifact({"clusters", id, "latest-audience"}, Json(run));

  auto res = svc.client.Get("/personas?dataset_id=" + id);
  REQUIRE(res);
  CHECK(res->status == 200);
  const Json body = body_of(res);
  REQUIRE(body["cards"].size() == 3);
  CHECK(body["cards"][0]["member_count"] == 206);
  CHECK(body["cards"][1]["member_count"] == 144);
  CHECK(body["cards"][2]["member_count"] == 707);
  CHECK(body["run_id"] == "clusters-fixture");
  CHECK(body["dataset_id"] == id);
  CHECK(svc.client.Get("/challenges?dataset_id=" + id)->status == 404);

  auto story = svc.post("/stories", {{"persona_id", id + ":P9"}, {"challenge_id", id + ":C1"}, {"brand", "Zipto"}});
  CHECK(story->status == 404);
}

TEST_CASE("full pipeline over HTTP") {
  Service svc;
  const std::string id = svc.ingest(synthetic::demo_corpus());

  auto submitted = svc.post("/runs/pillars", {{"dataset_id", id}});
  REQUIRE(submitted);
  CHECK(submitted->status == 202);
  const std::string run_id = body_of(submitted)["run_id"];
  auto dup = svc.post("/runs/pillars", {{"dataset_id", id}});
  CHECK(dup->status == 409);
  CHECK(body_of(dup)["error"]["code"] == "Conflict");

  const auto seen = svc.poll(run_id);
  double last = 0.0;
  for (const auto& d : seen) {
    CHECK(d["progress"].get<double>() >= last);
    last = d["progress"];
    CHECK(d["dataset_id"] == id);
  }
  REQUIRE(seen.back()["status"] == "Done");
  CHECK(seen.back()["progress"] == 1.0);
  CHECK(seen.back()["result"]["rows"] == 200);

  auto cached = svc.post("/runs/pillars", {{"dataset_id", id}});
  CHECK(cached->status == 200);
  CHECK(body_of(cached)["run_id"] == run_id);

  for (const char* pillar : {"audience", "insight"}) {
    auto c = svc.post("/runs/clusters", {{"dataset_id", id}, {"pillar", pillar}, {"config", {{"seed", 42}}}});
    REQUIRE(c);
    CHECK(c->status == 202);
    const auto done = svc.poll(body_of(c)["run_id"]);
    REQUIRE(done.back()["status"] == "Done");
    CHECK(done.back()["result"]["k"].get<int>() >= 2);
  }
  const Json personas = body_of(svc.client.Get("/personas?dataset_id=" + id));
  const Json challenges = body_of(svc.client.Get("/challenges?dataset_id=" + id));
  CHECK(personas["cards"].size() >= 2);
  CHECK(challenges["cards"].size() >= 2);
  CHECK(svc.post("/runs/clusters", {{"dataset_id", id}, {"pillar", "tone"}})->status == 400);

  auto ranked = svc.post("/rank", {{"dataset_id", id}, {"ranker", "score"}});
  REQUIRE(ranked);
  CHECK(ranked->status == 200);
  CHECK(body_of(ranked)["candidate_ids"].size() == 200);
  CHECK(body_of(ranked)["label"] == "score");
  CHECK(svc.post("/rank", {{"dataset_id", id}, {"ranker", "magic"}})->status == 400);

  auto report = svc.post("/evaluate", {{"dataset_id", id}, {"rankers", {"score"}}});
  REQUIRE(report);
  CHECK(report->status == 200);
  CHECK_FALSE(body_of(report)["rows"].empty());
  CHECK(svc.post("/evaluate", {{"dataset_id", id}, {"rankers", {"nope"}}})->status == 404);

  auto opp = svc.client.Get("/opportunities?dataset_id=" + id + "&own=Zipto&competitor=Rydex");
  REQUIRE(opp);
  CHECK(opp->status == 200);
  const Json selected = body_of(opp)["selected"]["cell"];
  CHECK(svc.client.Get("/opportunities?dataset_id=" + id + "&own=Zipto&competitor=Nobody")->status == 400);

  auto story = svc.post("/stories", {{"persona_id", selected["persona_id"]},
                                     {"challenge_id", selected["challenge_id"]},
                                     {"brand", "Zipto"}});
  REQUIRE(story);
  CHECK(story->status == 200);
  const Json s = body_of(story);
  CHECK_FALSE(s["concluding_insight"].get<std::string>().empty());
  CHECK(s["brief"].get<std::string>().rfind("# Content brief: Zipto", 0) == 0);
}

TEST_CASE("backend failures surface as 502 with gateway detail") {
  Service svc("missing-backend");
  const std::string id = svc.ingest(synthetic::brand_split_corpus(4, 0));
  auto res = svc.post("/rank", {{"dataset_id", id}, {"ranker", "llm"}, {"config", {{"runs", 2}}}});
  REQUIRE(res);
  CHECK(res->status == 502);
  const Json err = body_of(res)["error"];
  CHECK(err["code"] == "AllRunsFailed");
  CHECK(err.contains("gateway_error"));
}
