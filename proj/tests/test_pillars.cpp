#include <doctest.h>

#include <algorithm>
#include <random>

#include "somonitor/error.hpp"
#include "somonitor/offline_backends.hpp"
#include "somonitor/pillars.hpp"
#include "somonitor/templates.hpp"
#include "support.hpp"

using namespace somonitor;
using namespace somonitor::pillars;

namespace {

Error error_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(Errc::InvalidArgument, "");
}

const char* kWellFormed = "Audience: SMEs\nNeed: savings\nInsight: time is money\nProduct: rides\nArchetype: Ruler\nTone: confident";

std::string canned(const std::string& ad_text) {
  return "Audience: readers of " + ad_text + "\nNeed: n\nInsight: i\nProduct: p\nArchetype: Sage\nTone: calm";
}

std::vector<AdCreative> ten_ads() {
  std::vector<AdCreative> ads;
  for (int i = 0; i < 10; ++i) ads.push_back(testing::make_ad("ad-" + std::to_string(i), 1, 100));
  return ads;
}

// Backend that answers well-formed pillars except for the listed ad ids.
std::shared_ptr<llm::CallbackBackend> malformed_for(std::set<std::string> bad_ids) {
  return testing::callback([bad_ids](const llm::CompletionRequest& r) {
    const std::string& ad_text = r.bindings.at("ad_text");
    for (const auto& id : bad_ids) {
      if (ad_text == "Creative " + id + " from Zipto") return std::string("I cannot help with that.");
    }
    return canned(ad_text);
  });
}

}  // namespace

TEST_CASE("well-formed response parses into six fields") {
  const auto p = parse_pillar_response(kWellFormed);
  CHECK(p.audience == "SMEs");
  CHECK(p.need == "savings");
  CHECK(p.insight == "time is money");
  CHECK(p.product == "rides");
  CHECK(p.archetype == "Ruler");
  CHECK(p.tone == "confident");
  CHECK(p.raw_response == kWellFormed);
}

TEST_CASE("field order, key case and surrounding prose do not matter") {
  const std::string shuffled =
      "Sure! Here is the analysis.\n"
      "tone:   confident  \n- **archetype:** Ruler\nPRODUCT: rides\ninsight: time is money\nneed: savings\n"
      "audience: SMEs\nExtra: ignored\nHope this helps.";
  auto a = parse_pillar_response(kWellFormed);
  auto b = parse_pillar_response(shuffled);
  a.raw_response.clear();
  b.raw_response.clear();
  CHECK(a == b);
}

TEST_CASE("absent fields are listed") {
  auto e = error_of([] { parse_pillar_response("Audience: SMEs"); });
  CHECK(e.code() == Errc::ExtractionIncomplete);
  CHECK(e.details() == std::vector<std::string>{"need", "insight", "product", "archetype", "tone"});

  e = error_of([] { parse_pillar_response("Audience: a\nNeed: b\nProduct: d\nArchetype: e\nTone: f"); });
  CHECK(e.details() == std::vector<std::string>{"insight"});

  e = error_of([] { parse_pillar_response("Audience: a\nNeed:\nInsight: c\nProduct: d\nArchetype: e\nTone: f"); });
  CHECK(e.details() == std::vector<std::string>{"need"});
}

TEST_CASE("format then parse is the identity") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> words = {"busy", "parents", "save", "time", "ride", "Ruler", "Sage", "warm", "café"};
  for (int trial = 0; trial < 200; ++trial) {
    auto phrase = [&] {
      std::string s = words[rng() % words.size()];
      for (std::uint64_t i = rng() % 4; i > 0; --i) s += " " + words[rng() % words.size()];
      return s;
    };
    ContentPillars p{phrase(), phrase(), phrase(), phrase(), phrase(), phrase(), ""};
    const std::string text = format_pillars(p);
    p.raw_response = text;
    CHECK(parse_pillar_response(text) == p);
  }
}

TEST_CASE("extract_pillars with a scripted fixture") {
  llm::Gateway gw(testing::fast_gateway());
  auto scripted = std::make_shared<llm::ScriptedBackend>();
  const auto ad = testing::make_ad("t1", 10, 1000, "Zipto", "Stay connected with family abroad.");
  scripted->add(std::string(templates::kPillars), {{"ad_text", ad.text}, {"brand", "Zipto"}}, kWellFormed);
  gw.register_backend("scripted", scripted);
  const auto tmpl = templates::builtin(templates::kPillars);
  CHECK(extract_pillars(ad, tmpl, "scripted", gw).archetype == "Ruler");

  auto other = ad;
  other.text = "Different";
  CHECK(error_of([&] { extract_pillars(other, tmpl, "scripted", gw); }).code() == Errc::BackendUnavailable);

  auto empty = ad;
  empty.text.clear();
  CHECK(error_of([&] { extract_pillars(empty, tmpl, "scripted", gw); }).code() == Errc::InvalidArgument);

  const auto bad_tmpl = llm::PromptTemplate::from_body("x", "Ad: {ad_text}");
  CHECK(error_of([&] { extract_pillars(ad, bad_tmpl, "scripted", gw); }).code() == Errc::InvalidArgument);
}

TEST_CASE("image-only ads are described to the model") {
  auto ad = testing::make_ad("img", 1, 10);
  ad.text.clear();
  ad.image_ref = "s3://ads/img.png";
  CHECK(ad_prompt_text(ad).find("s3://ads/img.png") != std::string::npos);
}

TEST_CASE("telecom ad yields a human need and an archetype offline") {
  llm::Gateway gw;
  llm::register_offline_backends(gw);
  const auto ad = testing::make_ad("tel", 10, 1000, "Telco",
                                   "Families spread across cities stay close with unlimited video calls. "
                                   "Because distance should never mean silence. Switch to Telco today.");
  const auto p = extract_pillars(ad, templates::builtin(templates::kPillars), "offline", gw);
  CHECK_FALSE(p.need.empty());
  CHECK_FALSE(p.archetype.empty());
}

TEST_CASE("batch extraction tolerates failures up to the ceiling") {
  testing::TempDir dir;
  store::Store st(dir / "store");
  const auto h = st.import_records(ten_ads(), "ten");
  const auto tmpl = templates::builtin(templates::kPillars);

  llm::Gateway gw(testing::fast_gateway());
  gw.register_backend("clean", malformed_for({}));
  gw.register_backend("one-bad", malformed_for({"ad-3"}));
  gw.register_backend("five-bad", malformed_for({"ad-0", "ad-2", "ad-4", "ad-6", "ad-8"}));

  const auto clean = batch_extract(st, h, tmpl, "clean", gw);
  CHECK(clean.rows.size() == 10);
  CHECK(clean.failures.empty());

  const auto one = batch_extract(st, h, tmpl, "one-bad", gw);
  CHECK(one.rows.size() == 9);
  REQUIRE(one.failures.size() == 1);
  CHECK(one.failures.count("ad-3") == 1);
  CHECK_FALSE(one.rows.count("ad-3"));

  CHECK(error_of([&] { batch_extract(st, h, tmpl, "five-bad", gw); }).code() == Errc::BatchFailureRateExceeded);

  BatchOptions lenient;
  lenient.max_failure_rate = 0.5;
  CHECK(batch_extract(st, h, tmpl, "five-bad", gw, lenient).failures.size() == 5);
}

TEST_CASE("batch table is persisted and reproducible") {
  testing::TempDir dir;
  store::Store st(dir / "store");
  const auto h = st.import_records(ten_ads(), "ten");
  const auto tmpl = templates::builtin(templates::kPillars);
  llm::Gateway gw(testing::fast_gateway());
  gw.register_backend("clean", malformed_for({"ad-5"}));

  std::vector<double> progress;
  BatchOptions opts;
  opts.on_progress = [&](double p) { progress.push_back(p); };
  const auto first = batch_extract(st, h, tmpl, "clean", gw, opts);
  const std::string bytes = store::read_file(st.artifact_path({"pillars", h.dataset_id, first.run_id}));
  const auto second = batch_extract(st, h, tmpl, "clean", gw);
  CHECK(store::read_file(st.artifact_path({"pillars", h.dataset_id, second.run_id})) == bytes);
  CHECK(first.run_id == second.run_id);

  const auto loaded = load_latest(st, h.dataset_id);
  CHECK(Json(loaded) == Json(first));
  CHECK(progress.size() == 10);
  CHECK(std::is_sorted(progress.begin(), progress.end()));
  CHECK(progress.back() == 1.0);

  std::set<std::string> covered;
  for (const auto& [id, _] : first.rows) covered.insert(id);
  for (const auto& [id, _] : first.failures) CHECK(covered.insert(id).second);
  CHECK(covered.size() == 10);
}

TEST_CASE("batch output does not depend on input order") {
  testing::TempDir dir;
  store::Store st(dir / "store");
  const auto tmpl = templates::builtin(templates::kPillars);
  llm::Gateway gw(testing::fast_gateway());
  gw.register_backend("b", malformed_for({"ad-7"}));
  auto ads = ten_ads();
  const auto reference = batch_extract(st, st.import_records(ads, "a"), tmpl, "b", gw);
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(ads.begin(), ads.end(), rng);
    store::Store other(dir / ("s" + std::to_string(trial)));
    const auto t = batch_extract(other, other.import_records(ads, "b"), tmpl, "b", gw);
    CHECK(Json(t.rows) == Json(reference.rows));
    CHECK(t.failures == reference.failures);
  }
}
