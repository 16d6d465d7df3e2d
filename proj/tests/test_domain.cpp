#include <doctest.h>

#include <random>

#include "somonitor/domain.hpp"
#include "somonitor/error.hpp"
#include "support.hpp"

using namespace somonitor;

namespace {

Errc code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_CASE("ctr divides clicks by impressions") {
  const auto c = ctr(40, 1000);
  CHECK(c.value == doctest::Approx(0.04));
  CHECK(c.derived);
  CHECK(c.clicks == 40);
  CHECK(c.impressions == 1000);
  CHECK(ctr(0, 1000).value == 0.0);
}

TEST_CASE("ctr rejects impossible counters") {
  CHECK(code_of([] { ctr(5, 0); }) == Errc::ZeroImpressions);
  CHECK(code_of([] { ctr(11, 10); }) == Errc::ClicksExceedImpressions);
}

TEST_CASE("ctr is monotone in clicks and antitone in impressions") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::uint64_t imp = 1 + rng() % 100000;
    const std::uint64_t c1 = rng() % (imp + 1), c2 = rng() % (imp + 1);
    CHECK((c1 <= c2) == (ctr(c1, imp).value <= ctr(c2, imp).value));
    const std::uint64_t clicks = rng() % 50;
    const std::uint64_t i1 = clicks + 1 + rng() % 1000, i2 = clicks + 1 + rng() % 1000;
    if (i1 <= i2) CHECK(ctr(clicks, i1).value >= ctr(clicks, i2).value);
  }
}

TEST_CASE("tercile labels follow the boundary convention") {
  const CtrThresholds t{0.01, 0.03};
  CHECK(tercile_label(0.05, t) == CtrLabel::High);
  CHECK(tercile_label(0.02, t) == CtrLabel::Average);
  CHECK(tercile_label(0.01, t) == CtrLabel::Average);
  CHECK(tercile_label(0.03, t) == CtrLabel::High);
  CHECK(tercile_label(0.0099, t) == CtrLabel::Low);
  CHECK(code_of([] { tercile_label(0.5, {0.3, 0.2}); }) == Errc::InvalidThresholds);
}

TEST_CASE("tercile labels partition [0,1] into three contiguous intervals") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    int changes = 0;
    CtrLabel prev = tercile_label(0.0, {lo, hi});
    for (int i = 1; i <= 1000; ++i) {
      const CtrLabel cur = tercile_label(i / 1000.0, {lo, hi});
      CHECK(static_cast<int>(cur) >= static_cast<int>(prev));
      changes += cur != prev;
      prev = cur;
    }
    CHECK(changes <= 2);
  }
}

TEST_CASE("ad invariants") {
  auto ad = testing::make_ad("a", 5, 10);
  CHECK_FALSE(validate(ad));
  ad.clicks = 11;
  CHECK(validate(ad));
  ad.clicks = 1;
  ad.text.clear();
  CHECK(validate(ad));
  ad.image_ref = "img://1";
  CHECK_FALSE(validate(ad));
}

TEST_CASE("timestamps accept bare dates and print ISO-8601") {
  CHECK(format_timestamp(parse_timestamp("2024-06-01")) == "2024-06-01T00:00:00Z");
  CHECK(format_timestamp(parse_timestamp("2024-06-01T13:45:07Z")) == "2024-06-01T13:45:07Z");
}

TEST_CASE("records round-trip through JSON") {
  auto ad = testing::make_ad("ad-9", 3, 77, "Rydex", "Line one\nline \"two\" é");
  ad.image_ref = "s3://bucket/x.png";
  ad.kind = ContentKind::Organic;
  ad.objective = Objective::Traffic;
  const Json j = ad;
  CHECK(j.get<AdCreative>() == ad);
  CHECK(Json::parse(j.dump()).get<AdCreative>() == ad);

  ContentPillars p{"a", "n", "i", "p", "Ruler", "calm", "raw\ntext"};
  CHECK(Json(p).get<ContentPillars>() == p);

  const CtrDistribution d{0.7, 0.2, 0.1};
  const auto d2 = Json(d).get<CtrDistribution>();
  CHECK(d2.p_high == d.p_high);
  CHECK(d2.p_avg == d.p_avg);
  CHECK(d2.p_low == d.p_low);
  CHECK(is_simplex(d));
  CHECK_FALSE(is_simplex({0.5, 0.5, 0.1}));
}

TEST_CASE("enum names parse back") {
  for (auto o : {Objective::Sales, Objective::Conversion, Objective::Traffic, Objective::Other}) {
    CHECK(parse_objective(to_string(o)) == o);
  }
  for (auto k : {ContentKind::Ad, ContentKind::Organic}) CHECK(parse_kind(to_string(k)) == k);
}
