#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "somonitor/error.hpp"
#include "somonitor/eval.hpp"
#include "support.hpp"

using namespace somonitor;
using namespace somonitor::eval;

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

using Ids = std::vector<std::string>;

rank::RankedList ranked(const Ids& ids) {
  rank::RankedList r;
  r.candidate_ids = ids;
  return r;
}

// Sixteen ads with distinct CTRs; ad-i has CTR (i+1)/1000.
std::vector<AdCreative> sixteen() {
  std::vector<AdCreative> ads;
  for (int i = 0; i < 16; ++i) {
    ads.push_back(testing::make_ad("ad-" + std::string(i < 10 ? "0" : "") + std::to_string(i),
                                   static_cast<std::uint64_t>(i + 1), 1000));
  }
  return ads;
}

}  // namespace

TEST_CASE("nDCG hand values") {
  CHECK(ndcg_at_k({"a", "b"}, {"a"}, 2).value == doctest::Approx(1.0));
  CHECK(ndcg_at_k({"b", "a"}, {"a"}, 2).value == doctest::Approx(0.6309).epsilon(1e-4));
  CHECK(ndcg_at_k({"b", "a"}, {"a"}, 2).value == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k({"a", "x", "b"}, {"a", "b"}, 3).value == doctest::Approx(0.9197).epsilon(1e-4));
  CHECK(ndcg_at_k({"a", "x", "b"}, {"a", "b"}, 3).value ==
        doctest::Approx(1.5 / (1.0 + 1.0 / std::log2(3.0))).epsilon(1e-12));
  const auto empty = ndcg_at_k({"a"}, {}, 1);
  CHECK(empty.undefined_ideal);
  CHECK(empty.value == 0.0);
}

TEST_CASE("recall hand values") {
  const std::set<std::string> rel = {"a", "b", "c", "d", "e"};
  CHECK(recall_at_k({"a", "b", "c", "x", "y", "d"}, rel, 3) == doctest::Approx(0.6));
  CHECK(recall_at_k({"x", "y", "z", "a"}, rel, 3) == 0.0);
  CHECK(recall_at_k({"e", "d", "c", "b", "a", "x"}, rel, 5) == 1.0);
  CHECK(recall_at_k({"a", "b"}, {"a", "b"}, 10) == 1.0);
  CHECK(code_of([&] { recall_at_k({"a"}, {}, 1); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { recall_at_k({"a"}, {"a"}, 0); }) == Errc::InvalidArgument);
}

TEST_CASE("metrics agree with an exhaustive oracle on small sets") {
  for (int n = 1; n <= 6; ++n) {
    Ids ids;
    for (int i = 0; i < n; ++i) ids.push_back(std::string(1, static_cast<char>('a' + i)));
    for (int r = 1; r <= n; ++r) {
      const std::set<std::string> rel(ids.begin(), ids.begin() + r);
      Ids perm = ids;
      do {
        for (int k = 1; k <= n + 1; ++k) {
          const double ideal = oracle::ideal_dcg_bruteforce(ids, rel, k);
          CHECK(std::abs(ndcg_at_k(perm, rel, k).value - oracle::ndcg(perm, rel, k, ideal)) <= 1e-12);
          CHECK(recall_at_k(perm, rel, k) == oracle::recall(perm, rel, k));
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
}

TEST_CASE("metric properties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 12);
    Ids ids;
    for (int i = 0; i < n; ++i) ids.push_back("ad-" + std::to_string(i));
    std::shuffle(ids.begin(), ids.end(), rng);
    const int r = 1 + static_cast<int>(rng() % n);
    std::set<std::string> rel;
    for (int i = 0; i < r; ++i) rel.insert("ad-" + std::to_string(i));

    double prev = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double rec = recall_at_k(ids, rel, k);
      CHECK(rec >= prev);
      prev = rec;
      const double nd = ndcg_at_k(ids, rel, k).value;
      CHECK(nd >= 0.0);
      CHECK(nd <= 1.0 + 1e-12);
    }
    CHECK(recall_at_k(ids, rel, n) == 1.0);

    bool prefix = true;
    for (int i = 0; i < r; ++i) prefix = prefix && rel.count(ids[static_cast<std::size_t>(i)]);
    CHECK((std::abs(ndcg_at_k(ids, rel, r).value - 1.0) < 1e-12) == prefix);

    Ids renamed;
    std::set<std::string> rel_renamed;
    for (const auto& id : ids) renamed.push_back("x" + id + "y");
    for (const auto& id : rel) rel_renamed.insert("x" + id + "y");
    const int k = 1 + static_cast<int>(rng() % n);
    CHECK(ndcg_at_k(renamed, rel_renamed, k).value == ndcg_at_k(ids, rel, k).value);
    CHECK(recall_at_k(renamed, rel_renamed, k) == recall_at_k(ids, rel, k));
  }
}

TEST_CASE("relevance set is the top CTR ads") {
  auto ads = sixteen();
  CHECK(relevance_set(ads, 5) == std::set<std::string>{"ad-11", "ad-12", "ad-13", "ad-14", "ad-15"});
  CHECK(relevance_set(ads, 1) == std::set<std::string>{"ad-15"});
  CHECK(relevance_set(ads, 16).size() == 16);
  CHECK(code_of([&] { relevance_set(ads, 17); }) == Errc::RTooLarge);

  std::vector<AdCreative> tied = {testing::make_ad("b", 5, 100), testing::make_ad("a", 5, 100),
                                  testing::make_ad("c", 1, 100)};
  CHECK(relevance_set(tied, 1) == std::set<std::string>{"a"});

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(ads.begin(), ads.end(), rng);
    for (auto& ad : ads) ad.clicks = rng() % 20;
    auto sorted = ads;
    std::sort(sorted.begin(), sorted.end(), [](const AdCreative& x, const AdCreative& y) {
      const double cx = static_cast<double>(x.clicks) / x.impressions, cy = static_cast<double>(y.clicks) / y.impressions;
      return cx != cy ? cx > cy : x.id < y.id;
    });
    std::set<std::string> expected;
    for (int i = 0; i < 5; ++i) expected.insert(sorted[static_cast<std::size_t>(i)].id);
    CHECK(relevance_set(ads, 5) == expected);
  }
}

TEST_CASE("evaluate produces one row per ranker per group") {
  auto ads = sixteen();
  Ids perfect;
  for (int i = 15; i >= 0; --i) perfect.push_back(ads[static_cast<std::size_t>(i)].id);
  Ids reversed(perfect.rbegin(), perfect.rend());
  const auto rows = evaluate({{"perfect", ranked(perfect)}, {"reversed", ranked(reversed)}}, ads, {});
  REQUIRE(rows.size() == 2);
  const auto& best = rows[0].ranker == "perfect" ? rows[0] : rows[1];
  for (int k : {5, 10}) CHECK(best.ndcg_at.at(k) == doctest::Approx(1.0));
  CHECK(best.recall_at.at(5) == 1.0);
  CHECK(best.recall_at.at(3) == doctest::Approx(0.6));
  const auto& worst = rows[0].ranker == "reversed" ? rows[0] : rows[1];
  CHECK(worst.recall_at.at(10) == 0.0);
  CHECK(best.brand == "Zipto");
  CHECK(best.objective == "Sales");

  auto other = ads;
  other.push_back(testing::make_ad("extra", 1, 10));
  CHECK(code_of([&] { evaluate({{"perfect", ranked(perfect)}}, other, {}); }) == Errc::CandidateMismatch);
  EvalConfig bad;
  bad.cutoffs = {5, 3};
  CHECK(code_of([&] { evaluate({{"perfect", ranked(perfect)}}, ads, bad); }) == Errc::InvalidArgument);
}

TEST_CASE("evaluate groups by brand and objective") {
  std::vector<AdCreative> ads;
  for (int i = 0; i < 6; ++i) ads.push_back(testing::make_ad("z" + std::to_string(i), static_cast<std::uint64_t>(i), 100));
  for (int i = 0; i < 6; ++i) {
    ads.push_back(testing::make_ad("r" + std::to_string(i), static_cast<std::uint64_t>(i), 100, "Rydex"));
  }
  Ids all;
  for (const auto& a : ads) all.push_back(a.id);
  EvalConfig cfg;
  cfg.relevance_size = 2;
  const auto rows = evaluate({{"flat", ranked(all)}}, ads, cfg);
  REQUIRE(rows.size() == 2);
  std::set<std::string> brands;
  for (const auto& r : rows) {
    brands.insert(r.brand);
    CHECK(r.recall_at.at(3) == 0.0);
    CHECK(r.recall_at.at(5) == doctest::Approx(0.5));
  }
  CHECK(brands == std::set<std::string>{"Rydex", "Zipto"});
  const std::string table = render_table(rows);
  CHECK(table.find("Group") != std::string::npos);
  CHECK(table.find("Rydex/Sales") != std::string::npos);
}

TEST_CASE("metric formatting") {
  CHECK(format_metric(0.6) == "0.6");
  CHECK(format_metric(0.5883) == "0.588");
  CHECK(format_metric(0.8289) == "0.829");
  CHECK(format_metric(1.0) == "1");
  CHECK(format_metric(0.0) == "0");
  CHECK(format_metric(0.3333333) == "0.333");
}

TEST_CASE("table rows render in column order") {
  MetricRow row;
  row.ranker = "SOMONITOR";
  row.brand = "Brand C";
  row.objective = "Sales";
  row.ndcg_at = {{5, 0.5881}, {10, 0.8289}};
  row.recall_at = {{3, 0.6}, {5, 0.6}};
  MetricRow base = row;
  base.ranker = "LLM (gd)";
  base.ndcg_at = {{5, 0.4}, {10, 0.5}};
  base.recall_at = {{3, 0.2}, {5, 0.4}};
  const std::string table = render_table({row, base});
  CHECK(table.rfind("Ranker", 0) == 0);
  std::istringstream in(table);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  std::istringstream fields(first);
  std::vector<std::string> cells;
  for (std::string c; fields >> c;) cells.push_back(c);
  CHECK(cells == std::vector<std::string>{"SOMONITOR", "0.588", "0.829", "0.6", "0.6"});
  CHECK(header.find("nDCG@5") < header.find("nDCG@10"));
  CHECK(header.find("nDCG@10") < header.find("Recall@3"));
  CHECK(header.find("Recall@3") < header.find("Recall@5"));
}

TEST_CASE("metric rows round-trip through JSON") {
  MetricRow row;
  row.ranker = "r";
  row.brand = "b";
  row.objective = "Sales";
  row.ndcg_at = {{5, 0.25}};
  row.recall_at = {{3, 0.5}};
  const Json j = row;
  const auto back = j.get<MetricRow>();
  CHECK(back.ndcg_at == row.ndcg_at);
  CHECK(back.recall_at == row.recall_at);
  CHECK(back.ranker == "r");
}
