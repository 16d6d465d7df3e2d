#include <doctest.h>

#include "somonitor/error.hpp"
#include "somonitor/settings.hpp"
#include "support.hpp"

using namespace somonitor;

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

}  // namespace

TEST_CASE("defaults mirror the reported settings") {
  const Settings s;
  CHECK(s.cluster.k0 == 3);
  CHECK(s.cluster.k_max == 50);
  CHECK(s.cluster.outlier_percentile == 95.0);
  CHECK(s.rank.ensemble_runs == 5);
  CHECK(s.rank.temperature == doctest::Approx(0.1));
  CHECK(s.rank.layer.alpha == 1.0);
  CHECK(s.rank.layer.beta == 0.0);
  CHECK(s.eval.relevance_size == 5);
  CHECK(s.eval.cutoffs == std::vector<int>{3, 5, 10});
  CHECK(s.api_host == "127.0.0.1");
  CHECK(s.api_port == 8787);
}

TEST_CASE("config document with sections, comments and quoting") {
  Settings s;
  apply_config_text(s,
                    "# top-level\n"
                    "store = \"./my store\"  # trailing comment\n"
                    "\n"
                    "[cluster]\n"
                    "k0 = 4\n"
                    "kmax = 20\n"
                    "seed = 7\n"
                    "[rank]\n"
                    "alpha = 2.5\n"
                    "grounded = true\n"
                    "classifier = 'oracle'\n"
                    "[eval]\n"
                    "cutoffs = [3, 5]\n"
                    "[story]\n"
                    "own = \"Brand #1\"\n"
                    "policy = max-gap-volume-weighted\n"
                    "llm.retry_limit = 1\n");
  CHECK(s.store_dir == "./my store");
  CHECK(s.cluster.k0 == 4);
  CHECK(s.cluster.k_max == 20);
  CHECK(s.cluster.seed == 7);
  CHECK(s.rank.layer.alpha == 2.5);
  CHECK(s.rank.grounded);
  CHECK(s.rank.classifier == "oracle");
  CHECK(s.eval.cutoffs == std::vector<int>{3, 5});
  CHECK(s.own_brand == "Brand #1");
  CHECK(s.story_policy == story::SelectionPolicy::MaxGapVolumeWeighted);
  CHECK(s.gateway.retry_limit == 1);
}

TEST_CASE("config errors name the line") {
  Settings s;
  auto e = error_of([&] { apply_config_text(s, "[cluster]\nk0 = 3\nk0 three\n"); });
  CHECK(e.code() == Errc::ParseError);
  CHECK(std::string(e.what()).find("line 3") != std::string::npos);

  e = error_of([&] { apply_config_text(s, "[cluster]\nk0 = x\n"); });
  CHECK(e.code() == Errc::InvalidArgument);
  CHECK(std::string(e.what()).find("line 2") != std::string::npos);

  e = error_of([&] { apply_config_text(s, "[nope]\nvalue = 1\n"); });
  CHECK(e.code() == Errc::InvalidArgument);
  CHECK(std::string(e.what()).find("nope.value") != std::string::npos);

  CHECK(error_of([&] { apply_setting(s, "rank.grounded", "maybe"); }).code() == Errc::InvalidArgument);
  CHECK(error_of([&] { apply_setting(s, "eval.cutoffs", "[]"); }).code() == Errc::InvalidArgument);
  CHECK(error_of([&] { apply_setting(s, "cluster.k0", "3.5"); }).code() == Errc::InvalidArgument);
}

TEST_CASE("single overrides and files") {
  Settings s;
  apply_setting(s, "Rank.Beta", "0.5");
  CHECK(s.rank.layer.beta == 0.5);
  apply_setting(s, "cluster.outlier_percentile", "90");
  CHECK(s.cluster.outlier_percentile == 90.0);

  testing::TempDir dir;
  testing::write_text(dir / "somonitor.toml", "[api]\nport = 9000\nworkers = 3\n");
  apply_config_file(s, dir / "somonitor.toml");
  CHECK(s.api_port == 9000);
  CHECK(s.api_workers == 3);
  CHECK(error_of([&] { apply_config_file(s, dir / "missing.toml"); }).code() == Errc::NotFound);
}
