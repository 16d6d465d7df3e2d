#include <doctest.h>

#include <cmath>
#include <random>

#include "somonitor/error.hpp"
#include "somonitor/offline_backends.hpp"
#include "somonitor/story.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"
#include "support.hpp"

using namespace somonitor;
using namespace somonitor::story;
using cluster::ClusterCard;

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

ClusterCard card(const std::string& id, const std::string& name, std::size_t count,
                 std::map<std::string, double> shares) {
  ClusterCard c;
  c.cluster_id = id;
  c.name = name;
  c.description = name + " description";
  c.member_count = count;
  for (const auto& [brand, share] : shares) {
    c.per_brand[brand] = {static_cast<std::size_t>(std::lround(share * static_cast<double>(count))), share};
  }
  return c;
}

OpportunityCell cell(const std::string& p, const std::string& c, double gap, std::size_t volume) {
  OpportunityCell out;
  out.persona_id = p;
  out.challenge_id = c;
  out.gap = gap;
  out.volume = volume;
  return out;
}

ClusterCard persona_fixture() {
  auto p = card("ds-x:P1", "Efficiency Enthusiasts", 206, {{"Gojek", 0.3}, {"Grab", 0.7}});
  p.description = "Busy professionals and business owners who value time and reliability.";
  return p;
}

ClusterCard challenge_fixture() {
  auto c = card("ds-x:C3", "Streamlining Work Transport Processes", 336, {{"Gojek", 0.35}, {"Grab", 0.65}});
  c.description = "Teams losing hours to ad-hoc travel arrangements and expense claims.";
  return c;
}

const char* kSamuel =
    "Name: Samuel Tan\nRole: a business owner in Singapore\n"
    "Background: Runs a growing logistics firm and spends too much time arranging staff travel.\n"
    "Traits: pragmatic, time-poor, loyal to reliable partners";

const char* kStory =
    "Story: Samuel Tan starts every Monday juggling calls about late drivers.\n"
    "\n"
    "When he moves his team onto Gojek for Business, bookings and receipts land in one place.\n"
    "Insight: Removing travel friction lets teams enhance their efficiency and improve overall job satisfaction.";

// Gateway with a scripted fixture for the character and story prompts of the fixtures above.
struct ScriptedStory {
  llm::Gateway gw{testing::fast_gateway()};
  std::shared_ptr<llm::ScriptedBackend> scripted = std::make_shared<llm::ScriptedBackend>();
  llm::PromptTemplate character_tmpl = templates::builtin(templates::kCharacter);
  llm::PromptTemplate story_tmpl = templates::builtin(templates::kStory);

  ScriptedStory(const std::string& character_response, const std::string& story_response) {
    const auto persona = persona_fixture();
    scripted->add(character_tmpl.template_id,
                  {{"persona_name", persona.name}, {"persona_description", persona.description}}, character_response);
    gw.register_backend("scripted", scripted);
    if (character_response.find("Background:") == std::string::npos) return;
    const auto c = parse_character(character_response, persona.cluster_id);
    std::string traits;
    for (std::size_t i = 0; i < c.traits.size(); ++i) traits += (i ? ", " : "") + c.traits[i];
    const auto challenge = challenge_fixture();
    scripted->add(story_tmpl.template_id,
                  {{"brand", "Gojek"},
                   {"character_name", c.name},
                   {"character_role", c.role},
                   {"character_background", c.background},
                   {"character_traits", traits},
                   {"challenge_name", challenge.name},
                   {"challenge_description", challenge.description}},
                  story_response);
  }

  Story run() {
    const auto character = generate_character(persona_fixture(), character_tmpl, "scripted", gw);
    return generate_story(character, persona_fixture(), challenge_fixture(), "Gojek", story_tmpl, "scripted", gw);
  }
};

}  // namespace

TEST_CASE("cell gap is the mean of persona and challenge gaps") {
  const auto p = card("P1", "p", 100, {{"Own", 0.3}, {"Comp", 0.7}});
  const auto c = card("C1", "c", 50, {{"Own", 0.4}, {"Comp", 0.6}});
  const auto m = opportunity_matrix({p}, {c}, "Own", "Comp");
  REQUIRE(m.size() == 1);
  CHECK(m[0].gap == doctest::Approx(0.3));
  CHECK(m[0].volume == 150);
  CHECK(m[0].own_share == doctest::Approx(0.35));
  CHECK(m[0].competitor_share == doctest::Approx(0.65));
}

TEST_CASE("opportunity matrix properties") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ClusterCard> personas, challenges;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 4); ++i) {
      const double a = u(rng);
      personas.push_back(card("P" + std::to_string(i), "p", 10 + rng() % 100, {{"A", a}, {"B", 1 - a}}));
    }
    for (int i = 0; i < 1 + static_cast<int>(rng() % 4); ++i) {
      const double a = u(rng);
      challenges.push_back(card("C" + std::to_string(i), "c", 10 + rng() % 100, {{"A", a}, {"B", 1 - a}}));
    }
    const auto ab = opportunity_matrix(personas, challenges, "A", "B");
    const auto ba = opportunity_matrix(personas, challenges, "B", "A");
    REQUIRE(ab.size() == personas.size() * challenges.size());
    for (std::size_t i = 0; i < ab.size(); ++i) {
      CHECK(ab[i].gap == doctest::Approx(-ba[i].gap));
      CHECK(ab[i].gap >= -1.0);
      CHECK(ab[i].gap <= 1.0);
    }
    const auto same = opportunity_matrix(personas, challenges, "A", "A");
    for (const auto& c : same) CHECK(c.gap == 0.0);
  }
}

TEST_CASE("competitor-heavy persona and challenge give the maximal cell") {
  const std::vector<ClusterCard> personas = {persona_fixture(),
                                             card("ds-x:P2", "Budget Riders", 144, {{"Gojek", 0.6}, {"Grab", 0.4}}),
                                             card("ds-x:P3", "Night Owls", 707, {{"Gojek", 0.5}, {"Grab", 0.5}})};
  const std::vector<ClusterCard> challenges = {card("ds-x:C1", "Fares", 672, {{"Gojek", 0.55}, {"Grab", 0.45}}),
                                               card("ds-x:C2", "Safety", 94, {{"Gojek", 0.5}, {"Grab", 0.5}}),
                                               challenge_fixture()};
  const auto m = opportunity_matrix(personas, challenges, "Gojek", "Grab");
  const auto s = select_opportunity(m, SelectionPolicy::MaxGap);
  CHECK(s.cell.persona_id == "ds-x:P1");
  CHECK(s.cell.challenge_id == "ds-x:C3");
  CHECK(s.underexploited);
  CHECK(error_of([&] { opportunity_matrix(personas, challenges, "Gojek", "Uber"); }).code() == Errc::UnknownBrand);
}

TEST_CASE("selection tie chain") {
  const std::vector<OpportunityCell> m = {cell("P1", "C1", 0.3, 100), cell("P2", "C1", 0.1, 50), cell("P3", "C1", 0.3, 200)};
  CHECK(select_opportunity(m, SelectionPolicy::MaxGap).cell.persona_id == "P3");
  CHECK(select_opportunity({m[1]}, SelectionPolicy::MaxGap).cell.persona_id == "P2");
  const std::vector<OpportunityCell> same = {cell("P2", "C1", 0.3, 100), cell("P1", "C2", 0.3, 100), cell("P1", "C1", 0.3, 100)};
  const auto pick = select_opportunity(same, SelectionPolicy::MaxGap).cell;
  CHECK(pick.persona_id == "P1");
  CHECK(pick.challenge_id == "C1");

  const auto negative = select_opportunity({cell("P1", "C1", -0.4, 10), cell("P2", "C1", -0.1, 10)}, SelectionPolicy::MaxGap);
  CHECK(negative.cell.persona_id == "P2");
  CHECK_FALSE(negative.underexploited);

  const std::vector<OpportunityCell> weighted = {cell("P1", "C1", 0.3, 2), cell("P2", "C1", 0.2, 1000)};
  CHECK(select_opportunity(weighted, SelectionPolicy::MaxGap).cell.persona_id == "P1");
  CHECK(select_opportunity(weighted, SelectionPolicy::MaxGapVolumeWeighted).cell.persona_id == "P2");
  CHECK(error_of([] { select_opportunity({}, SelectionPolicy::MaxGap); }).code() == Errc::EmptyMatrix);
  CHECK(parse_policy("max-gap") == SelectionPolicy::MaxGap);
}

TEST_CASE("selection is independent of matrix order") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<OpportunityCell> m;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 8); ++i) {
      m.push_back(cell("P" + std::to_string(rng() % 3), "C" + std::to_string(i), (static_cast<double>(rng() % 5) - 2) / 10.0,
                       rng() % 3 * 100));
    }
    const auto a = select_opportunity(m, SelectionPolicy::MaxGap).cell;
    std::shuffle(m.begin(), m.end(), rng);
    const auto b = select_opportunity(m, SelectionPolicy::MaxGap).cell;
    CHECK(Json(a) == Json(b));
  }
}

TEST_CASE("character from a scripted fixture") {
  ScriptedStory fx(kSamuel, kStory);
  const auto c = generate_character(persona_fixture(), fx.character_tmpl, "scripted", fx.gw);
  CHECK(c.name == "Samuel Tan");
  CHECK(c.role == "a business owner in Singapore");
  CHECK(c.persona_id == "ds-x:P1");
  CHECK(c.traits == std::vector<std::string>{"pragmatic", "time-poor", "loyal to reliable partners"});
  CHECK_FALSE(c.request_digest.empty());
  CHECK(Json(generate_character(persona_fixture(), fx.character_tmpl, "scripted", fx.gw)) == Json(c));

  CHECK(error_of([] { parse_character("Name: X\nRole: y", "P"); }).code() == Errc::AnnotationParseError);
  ScriptedStory broken("Name: Samuel Tan\nRole: owner", kStory);
  CHECK(error_of([&] { generate_character(persona_fixture(), broken.character_tmpl, "scripted", broken.gw); }).code() ==
        Errc::AnnotationParseError);
}

TEST_CASE("story from scripted fixtures") {
  ScriptedStory fx(kSamuel, kStory);
  const auto s = fx.run();
  CHECK(s.character.name == "Samuel Tan");
  CHECK(s.concluding_insight.find("efficiency") != std::string::npos);
  CHECK(s.concluding_insight.find("job satisfaction") != std::string::npos);
  CHECK(s.narrative.find("\n\n") != std::string::npos);
  CHECK(s.challenge_id == "ds-x:C3");
  CHECK(s.dataset_id == "ds-x");
  CHECK(s.request_digests.size() == 2);
  CHECK(s.run_id.rfind("story-", 0) == 0);
  CHECK(Json(fx.run()) == Json(s));
  CHECK(Json(s).get<Story>().narrative == s.narrative);
}

TEST_CASE("story errors") {
  ScriptedStory no_brand(kSamuel, "Story: Samuel books rides.\nInsight: Time matters.");
  CHECK(error_of([&] { no_brand.run(); }).code() == Errc::BrandMissingFromNarrative);
  ScriptedStory empty_insight(kSamuel, "Story: Samuel uses Gojek.\nInsight:   ");
  CHECK(error_of([&] { empty_insight.run(); }).code() == Errc::AnnotationParseError);
  CHECK(error_of([] { parse_story("Insight: only"); }).code() == Errc::AnnotationParseError);
}

TEST_CASE("story parsing keeps paragraphs and tolerates markup") {
  const auto [narrative, insight] = parse_story("Here it is.\n**Story:**\nFirst.\n\nSecond line\n**Insight:** Keep going.**");
  CHECK(narrative == "First.\n\nSecond line");
  CHECK(insight == "Keep going.");
}

TEST_CASE("brief layout") {
  ScriptedStory fx(kSamuel, kStory);
  const auto s = fx.run();
  const std::string brief = export_brief(s);
  CHECK(brief == export_brief(s));
  const std::vector<std::string> order = {"# Content brief: Gojek", "- Persona: Efficiency Enthusiasts", "## Character",
                                          "**Samuel Tan**", "## Narrative", "## Insight", "**Removing travel friction",
                                          "Provenance: dataset ds-x"};
  std::size_t at = 0;
  for (const auto& marker : order) {
    const auto found = brief.find(marker, at);
    CHECK_MESSAGE(found != std::string::npos, marker);
    if (found != std::string::npos) at = found;
  }
  CHECK(brief.find(s.narrative) != std::string::npos);
  for (const auto& d : s.request_digests) CHECK(brief.find(d) != std::string::npos);

  testing::TempDir dir;
  store::Store st(dir / "store");
  const auto path = save_story(st, s);
  CHECK(path.filename() == s.run_id + ".md");
  CHECK(store::read_file(path) == brief);
  CHECK(st.get_artifact({"stories", "ds-x", s.run_id}) == Json(s));
}

TEST_CASE("offline backend produces a complete story") {
  llm::Gateway gw;
  llm::register_offline_backends(gw);
  const auto character = generate_character(persona_fixture(), templates::builtin(templates::kCharacter), "offline", gw);
  CHECK_FALSE(character.name.empty());
  const auto s = generate_story(character, persona_fixture(), challenge_fixture(), "Gojek",
                                templates::builtin(templates::kStory), "offline", gw);
  CHECK_FALSE(s.concluding_insight.empty());
  CHECK(text::contains_folded(s.narrative, "Gojek"));
}
