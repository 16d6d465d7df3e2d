#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "somonitor/cluster.hpp"
#include "somonitor/gateway.hpp"
#include "somonitor/store.hpp"

namespace somonitor::story {

struct OpportunityCell {
  std::string persona_id;
  std::string challenge_id;
  double own_share = 0.0;
  double competitor_share = 0.0;
  double gap = 0.0;  // competitor_share - own_share
  std::size_t volume = 0;
};

// Shares and gap are the means of the persona and challenge components.
// UnknownBrand when a brand appears in none of the cards.
std::vector<OpportunityCell> opportunity_matrix(const std::vector<cluster::ClusterCard>& personas,
                                                const std::vector<cluster::ClusterCard>& challenges,
                                                const std::string& own_brand, const std::string& competitor_brand);

enum class SelectionPolicy { MaxGap, MaxGapVolumeWeighted };
SelectionPolicy parse_policy(std::string_view s);

struct Selection {
  OpportunityCell cell;
  bool underexploited = false;  // gap > 0
};

// MaxGap: largest gap, then larger volume, then (persona_id, challenge_id) ascending.
// MaxGapVolumeWeighted: largest gap * log(1 + volume), same tie chain.
Selection select_opportunity(const std::vector<OpportunityCell>& matrix, SelectionPolicy policy);

struct Character {
  std::string name;
  std::string role;
  std::string background;
  std::vector<std::string> traits;
  std::string persona_id;
  std::string request_digest;
};

struct Story {
  Character character;
  std::string persona_name;
  std::string challenge_id;
  std::string challenge_name;
  std::string brand;
  std::string narrative;
  std::string concluding_insight;
  std::string dataset_id;
  std::string run_id;
  std::vector<std::string> request_digests;  // character call, story call
};

// "Name:", "Role:", "Background:" required; "Traits:" optional comma list.
Character parse_character(std::string_view response, const std::string& persona_id);

Character generate_character(const cluster::ClusterCard& persona, const llm::PromptTemplate& tmpl,
                             const std::string& backend_id, llm::Gateway& gateway);

// Narrative is everything after "Story:" up to the "Insight:" line.
std::pair<std::string, std::string> parse_story(std::string_view response);

Story generate_story(const Character& character, const cluster::ClusterCard& persona,
                     const cluster::ClusterCard& challenge, const std::string& brand, const llm::PromptTemplate& tmpl,
                     const std::string& backend_id, llm::Gateway& gateway);

// Markdown with header, character sketch, narrative, insight and provenance, in that order.
std::string export_brief(const Story& story);

inline constexpr std::string_view kArtifactKind = "stories";

// Persists the story artifact and writes <store>/briefs/<run_id>.md.
std::filesystem::path save_story(store::Store& store, const Story& story);

void to_json(Json& j, const OpportunityCell& c);
void from_json(const Json& j, OpportunityCell& c);
void to_json(Json& j, const Character& c);
void from_json(const Json& j, Character& c);
void to_json(Json& j, const Story& s);
void from_json(const Json& j, Story& s);

}  // namespace somonitor::story
