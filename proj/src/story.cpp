#include "somonitor/story.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "somonitor/error.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"

namespace somonitor::story {

namespace {

double share_of(const cluster::ClusterCard& card, const std::string& brand) {
  auto it = card.per_brand.find(brand);
  return it == card.per_brand.end() ? 0.0 : it->second.share;
}

bool mentions(const std::vector<cluster::ClusterCard>& cards, const std::string& brand) {
  return std::any_of(cards.begin(), cards.end(), [&](const auto& c) { return c.per_brand.contains(brand); });
}

}  // namespace

std::vector<OpportunityCell> opportunity_matrix(const std::vector<cluster::ClusterCard>& personas,
                                                const std::vector<cluster::ClusterCard>& challenges,
                                                const std::string& own_brand, const std::string& competitor_brand) {
  for (const auto* brand : {&own_brand, &competitor_brand}) {
    if (!mentions(personas, *brand) && !mentions(challenges, *brand)) {
      throw Error(Errc::UnknownBrand, "brand '" + *brand + "' does not occur in any card", {*brand});
    }
  }
  std::vector<OpportunityCell> cells;
  for (const auto& p : personas) {
    for (const auto& c : challenges) {
      OpportunityCell cell;
      cell.persona_id = p.cluster_id;
      cell.challenge_id = c.cluster_id;
      cell.own_share = (share_of(p, own_brand) + share_of(c, own_brand)) / 2.0;
      cell.competitor_share = (share_of(p, competitor_brand) + share_of(c, competitor_brand)) / 2.0;
      const double persona_gap = share_of(p, competitor_brand) - share_of(p, own_brand);
      const double challenge_gap = share_of(c, competitor_brand) - share_of(c, own_brand);
      cell.gap = (persona_gap + challenge_gap) / 2.0;
      cell.volume = p.member_count + c.member_count;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

SelectionPolicy parse_policy(std::string_view s) {
  const std::string lower = text::to_lower_ascii(s);
  if (lower == "maxgap" || lower == "max-gap") return SelectionPolicy::MaxGap;
  if (lower == "maxgapvolumeweighted" || lower == "max-gap-volume-weighted") return SelectionPolicy::MaxGapVolumeWeighted;
  throw Error(Errc::InvalidArgument, "unknown selection policy '" + std::string(s) + "'");
}

Selection select_opportunity(const std::vector<OpportunityCell>& matrix, SelectionPolicy policy) {
  if (matrix.empty()) throw Error(Errc::EmptyMatrix, "opportunity matrix is empty");
  auto key = [&](const OpportunityCell& c) {
    return policy == SelectionPolicy::MaxGap ? c.gap : c.gap * std::log1p(static_cast<double>(c.volume));
  };
  auto better = [&](const OpportunityCell& a, const OpportunityCell& b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    if (a.volume != b.volume) return a.volume > b.volume;
    return std::tie(a.persona_id, a.challenge_id) < std::tie(b.persona_id, b.challenge_id);
  };
  const OpportunityCell* best = &matrix.front();
  for (const auto& c : matrix) {
    if (better(c, *best)) best = &c;
  }
  return {*best, best->gap > 0.0};
}

namespace {

// Lines of the form "Key: value", keys lower-cased; markdown bullets and bold stripped.
std::vector<std::pair<std::string, std::string>> keyed_lines(std::string_view response) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& raw : text::split_lines(response)) {
    std::string line = text::trim(raw);
    while (!line.empty() && (line.front() == '*' || line.front() == '-' || line.front() == '#')) line.erase(0, 1);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = text::to_lower_ascii(text::trim(line.substr(0, colon)));
    while (!key.empty() && key.back() == '*') key.pop_back();
    std::string value = text::trim(line.substr(colon + 1));
    while (!value.empty() && value.front() == '*') value.erase(0, 1);
    out.emplace_back(std::move(key), text::trim(value));
  }
  return out;
}

}  // namespace

Character parse_character(std::string_view response, const std::string& persona_id) {
  Character c;
  c.persona_id = persona_id;
  bool has_traits = false;
  std::string traits;
  for (const auto& [key, value] : keyed_lines(response)) {
    if (key == "name" && c.name.empty()) c.name = value;
    if (key == "role" && c.role.empty()) c.role = value;
    if (key == "background" && c.background.empty()) c.background = value;
    if (key == "traits" && !has_traits) {
      traits = value;
      has_traits = true;
    }
  }
  std::vector<std::string> missing;
  if (c.name.empty()) missing.push_back("Name");
  if (c.role.empty()) missing.push_back("Role");
  if (c.background.empty()) missing.push_back("Background");
  if (!missing.empty()) {
    throw Error(Errc::AnnotationParseError, "character response lacks " + missing.front() + ":", missing);
  }
  std::stringstream ss(traits);
  for (std::string t; std::getline(ss, t, ',');) {
    t = text::trim(t);
    if (!t.empty()) c.traits.push_back(t);
  }
  return c;
}

Character generate_character(const cluster::ClusterCard& persona, const llm::PromptTemplate& tmpl,
                             const std::string& backend_id, llm::Gateway& gateway) {
  if (persona.name.empty() || persona.description.empty()) {
    throw Error(Errc::InvalidArgument, "persona " + persona.cluster_id + " has no name or description");
  }
  llm::CompletionRequest req;
  req.system_prompt = std::string(templates::kSystemPrompt);
  req.bindings = {{"persona_name", persona.name}, {"persona_description", persona.description}};
  req.user_prompt = llm::render_prompt(tmpl, req.bindings);
  req.template_id = tmpl.template_id;
  req.backend_id = backend_id;
  req.temperature = gateway.config().temperature;
  req.seed = 0;
  const auto result = gateway.complete(std::move(req));
  Character c = parse_character(result.text, persona.cluster_id);
  c.request_digest = result.request_digest;
  return c;
}

std::pair<std::string, std::string> parse_story(std::string_view response) {
  const auto lines = text::split_lines(response);
  std::vector<std::string> body;
  std::string insight;
  bool in_story = false, saw_story = false, saw_insight = false;
  auto starts_with_key = [](const std::string& line, std::string_view key) {
    std::string t = text::trim(line);
    while (!t.empty() && (t.front() == '*' || t.front() == '#')) t.erase(0, 1);
    if (t.size() < key.size() || text::to_lower_ascii(t.substr(0, key.size())) != key) return std::string::npos;
    std::size_t pos = line.find(':');
    return pos == std::string::npos ? std::string::npos : pos + 1;
  };
  for (const auto& line : lines) {
    if (!saw_insight) {
      if (auto at = starts_with_key(line, "insight:"); at != std::string::npos) {
        insight = text::trim(line.substr(at));
        while (!insight.empty() && insight.front() == '*') insight.erase(0, 1);
        while (!insight.empty() && insight.back() == '*') insight.pop_back();
        insight = text::trim(insight);
        saw_insight = true;
        in_story = false;
        continue;
      }
    }
    if (!saw_story) {
      if (auto at = starts_with_key(line, "story:"); at != std::string::npos) {
        saw_story = in_story = true;
        std::string rest = text::trim(line.substr(at));
        while (!rest.empty() && rest.front() == '*') rest.erase(0, 1);
        rest = text::trim(rest);
        if (!rest.empty()) body.push_back(rest);
        continue;
      }
    }
    if (in_story) body.push_back(line);
  }
  while (!body.empty() && text::trim(body.front()).empty()) body.erase(body.begin());
  while (!body.empty() && text::trim(body.back()).empty()) body.pop_back();
  std::string narrative;
  for (std::size_t i = 0; i < body.size(); ++i) narrative += (i ? "\n" : "") + body[i];
  std::vector<std::string> missing;
  if (narrative.empty()) missing.push_back("Story");
  if (insight.empty()) missing.push_back("Insight");
  if (!missing.empty()) {
    throw Error(Errc::AnnotationParseError, "story response lacks a non-empty " + missing.front() + ":", missing);
  }
  return {narrative, insight};
}

Story generate_story(const Character& character, const cluster::ClusterCard& persona,
                     const cluster::ClusterCard& challenge, const std::string& brand, const llm::PromptTemplate& tmpl,
                     const std::string& backend_id, llm::Gateway& gateway) {
  if (character.name.empty() || character.background.empty()) {
    throw Error(Errc::InvalidArgument, "character needs a name and background");
  }
  if (brand.empty()) throw Error(Errc::InvalidArgument, "brand must not be empty");
  std::string traits;
  for (std::size_t i = 0; i < character.traits.size(); ++i) traits += (i ? ", " : "") + character.traits[i];
  llm::CompletionRequest req;
  req.system_prompt = std::string(templates::kSystemPrompt);
  req.bindings = {{"brand", brand},
                  {"character_name", character.name},
                  {"character_role", character.role},
                  {"character_background", character.background},
                  {"character_traits", traits},
                  {"challenge_name", challenge.name},
                  {"challenge_description", challenge.description}};
  req.user_prompt = llm::render_prompt(tmpl, req.bindings);
  req.template_id = tmpl.template_id;
  req.backend_id = backend_id;
  req.temperature = gateway.config().temperature;
  req.seed = 0;
  const auto result = gateway.complete(std::move(req));
  auto [narrative, insight] = parse_story(result.text);
  if (!text::contains_folded(narrative, brand)) {
    throw Error(Errc::BrandMissingFromNarrative, "the narrative never mentions " + brand, {brand});
  }
  Story s;
  s.character = character;
  s.persona_name = persona.name;
  s.challenge_id = challenge.cluster_id;
  s.challenge_name = challenge.name;
  s.brand = brand;
  s.narrative = std::move(narrative);
  s.concluding_insight = std::move(insight);
  s.dataset_id = challenge.cluster_id.substr(0, challenge.cluster_id.rfind(':'));
  s.request_digests = {character.request_digest, result.request_digest};
  s.run_id = "story-" + text::sha256_hex(character.persona_id + "\n" + challenge.cluster_id + "\n" + brand + "\n" +
                                         character.request_digest + "\n" + result.request_digest)
                            .substr(0, 12);
  return s;
}

std::string export_brief(const Story& s) {
  std::ostringstream os;
  os << "# Content brief: " << s.brand << "\n\n"
     << "- Brand: " << s.brand << "\n"
     << "- Persona: " << s.persona_name << " (" << s.character.persona_id << ")\n"
     << "- Challenge: " << s.challenge_name << " (" << s.challenge_id << ")\n\n"
     << "## Character\n\n"
     << "**" << s.character.name << "**, " << s.character.role << "\n\n"
     << s.character.background << "\n";
  if (!s.character.traits.empty()) {
    os << "\nTraits: ";
    for (std::size_t i = 0; i < s.character.traits.size(); ++i) os << (i ? ", " : "") << s.character.traits[i];
    os << "\n";
  }
  os << "\n## Narrative\n\n"
     << s.narrative << "\n\n"
     << "## Insight\n\n"
     << "**" << s.concluding_insight << "**\n\n"
     << "---\n\n"
     << "Provenance: dataset " << s.dataset_id << "; story run " << s.run_id << "; requests ";
  for (std::size_t i = 0; i < s.request_digests.size(); ++i) os << (i ? ", " : "") << s.request_digests[i];
  os << "\n";
  return os.str();
}

std::filesystem::path save_story(store::Store& store, const Story& story) {
  store.put_artifact({std::string(kArtifactKind), story.dataset_id, story.run_id}, Json(story));
  const auto path = store.root() / "briefs" / (story.run_id + ".md");
  store::write_file_atomic(path, export_brief(story));
  return path;
}

void to_json(Json& j, const OpportunityCell& c) {
  j = Json{{"persona_id", c.persona_id},       {"challenge_id", c.challenge_id}, {"own_share", c.own_share},
           {"competitor_share", c.competitor_share}, {"gap", c.gap},              {"volume", c.volume}};
}

void from_json(const Json& j, OpportunityCell& c) {
  c.persona_id = j.at("persona_id").get<std::string>();
  c.challenge_id = j.at("challenge_id").get<std::string>();
  c.own_share = j.at("own_share").get<double>();
  c.competitor_share = j.at("competitor_share").get<double>();
  c.gap = j.at("gap").get<double>();
  c.volume = j.at("volume").get<std::size_t>();
}

void to_json(Json& j, const Character& c) {
  j = Json{{"name", c.name},         {"role", c.role},          {"background", c.background},
           {"traits", c.traits},     {"persona_id", c.persona_id}, {"request_digest", c.request_digest}};
}

void from_json(const Json& j, Character& c) {
  c.name = j.at("name").get<std::string>();
  c.role = j.value("role", std::string());
  c.background = j.at("background").get<std::string>();
  c.traits = j.value("traits", std::vector<std::string>{});
  c.persona_id = j.at("persona_id").get<std::string>();
  c.request_digest = j.value("request_digest", std::string());
}

void to_json(Json& j, const Story& s) {
  j = Json{{"character", s.character},
           {"persona_name", s.persona_name},
           {"challenge_id", s.challenge_id},
           {"challenge_name", s.challenge_name},
           {"brand", s.brand},
           {"narrative", s.narrative},
           {"concluding_insight", s.concluding_insight},
           {"dataset_id", s.dataset_id},
           {"run_id", s.run_id},
           {"request_digests", s.request_digests}};
}

void from_json(const Json& j, Story& s) {
  s.character = j.at("character").get<Character>();
  s.persona_name = j.value("persona_name", std::string());
  s.challenge_id = j.at("challenge_id").get<std::string>();
  s.challenge_name = j.value("challenge_name", std::string());
  s.brand = j.at("brand").get<std::string>();
  s.narrative = j.at("narrative").get<std::string>();
  s.concluding_insight = j.at("concluding_insight").get<std::string>();
  s.dataset_id = j.value("dataset_id", std::string());
  s.run_id = j.at("run_id").get<std::string>();
  s.request_digests = j.value("request_digests", std::vector<std::string>{});
}

}  // namespace somonitor::story
