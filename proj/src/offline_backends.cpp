#include "somonitor/offline_backends.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

#include "somonitor/error.hpp"
#include "somonitor/store.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"

namespace somonitor::llm {

std::vector<double> HashingEmbedder::embed_one(std::string_view s) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  const auto tokens = text::word_tokens(s);
  auto add = [&](const std::string& feature) {
    const auto bucket = text::hash64(feature, kBucketSeed) % static_cast<std::uint64_t>(dim_);
    const double sign = (text::hash64(feature, kSignSeed) & 1U) ? 1.0 : -1.0;
    v[bucket] += sign;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
  }
  return v;
}

std::vector<std::vector<double>> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::string ScriptedBackend::template_key(const std::string& template_id, const Bindings& bindings) {
  return "tmpl:" + template_id + ":" + Json(bindings).dump();
}

void ScriptedBackend::add_digest(const std::string& digest, std::string response) {
  std::lock_guard lock(mu_);
  responses_["digest:" + digest] = std::move(response);
}

void ScriptedBackend::add(const std::string& template_id, const Bindings& bindings, std::string response) {
  std::lock_guard lock(mu_);
  responses_[template_key(template_id, bindings)] = std::move(response);
}

void ScriptedBackend::load_fixtures(const std::filesystem::path& path) {
  const Json doc = Json::parse(store::read_file(path));
  for (const auto& e : doc.at("entries")) {
    if (e.contains("digest")) {
      add_digest(e.at("digest").get<std::string>(), e.at("response").get<std::string>());
    } else {
      add(e.at("template_id").get<std::string>(), e.at("bindings").get<Bindings>(),
          e.at("response").get<std::string>());
    }
  }
}

std::string ScriptedBackend::complete(const CompletionRequest& request) {
  std::lock_guard lock(mu_);
  if (auto it = responses_.find("digest:" + request_digest(request)); it != responses_.end()) return it->second;
  if (!request.template_id.empty()) {
    if (auto it = responses_.find(template_key(request.template_id, request.bindings)); it != responses_.end()) {
      return it->second;
    }
  }
  throw Error(Errc::BackendUnavailable, "no scripted response for request " + request_digest(request).substr(0, 12));
}

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",   "as",   "at",    "be",   "by",   "for",  "from",  "has",  "have",
      "in",   "is",   "it",   "its",   "of",   "on",    "or",   "that", "the",  "their", "them", "they",
      "this", "to",   "was",  "were",  "will", "with",  "who",  "your", "you",  "our",   "we",   "can",
      "more", "less", "need", "needs", "want", "wants", "into", "than", "every", "all",   "so",   "get"};
  return words;
}

std::string title_case(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

// Content words ordered by descending frequency, ties by first appearance.
std::vector<std::string> top_words(const std::vector<std::string>& texts, std::size_t n) {
  std::map<std::string, std::pair<int, std::size_t>> freq;
  std::size_t order = 0;
  for (const auto& t : texts) {
    for (const auto& w : text::word_tokens(t)) {
      if (w.size() < 3 || stopwords().contains(w) || std::isdigit(static_cast<unsigned char>(w[0]))) continue;
      auto [it, inserted] = freq.try_emplace(w, 0, order++);
      it->second.first += 1;
    }
  }
  std::vector<std::pair<std::string, std::pair<int, std::size_t>>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < n; ++i) out.push_back(ranked[i].first);
  return out;
}

std::vector<std::string> sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cur.push_back(s[i]);
    const bool end = (s[i] == '.' || s[i] == '!' || s[i] == '?') && (i + 1 == s.size() || s[i + 1] == ' ' || s[i + 1] == '\n');
    if (end || s[i] == '\n') {
      auto t = text::trim(cur);
      while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?')) t.pop_back();
      if (!t.empty()) out.push_back(t);
      cur.clear();
    }
  }
  auto t = text::trim(cur);
  while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?')) t.pop_back();
  if (!t.empty()) out.push_back(t);
  return out;
}

const Bindings& bindings_of(const CompletionRequest& r) { return r.bindings; }

std::string binding(const CompletionRequest& r, const std::string& name) {
  auto it = bindings_of(r).find(name);
  return it == bindings_of(r).end() ? std::string{} : it->second;
}

std::string pick(const std::vector<std::string>& options, std::string_view key) {
  return options[text::hash64(key, 7) % options.size()];
}

std::string respond_pillars(const CompletionRequest& r) {
  std::string ad = binding(r, "ad_text");
  auto parts = sentences(ad);
  if (parts.empty()) parts.push_back("a general audience");
  const std::string audience = parts.front();
  const std::string insight = parts.size() > 1 ? parts[1] : parts.front();
  const std::string product = parts.back();
  const std::string lower = text::to_lower_ascii(ad);

  static const std::vector<std::pair<std::string, std::string>> need_rules = {
      {"save", "savings"},        {"cost", "savings"},      {"budget", "savings"},
      {"time", "time efficiency"}, {"fast", "time efficiency"}, {"quick", "time efficiency"},
      {"safe", "safety"},         {"secure", "safety"},     {"staff", "employee wellbeing"},
      {"employee", "employee wellbeing"}, {"team", "employee wellbeing"}, {"grow", "growth"}};
  std::string need = "convenience";
  for (const auto& [kw, label] : need_rules) {
    if (lower.find(kw) != std::string::npos) {
      need = label;
      break;
    }
  }
  static const std::vector<std::string> archetypes = {"Ruler", "Caregiver", "Hero",    "Sage",     "Explorer", "Creator",
                                                      "Everyman", "Jester", "Lover", "Magician", "Innocent", "Outlaw"};
  const std::string archetype = pick(archetypes, product);
  std::string tone = "confident";
  if (ad.find('!') != std::string::npos) {
    tone = "energetic";
  } else if (lower.find("worry") != std::string::npos || lower.find("safe") != std::string::npos) {
    tone = "reassuring";
  }
  std::ostringstream os;
  os << "Audience: " << audience << "\nNeed: " << need << "\nInsight: " << insight << "\nProduct: " << product
     << "\nArchetype: " << archetype << "\nTone: " << tone << "\n";
  return os.str();
}

std::string respond_annotation(const CompletionRequest& r) {
  const std::string pillar = binding(r, "pillar");
  std::vector<std::string> values;
  for (const auto& line : text::split_lines(binding(r, "exemplars"))) {
    auto t = text::trim(line);
    if (t.rfind("- ", 0) != 0) continue;
    t = t.substr(2);
    if (auto cut = t.find(" || "); cut != std::string::npos) t = t.substr(0, cut);
    values.push_back(t);
  }
  auto words = top_words(values, 3);
  while (words.size() < 2) words.push_back(words.empty() ? "general" : "focused");
  const bool persona = text::to_lower_ascii(pillar) == "audience";
  std::ostringstream os;
  os << "Name: " << title_case(words[0]) << " " << title_case(words[1]) << (persona ? " Seekers" : " Challenges")
     << "\nDescription: " << (persona ? "Audiences" : "Insights") << " centred on " << words[0] << ", " << words[1];
  if (words.size() > 2) os << " and " << words[2];
  os << " across " << binding(r, "member_count") << " advertisements";
  if (!values.empty()) os << "; for example: " << values.front();
  os << ".\n";
  return os.str();
}

struct RankCandidate {
  std::string id;
  std::string text;
  double score = 0.0;
};

std::string respond_ranking(const CompletionRequest& r, const HashingEmbedder& embedder) {
  std::vector<RankCandidate> cands;
  for (const auto& line : text::split_lines(binding(r, "candidates"))) {
    auto cut = line.find(" | ");
    if (cut == std::string::npos) continue;
    cands.push_back({text::trim(line.substr(0, cut)), line.substr(cut + 3), 0.0});
  }
  std::string best, worst;
  for (const auto& line : text::split_lines(binding(r, "grounding"))) {
    auto cut = line.find("): ");
    if (cut == std::string::npos) continue;
    if (line.rfind("Best", 0) == 0) best = line.substr(cut + 3);
    if (line.rfind("Worst", 0) == 0) worst = line.substr(cut + 3);
  }
  auto vec = [&](const std::string& s) {
    const auto v = embedder.embed_one(s);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  static const std::vector<std::string> hype = {"new", "now", "best", "free", "exclusive", "today", "amazing", "limited"};
  const std::string seed = r.seed ? std::to_string(*r.seed) : "none";
  const Eigen::VectorXd best_v = best.empty() ? Eigen::VectorXd() : vec(best);
  const Eigen::VectorXd worst_v = worst.empty() ? Eigen::VectorXd() : vec(worst);
  for (auto& c : cands) {
    if (!best.empty() && !worst.empty()) {
      const auto cv = vec(c.text);
      c.score = cosine_similarity(cv, best_v) - cosine_similarity(cv, worst_v);
    } else {
      for (const auto& w : text::word_tokens(c.text)) {
        if (std::find(hype.begin(), hype.end(), w) != hype.end()) c.score += 0.2;
      }
    }
    const double u = static_cast<double>(text::hash64(c.id + "#" + seed, 11) >> 11) * 0x1.0p-53;
    c.score += r.temperature * (2.0 * u - 1.0);
  }
  std::sort(cands.begin(), cands.end(), [](const RankCandidate& a, const RankCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  std::string out;
  for (std::size_t i = 0; i < cands.size(); ++i) out += (i ? ", " : "") + cands[i].id;
  return out + "\n";
}

std::string first_name(const std::string& full) { return full.substr(0, full.find(' ')); }

std::string respond_character(const CompletionRequest& r) {
  static const std::vector<std::string> names = {"Samuel Tan", "Aisha Rahman", "Daniel Lim",  "Priya Nair",
                                                 "Marcus Goh", "Mei Ling Ong", "Rizal Hakim", "Clara Wong"};
  static const std::vector<std::string> roles = {
      "a business owner in Singapore", "an operations manager at a logistics firm in Singapore",
      "a finance lead at a growing startup in Singapore", "an HR director at a regional company in Singapore"};
  const std::string persona = binding(r, "persona_name");
  const std::string description = binding(r, "persona_description");
  const std::string name = pick(names, persona);
  auto words = top_words({description}, 3);
  std::ostringstream os;
  os << "Name: " << name << "\nRole: " << pick(roles, persona + "#role") << "\nBackground: " << name
     << " runs a busy team and identifies with the " << persona << " persona. " << description
     << "\nTraits: pragmatic";
  for (const auto& w : words) os << ", " << w << "-minded";
  os << "\n";
  return os.str();
}

std::string respond_story(const CompletionRequest& r) {
  const std::string name = binding(r, "character_name");
  const std::string first = first_name(name);
  const std::string brand = binding(r, "brand");
  const std::string challenge = binding(r, "challenge_name");
  std::string challenge_lower = text::to_lower_ascii(challenge);
  std::ostringstream os;
  os << "Story:\n"
     << name << ", " << binding(r, "character_role") << ", takes pride in running an efficient operation. "
     << binding(r, "character_background") << "\n\n"
     << "Lately " << first << " has been wrestling with " << challenge_lower << ". "
     << binding(r, "challenge_description") << " The focus on efficiency has left employee satisfaction behind, and "
     << "turnover is rising.\n\n"
     << "Looking for a fix, " << first << " turns to " << brand << ". " << brand
     << " takes the friction out of everyday work travel, and " << first
     << " uses the time it frees to reconnect with the team.\n"
     << "Insight: Choosing " << brand << " for " << challenge_lower
     << " improved efficiency and overall job satisfaction together, because employees felt looked after.\n";
  return os.str();
}

}  // namespace

std::string RuleBackend::complete(const CompletionRequest& request) {
  const std::string& id = request.template_id;
  if (id == templates::kPillars) return respond_pillars(request);
  if (id == templates::kAnnotate) return respond_annotation(request);
  if (id == templates::kRank) return respond_ranking(request, embedder_);
  if (id == templates::kCharacter) return respond_character(request);
  if (id == templates::kStory) return respond_story(request);
  throw Error(Errc::BackendUnavailable, "offline backend has no rule for template '" + id + "'");
}

void register_offline_backends(Gateway& gateway) {
  gateway.register_backend("offline", std::make_shared<RuleBackend>());
  gateway.register_embedder("offline", std::make_shared<HashingEmbedder>());
}

}  // namespace somonitor::llm
