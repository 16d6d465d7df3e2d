#include "somonitor/settings.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "somonitor/error.hpp"
#include "somonitor/store.hpp"
#include "somonitor/text.hpp"

namespace somonitor {

namespace {

std::string unquote(std::string_view v) {
  std::string s = text::trim(v);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw Error(Errc::InvalidArgument,
              "config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(expected));
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  const std::string s = unquote(value);
  T out{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const std::string s = text::to_lower_ascii(unquote(value));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, value, "a boolean");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view value) {
  std::string s = text::trim(value);
  if (!s.empty() && s.front() == '[') s.erase(0, 1);
  if (!s.empty() && s.back() == ']') s.pop_back();
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (text::trim(item).empty()) continue;
    out.push_back(parse_number<int>(key, item));
  }
  if (out.empty()) bad_value(key, value, "a list of integers");
  return out;
}

using Setter = std::function<void(Settings&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"store", [](Settings& s, auto, auto v) { s.store_dir = unquote(v); }},
      {"templates", [](Settings& s, auto, auto v) { s.templates_dir = unquote(v); }},
      {"llm.backend", [](Settings& s, auto, auto v) { s.backend_id = unquote(v); }},
      {"llm.embedder", [](Settings& s, auto, auto v) { s.embed_backend_id = unquote(v); }},
      {"llm.fixtures", [](Settings& s, auto, auto v) { s.scripted_fixtures = unquote(v); }},
      {"llm.temperature", [](Settings& s, auto k, auto v) { s.gateway.temperature = parse_number<double>(k, v); }},
      {"llm.max_parallel", [](Settings& s, auto k, auto v) { s.gateway.max_parallel = parse_number<int>(k, v); }},
      {"llm.retry_limit", [](Settings& s, auto k, auto v) { s.gateway.retry_limit = parse_number<int>(k, v); }},
      {"llm.backoff_ms",
       [](Settings& s, auto k, auto v) { s.gateway.base_backoff = std::chrono::milliseconds(parse_number<int>(k, v)); }},
      {"pillars.max_failure_rate",
       [](Settings& s, auto k, auto v) { s.pillars_max_failure_rate = parse_number<double>(k, v); }},
      {"pillars.parallelism", [](Settings& s, auto k, auto v) { s.pillars_parallelism = parse_number<int>(k, v); }},
      {"cluster.k0", [](Settings& s, auto k, auto v) { s.cluster.k0 = parse_number<int>(k, v); }},
      {"cluster.k_max", [](Settings& s, auto k, auto v) { s.cluster.k_max = parse_number<int>(k, v); }},
      {"cluster.kmax", [](Settings& s, auto k, auto v) { s.cluster.k_max = parse_number<int>(k, v); }},
      {"cluster.seed", [](Settings& s, auto k, auto v) { s.cluster.seed = parse_number<std::uint64_t>(k, v); }},
      {"cluster.max_iterations", [](Settings& s, auto k, auto v) { s.cluster.max_iterations = parse_number<int>(k, v); }},
      {"cluster.outlier_percentile",
       [](Settings& s, auto k, auto v) { s.cluster.outlier_percentile = parse_number<double>(k, v); }},
      {"cluster.merge_pass", [](Settings& s, auto k, auto v) { s.cluster.merge_pass = parse_bool(k, v); }},
      {"rank.alpha", [](Settings& s, auto k, auto v) { s.rank.layer.alpha = parse_number<double>(k, v); }},
      {"rank.beta", [](Settings& s, auto k, auto v) { s.rank.layer.beta = parse_number<double>(k, v); }},
      {"rank.classifier", [](Settings& s, auto, auto v) { s.rank.classifier = unquote(v); }},
      {"rank.ensemble_runs", [](Settings& s, auto k, auto v) { s.rank.ensemble_runs = parse_number<int>(k, v); }},
      {"rank.grounded", [](Settings& s, auto k, auto v) { s.rank.grounded = parse_bool(k, v); }},
      {"rank.seed_base", [](Settings& s, auto k, auto v) { s.rank.seed_base = parse_number<std::int64_t>(k, v); }},
      {"rank.temperature", [](Settings& s, auto k, auto v) { s.rank.temperature = parse_number<double>(k, v); }},
      {"rank.grounding_dataset", [](Settings& s, auto, auto v) { s.rank.grounding_dataset_id = unquote(v); }},
      {"eval.relevance_size", [](Settings& s, auto k, auto v) { s.eval.relevance_size = parse_number<int>(k, v); }},
      {"eval.r", [](Settings& s, auto k, auto v) { s.eval.relevance_size = parse_number<int>(k, v); }},
      {"eval.cutoffs", [](Settings& s, auto k, auto v) { s.eval.cutoffs = parse_int_list(k, v); }},
      {"story.policy", [](Settings& s, auto, auto v) { s.story_policy = story::parse_policy(unquote(v)); }},
      {"story.own", [](Settings& s, auto, auto v) { s.own_brand = unquote(v); }},
      {"story.competitor", [](Settings& s, auto, auto v) { s.competitor_brand = unquote(v); }},
      {"api.host", [](Settings& s, auto, auto v) { s.api_host = unquote(v); }},
      {"api.port", [](Settings& s, auto k, auto v) { s.api_port = parse_number<int>(k, v); }},
      {"api.workers", [](Settings& s, auto k, auto v) { s.api_workers = parse_number<int>(k, v); }},
  };
  return table;
}

std::string strip_comment(std::string_view line) {
  bool in_quote = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quote) {
      if (c == quote) in_quote = false;
    } else if (c == '"' || c == '\'') {
      in_quote = true;
      quote = c;
    } else if (c == '#') {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

}  // namespace

void apply_setting(Settings& s, std::string_view key, std::string_view value) {
  const std::string k = text::to_lower_ascii(text::trim(key));
  auto it = setters().find(k);
  if (it == setters().end()) throw Error(Errc::InvalidArgument, "unknown config key '" + k + "'");
  it->second(s, k, value);
}

void apply_config_text(Settings& s, std::string_view doc) {
  std::string section;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(doc)) {
    ++line_no;
    const std::string line = text::trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = text::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ParseError, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = text::trim(line.substr(0, eq));
    const std::string full = section.empty() || key.find('.') != std::string::npos ? key : section + "." + key;
    try {
      apply_setting(s, full, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(Settings& s, const std::filesystem::path& path) { apply_config_text(s, store::read_file(path)); }

}  // namespace somonitor
