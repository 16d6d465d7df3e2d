#include "somonitor/pillars.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "somonitor/error.hpp"
#include "somonitor/templates.hpp"
#include "somonitor/text.hpp"

namespace somonitor::pillars {

const std::vector<std::string>& field_names() {
  static const std::vector<std::string> names = {"audience", "need", "insight", "product", "archetype", "tone"};
  return names;
}

namespace {

std::string* field_slot(ContentPillars& p, std::string_view name) {
  if (name == "audience") return &p.audience;
  if (name == "need") return &p.need;
  if (name == "insight") return &p.insight;
  if (name == "product") return &p.product;
  if (name == "archetype") return &p.archetype;
  if (name == "tone") return &p.tone;
  return nullptr;
}

std::string strip_markup(std::string s) {
  s = text::trim(s);
  while (!s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '#' || s.front() == ' ')) s.erase(0, 1);
  while (!s.empty() && (s.back() == '*' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

std::string format_pillars(const ContentPillars& p) {
  return "Audience: " + p.audience + "\nNeed: " + p.need + "\nInsight: " + p.insight + "\nProduct: " + p.product +
         "\nArchetype: " + p.archetype + "\nTone: " + p.tone + "\n";
}

ContentPillars parse_pillar_response(std::string_view response) {
  ContentPillars p;
  p.raw_response = std::string(response);
  std::set<std::string> seen;
  for (const auto& raw_line : text::split_lines(response)) {
    const std::string line = strip_markup(raw_line);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = text::to_lower_ascii(strip_markup(line.substr(0, colon)));
    std::string* slot = field_slot(p, key);
    if (slot == nullptr || seen.contains(key)) continue;
    std::string value = strip_markup(line.substr(colon + 1));
    if (value.empty()) continue;
    *slot = std::move(value);
    seen.insert(key);
  }
  std::vector<std::string> missing;
  for (const auto& name : field_names()) {
    if (!seen.contains(name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(Errc::ExtractionIncomplete, "missing pillar field(s): " + list, missing);
  }
  return p;
}

std::string ad_prompt_text(const AdCreative& ad) {
  std::string out = ad.text;
  if (ad.image_ref) out += (out.empty() ? "" : "\n") + std::string("[The ad also shows an image: ") + *ad.image_ref + "]";
  return out;
}

ContentPillars extract_pillars(const AdCreative& ad, const llm::PromptTemplate& tmpl, const std::string& backend_id,
                               llm::Gateway& gateway) {
  if (ad.text.empty() && !ad.image_ref) throw Error(Errc::InvalidArgument, "ad " + ad.id + " has no content");
  for (const char* needed : {"ad_text", "brand"}) {
    if (!tmpl.required_bindings.contains(needed)) {
      throw Error(Errc::InvalidArgument, "pillar template must use {" + std::string(needed) + "}");
    }
  }
  llm::CompletionRequest req;
  req.system_prompt = std::string(templates::kSystemPrompt);
  req.bindings = {{"ad_text", ad_prompt_text(ad)}, {"brand", ad.brand}};
  req.user_prompt = llm::render_prompt(tmpl, req.bindings);
  req.template_id = tmpl.template_id;
  req.backend_id = backend_id;
  req.temperature = gateway.config().temperature;
  req.seed = 0;
  return parse_pillar_response(gateway.complete(std::move(req)).text);
}

std::string batch_run_id(const std::string& dataset_id, const llm::PromptTemplate& tmpl, const std::string& backend_id) {
  return "pillars-" + text::sha256_hex(dataset_id + "\n" + tmpl.template_id + "\n" + tmpl.body + "\n" + backend_id).substr(0, 12);
}

PillarTable batch_extract(store::Store& store, const store::DatasetHandle& handle, const llm::PromptTemplate& tmpl,
                          const std::string& backend_id, llm::Gateway& gateway, const BatchOptions& options) {
  const auto ads = store.records(handle.dataset_id);
  const std::size_t n = ads->size();
  std::vector<std::optional<ContentPillars>> results(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;

  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        results[i] = extract_pillars((*ads)[i], tmpl, backend_id, gateway);
      } catch (const Error& e) {
        // Backend failures of a single ad count toward the failure ceiling like parse errors.
        errors[i] = e.what();
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (options.on_progress) {
        std::lock_guard lock(progress_mu);
        options.on_progress(static_cast<double>(finished) / static_cast<double>(n));
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.parallelism, static_cast<int>(n)));
  std::vector<std::jthread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  PillarTable table;
  table.dataset_id = handle.dataset_id;
  table.run_id = batch_run_id(handle.dataset_id, tmpl, backend_id);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = (*ads)[i].id;
    if (results[i]) {
      table.rows.emplace(id, std::move(*results[i]));
    } else {
      table.failures.emplace(id, errors[i]);
    }
  }
  if (n > 0 && static_cast<double>(table.failures.size()) / static_cast<double>(n) > options.max_failure_rate) {
    throw Error(Errc::BatchFailureRateExceeded,
                std::to_string(table.failures.size()) + " of " + std::to_string(n) + " extractions failed");
  }
  const Json doc = table;
  store.put_artifact({std::string(kArtifactKind), handle.dataset_id, table.run_id}, doc);
  store.put_artifact({std::string(kArtifactKind), handle.dataset_id, "latest"}, doc);
  return table;
}

PillarTable load_latest(const store::Store& store, const std::string& dataset_id) {
  return store.get_artifact({std::string(kArtifactKind), dataset_id, "latest"}).get<PillarTable>();
}

void to_json(Json& j, const PillarTable& t) {
  j = Json{{"dataset_id", t.dataset_id}, {"run_id", t.run_id}, {"rows", t.rows}, {"failures", t.failures}};
}

void from_json(const Json& j, PillarTable& t) {
  t.dataset_id = j.at("dataset_id").get<std::string>();
  t.run_id = j.at("run_id").get<std::string>();
  t.rows = j.at("rows").get<std::map<std::string, ContentPillars>>();
  t.failures = j.at("failures").get<std::map<std::string, std::string>>();
}

}  // namespace somonitor::pillars
