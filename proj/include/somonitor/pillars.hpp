#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "somonitor/domain.hpp"
#include "somonitor/gateway.hpp"
#include "somonitor/store.hpp"

namespace somonitor::pillars {

inline constexpr std::string_view kArtifactKind = "pillars";

struct PillarTable {
  std::string dataset_id;
  std::string run_id;
  std::map<std::string, ContentPillars> rows;
  std::map<std::string, std::string> failures;
};

// The six pillar field names in canonical order.
const std::vector<std::string>& field_names();

// Canonical "Audience: ...\nNeed: ...\n..." rendering.
std::string format_pillars(const ContentPillars& p);

// Accepts "<Field>: <value>" lines in any order and case, with surrounding
// prose, bullets or bold markers. Throws ExtractionIncomplete naming the
// fields that are absent or empty.
ContentPillars parse_pillar_response(std::string_view response);

// Text sent to the model for one ad; image references become a context note.
std::string ad_prompt_text(const AdCreative& ad);

ContentPillars extract_pillars(const AdCreative& ad, const llm::PromptTemplate& tmpl, const std::string& backend_id,
                               llm::Gateway& gateway);

struct BatchOptions {
  double max_failure_rate = 0.2;
  int parallelism = 4;
  std::function<void(double)> on_progress;
};

// Deterministic run id for (dataset, template, backend).
std::string batch_run_id(const std::string& dataset_id, const llm::PromptTemplate& tmpl, const std::string& backend_id);

// One attempt per ad; partial failure tolerated up to max_failure_rate.
// Persists the table under pillars/<dataset_id>/<run_id> and .../latest.
PillarTable batch_extract(store::Store& store, const store::DatasetHandle& handle, const llm::PromptTemplate& tmpl,
                          const std::string& backend_id, llm::Gateway& gateway, const BatchOptions& options = {});

PillarTable load_latest(const store::Store& store, const std::string& dataset_id);

void to_json(Json& j, const PillarTable& t);
void from_json(const Json& j, PillarTable& t);

}  // namespace somonitor::pillars
