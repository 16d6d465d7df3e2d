#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace somonitor {

using Json = nlohmann::json;
using Timestamp = std::chrono::sys_seconds;

enum class Objective { Sales, Conversion, Traffic, Other };
enum class ContentKind { Ad, Organic };
enum class CtrLabel { Low, Average, High };

std::string_view to_string(Objective o);
std::string_view to_string(ContentKind k);
std::string_view to_string(CtrLabel l);
Objective parse_objective(std::string_view s);
ContentKind parse_kind(std::string_view s);

// ISO-8601 UTC, "YYYY-MM-DDTHH:MM:SSZ". A bare date is accepted on input.
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(std::string_view s);

struct AdCreative {
  std::string id;
  std::string brand;
  Objective objective = Objective::Other;
  ContentKind kind = ContentKind::Ad;
  std::string text;
  std::optional<std::string> image_ref;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  Timestamp published_at{};

  bool operator==(const AdCreative&) const = default;
};

// Returns a description of the first violated invariant, or nullopt.
std::optional<std::string> validate(const AdCreative& ad);

// CTR keeps the exact counters next to the cached ratio.
struct CtrObservation {
  double value = 0.0;
  bool derived = false;
  std::uint64_t clicks = 0;
  std::uint64_t impressions = 0;
};

CtrObservation ctr(std::uint64_t clicks, std::uint64_t impressions);
inline CtrObservation ctr(const AdCreative& ad) { return ctr(ad.clicks, ad.impressions); }
CtrObservation supplied_ctr(double value);

struct CtrThresholds {
  double lo = 0.0;
  double hi = 0.0;
};

// [0, lo) -> Low, [lo, hi) -> Average, [hi, 1] -> High.
CtrLabel tercile_label(double ctr_value, CtrThresholds thresholds);

struct ContentPillars {
  std::string audience;
  std::string need;
  std::string insight;
  std::string product;
  std::string archetype;
  std::string tone;
  std::string raw_response;

  bool operator==(const ContentPillars&) const = default;
};

struct CtrDistribution {
  double p_high = 0.0;
  double p_avg = 0.0;
  double p_low = 0.0;
};

bool is_simplex(const CtrDistribution& d, double tolerance = 1e-9);

struct ScoreLayer {
  double alpha = 1.0;
  double beta = 0.0;

  bool degenerate() const { return alpha == beta; }
};

void to_json(Json& j, const AdCreative& ad);
void from_json(const Json& j, AdCreative& ad);
void to_json(Json& j, const ContentPillars& p);
void from_json(const Json& j, ContentPillars& p);
void to_json(Json& j, const CtrDistribution& d);
void from_json(const Json& j, CtrDistribution& d);
void to_json(Json& j, const ScoreLayer& l);
void from_json(const Json& j, ScoreLayer& l);

}  // namespace somonitor
