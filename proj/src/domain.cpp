#include "somonitor/domain.hpp"

#include <cmath>
#include <cstdio>

#include "somonitor/error.hpp"

namespace somonitor {

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::Sales: return "Sales";
    case Objective::Conversion: return "Conversion";
    case Objective::Traffic: return "Traffic";
    case Objective::Other: return "Other";
  }
  return "Other";
}

std::string_view to_string(ContentKind k) {
  return k == ContentKind::Ad ? "Ad" : "Organic";
}

std::string_view to_string(CtrLabel l) {
  switch (l) {
    case CtrLabel::Low: return "Low";
    case CtrLabel::Average: return "Average";
    case CtrLabel::High: return "High";
  }
  return "Low";
}

Objective parse_objective(std::string_view s) {
  if (s == "Sales") return Objective::Sales;
  if (s == "Conversion") return Objective::Conversion;
  if (s == "Traffic") return Objective::Traffic;
  if (s == "Other") return Objective::Other;
  throw Error(Errc::ValidationError, "unknown objective '" + std::string(s) + "'");
}

ContentKind parse_kind(std::string_view s) {
  if (s == "Ad") return ContentKind::Ad;
  if (s == "Organic") return ContentKind::Organic;
  throw Error(Errc::ValidationError, "unknown kind '" + std::string(s) + "'");
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

Timestamp parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, sec = 0;
  const std::string str(s);
  char tail = 0;
  int fields = std::sscanf(str.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail);
  const bool date_only = fields == 3 && str.size() == 10;
  if (!date_only && !(fields == 7 && tail == 'Z' && str.size() == 20)) {
    throw Error(Errc::ValidationError, "bad timestamp '" + str + "'");
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59) {
    throw Error(Errc::ValidationError, "bad timestamp '" + str + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

std::optional<std::string> validate(const AdCreative& ad) {
  if (ad.id.empty()) return "empty id";
  if (ad.clicks > ad.impressions) return "clicks exceed impressions";
  if (ad.text.empty() && !ad.image_ref) return "empty text without image_ref";
  return std::nullopt;
}

CtrObservation ctr(std::uint64_t clicks, std::uint64_t impressions) {
  if (impressions == 0) throw Error(Errc::ZeroImpressions, "CTR undefined for zero impressions");
  if (clicks > impressions) {
    throw Error(Errc::ClicksExceedImpressions,
                std::to_string(clicks) + " clicks > " + std::to_string(impressions) + " impressions");
  }
  return {static_cast<double>(clicks) / static_cast<double>(impressions), true, clicks, impressions};
}

CtrObservation supplied_ctr(double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw Error(Errc::InvalidArgument, "CTR outside [0,1]");
  return {value, false, 0, 0};
}

CtrLabel tercile_label(double ctr_value, CtrThresholds t) {
  if (t.lo > t.hi) throw Error(Errc::InvalidThresholds, "t_lo > t_hi");
  if (ctr_value < t.lo) return CtrLabel::Low;
  if (ctr_value < t.hi) return CtrLabel::Average;
  return CtrLabel::High;
}

bool is_simplex(const CtrDistribution& d, double tolerance) {
  for (double p : {d.p_high, d.p_avg, d.p_low}) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
  }
  return std::abs(d.p_high + d.p_avg + d.p_low - 1.0) <= tolerance;
}

void to_json(Json& j, const AdCreative& ad) {
  j = Json{{"id", ad.id},
           {"brand", ad.brand},
           {"objective", to_string(ad.objective)},
           {"kind", to_string(ad.kind)},
           {"text", ad.text},
           {"impressions", ad.impressions},
           {"clicks", ad.clicks},
           {"published_at", format_timestamp(ad.published_at)}};
  if (ad.image_ref) j["image_ref"] = *ad.image_ref;
}

void from_json(const Json& j, AdCreative& ad) {
  ad.id = j.at("id").get<std::string>();
  ad.brand = j.at("brand").get<std::string>();
  ad.objective = parse_objective(j.at("objective").get<std::string>());
  ad.kind = parse_kind(j.at("kind").get<std::string>());
  ad.text = j.value("text", std::string{});
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
    ad.image_ref = it->get<std::string>();
  } else {
    ad.image_ref.reset();
  }
  const auto& imp = j.at("impressions");
  const auto& clk = j.at("clicks");
  if (!imp.is_number_integer() || !clk.is_number_integer() || imp.get<std::int64_t>() < 0 ||
      clk.get<std::int64_t>() < 0) {
    throw Error(Errc::ValidationError, "impressions/clicks must be non-negative integers");
  }
  ad.impressions = imp.get<std::uint64_t>();
  ad.clicks = clk.get<std::uint64_t>();
  ad.published_at = parse_timestamp(j.at("published_at").get<std::string>());
}

void to_json(Json& j, const ContentPillars& p) {
  j = Json{{"audience", p.audience}, {"need", p.need},           {"insight", p.insight},
           {"product", p.product},   {"archetype", p.archetype}, {"tone", p.tone},
           {"raw_response", p.raw_response}};
}

void from_json(const Json& j, ContentPillars& p) {
  p.audience = j.at("audience").get<std::string>();
  p.need = j.at("need").get<std::string>();
  p.insight = j.at("insight").get<std::string>();
  p.product = j.at("product").get<std::string>();
  p.archetype = j.at("archetype").get<std::string>();
  p.tone = j.at("tone").get<std::string>();
  p.raw_response = j.value("raw_response", std::string{});
}

void to_json(Json& j, const CtrDistribution& d) {
  j = Json{{"p_high", d.p_high}, {"p_avg", d.p_avg}, {"p_low", d.p_low}};
}

void from_json(const Json& j, CtrDistribution& d) {
  d.p_high = j.at("p_high").get<double>();
  d.p_avg = j.at("p_avg").get<double>();
  d.p_low = j.at("p_low").get<double>();
}

void to_json(Json& j, const ScoreLayer& l) { j = Json{{"alpha", l.alpha}, {"beta", l.beta}}; }

void from_json(const Json& j, ScoreLayer& l) {
  l.alpha = j.at("alpha").get<double>();
  l.beta = j.at("beta").get<double>();
}

}  // namespace somonitor
