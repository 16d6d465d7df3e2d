#include "somonitor/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "somonitor/store.hpp"

namespace somonitor::synthetic {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

std::string ad_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04zu", prefix, i + 1);
  return buf;
}

Timestamp day(int y, unsigned m, unsigned d, int hour = 9) {
  using namespace std::chrono;
  return sys_days{year{y} / month{m} / std::chrono::day{d}} + hours{hour};
}

const std::array<std::pair<const char*, std::array<const char*, 4>>, 3> kPersonas = {{
    {"Busy office workers", {"who commute downtown every weekday", "heading to the office before nine",
                             "hopping between meetings across the city", "working long hours in the business district"}},
    {"Young parents", {"planning family weekend outings", "taking the kids to school each morning",
                       "visiting grandparents with a car seat in tow", "running household errands with toddlers"}},
    {"Small business owners", {"managing travel for their staff", "booking rides for client visits",
                               "keeping company transport costs in check", "arranging airport transfers for the team"}},
}};

const std::array<std::pair<const char*, std::array<const char*, 4>>, 3> kChallenges = {{
    {"Waiting too long for a ride", {"during the evening rush", "when the rain starts", "after late dinners downtown",
                                     "on crowded public holidays"}},
    {"Fares that jump without warning", {"late at night", "from one trip to the next", "before you even book",
                                         "whenever demand spikes"}},
    {"Employees worn down by stressful commutes", {"lose focus at work", "arrive at the office exhausted",
                                                   "grow unhappy with their daily routine",
                                                   "see their job satisfaction slipping"}},
}};

struct Hook {
  const char* text;
  double lift;
};

const std::array<Hook, 8> kHooks = {{
    {"Save 20% on your first ride today", 0.010},
    {"Get a free ride credit now", 0.012},
    {"Enjoy instant cashback on every trip", 0.009},
    {"Unlock exclusive bonus rewards this week", 0.008},
    {"Book in a few taps", 0.0},
    {"Rides are available across the city", 0.0},
    {"Terms and conditions apply to all promotions", -0.006},
    {"Fees are subject to change under our pricing policy", -0.007},
}};

const std::array<const char*, 3> kProducts = {"Rides", "Family", "Business"};

}  // namespace

DemoTruth demo_truth(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x7472757468ULL);
  DemoTruth t;
  for (int i = 0; i < 200; ++i) {
    t.persona.push_back(static_cast<int>(pick(rng, 3)));
    t.challenge.push_back(static_cast<int>(pick(rng, 3)));
  }
  return t;
}

std::vector<AdCreative> demo_corpus(std::uint64_t seed) {
  const DemoTruth truth = demo_truth(seed);
  std::mt19937_64 rng(seed);
  std::vector<AdCreative> ads;
  for (std::size_t i = 0; i < 200; ++i) {
    const int p = truth.persona[i];
    const int c = truth.challenge[i];
    AdCreative ad;
    ad.id = ad_id("ad", i);
    const bool candidate = i < 16;
    if (candidate) {
      ad.brand = kOwnBrand;
      ad.objective = Objective::Sales;
      ad.published_at = day(2024, 6, static_cast<unsigned>(1 + pick(rng, 28)));
    } else {
      const double competitor_p = (p == 2 ? 0.4 : 0.0) + (c == 2 ? 0.4 : 0.0) + 0.15;
      ad.brand = uniform01(rng) < competitor_p ? kCompetitorBrand : kOwnBrand;
      static const std::array<Objective, 3> objectives = {Objective::Sales, Objective::Conversion, Objective::Traffic};
      ad.objective = objectives[pick(rng, 3)];
      ad.published_at = day(2024, static_cast<unsigned>(1 + pick(rng, 5)), static_cast<unsigned>(1 + pick(rng, 28)));
    }
    ad.kind = (!candidate && uniform01(rng) < 0.1) ? ContentKind::Organic : ContentKind::Ad;
    const auto& persona = kPersonas[static_cast<std::size_t>(p)];
    const auto& challenge = kChallenges[static_cast<std::size_t>(c)];
    const Hook& hook = kHooks[pick(rng, kHooks.size())];
    ad.text = std::string(persona.first) + " " + persona.second[pick(rng, 4)] + ". " + challenge.first + " " +
              challenge.second[pick(rng, 4)] + ". " + hook.text + ". " + ad.brand + " " +
              kProducts[static_cast<std::size_t>(p)] + " gets you there without the hassle.";
    ad.impressions = 2000 + pick(rng, 18001);
    const double rate = std::max(0.001, 0.015 + hook.lift + 0.006 * (uniform01(rng) - 0.5));
    ad.clicks = static_cast<std::uint64_t>(std::llround(rate * static_cast<double>(ad.impressions)));
    ads.push_back(std::move(ad));
  }
  return ads;
}

std::vector<AdCreative> brand_split_corpus(std::size_t first_count, std::size_t second_count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AdCreative> ads;
  for (std::size_t i = 0; i < first_count + second_count; ++i) {
    AdCreative ad;
    ad.id = ad_id("bs", i);
    ad.brand = i < first_count ? "Brand A" : "Brand B";
    ad.objective = Objective::Sales;
    ad.text = "Creative number " + std::to_string(i + 1) + " for " + ad.brand + ".";
    ad.impressions = 1000 + pick(rng, 9001);
    ad.clicks = pick(rng, 100);
    ad.published_at = day(2023, static_cast<unsigned>(1 + pick(rng, 12)), static_cast<unsigned>(1 + pick(rng, 28)));
    ads.push_back(std::move(ad));
  }
  return ads;
}

std::vector<AdCreative> kind_split_corpus(std::size_t ad_count, std::size_t organic_count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AdCreative> ads;
  for (std::size_t i = 0; i < ad_count + organic_count; ++i) {
    AdCreative ad;
    ad.id = ad_id("ks", i);
    ad.brand = pick(rng, 2) == 0 ? "Brand A" : "Brand B";
    ad.kind = i < ad_count ? ContentKind::Ad : ContentKind::Organic;
    ad.objective = ad.kind == ContentKind::Ad ? Objective::Conversion : Objective::Other;
    ad.text = std::string(ad.kind == ContentKind::Ad ? "Paid creative " : "Organic post ") + std::to_string(i + 1) + ".";
    ad.impressions = 500 + pick(rng, 5001);
    ad.clicks = pick(rng, 50);
    ad.published_at = day(2023, static_cast<unsigned>(1 + pick(rng, 12)), static_cast<unsigned>(1 + pick(rng, 28)));
    ads.push_back(std::move(ad));
  }
  return ads;
}

void write_jsonl(const std::string& path, const std::vector<AdCreative>& ads) {
  store::write_file_atomic(path, store::canonical_jsonl(ads));
}

}  // namespace somonitor::synthetic
