#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somonitor/domain.hpp"

// Seeded generators for the bundled demo corpus and the ingest fixtures.
namespace somonitor::synthetic {

inline constexpr const char* kOwnBrand = "Zipto";
inline constexpr const char* kCompetitorBrand = "Rydex";
inline constexpr std::uint64_t kDemoSeed = 20240601;

// 200 ride-hailing ads from two fictional brands. Each ad opens with an
// audience sentence (one of three personas) and an insight sentence (one of
// three challenges), followed by a hook and a product line; CTR depends on the
// hook. Rydex dominates the third persona and the third challenge.
// The first 16 ads are Zipto sales ads published in June 2024 (the ranking
// candidates); every other ad is dated January to May 2024.
std::vector<AdCreative> demo_corpus(std::uint64_t seed = kDemoSeed);

struct DemoTruth {
  std::vector<int> persona;    // per ad, 0..2
  std::vector<int> challenge;  // per ad, 0..2
};
DemoTruth demo_truth(std::uint64_t seed = kDemoSeed);

// first_count ads of "Brand A" followed by second_count of "Brand B".
std::vector<AdCreative> brand_split_corpus(std::size_t first_count, std::size_t second_count, std::uint64_t seed = 1);

// ad_count paid ads followed by organic_count organic posts.
std::vector<AdCreative> kind_split_corpus(std::size_t ad_count, std::size_t organic_count, std::uint64_t seed = 2);

void write_jsonl(const std::string& path, const std::vector<AdCreative>& ads);

}  // namespace somonitor::synthetic
