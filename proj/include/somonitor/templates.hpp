#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "somonitor/gateway.hpp"

namespace somonitor::templates {

inline constexpr std::string_view kPillars = "pillars.v1";
inline constexpr std::string_view kAnnotate = "annotate.v1";
inline constexpr std::string_view kRank = "rank.v1";
inline constexpr std::string_view kCharacter = "character.v1";
inline constexpr std::string_view kStory = "story.v1";

inline constexpr std::string_view kSystemPrompt =
    "You are a marketing analytics assistant. Follow the requested output format exactly.";

// Templates compiled in from templates/*.v1.
const llm::PromptTemplate& builtin(std::string_view template_id);
std::vector<std::string> builtin_ids();

// Reads <dir>/<template_id>; falls back to the built-in copy when the file is absent.
llm::PromptTemplate load(std::string_view template_id, const std::filesystem::path& dir = {});

}  // namespace somonitor::templates
