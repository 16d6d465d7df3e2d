#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "somonitor/gateway.hpp"

namespace somonitor::llm {

inline constexpr int kHashDim = 256;
inline constexpr std::uint64_t kBucketSeed = 0x736f6d6f6e69746fULL;  // "somonito"
inline constexpr std::uint64_t kSignSeed = 0x7369676e73656564ULL;    // "signseed"

// Feature-hashing embedder. Tokens are ICU word-boundary segments, lower-cased;
// features are unigrams and space-joined bigrams. Each feature adds
// sign(hash64(f, kSignSeed) & 1 ? +1 : -1) to bucket hash64(f, kBucketSeed) % dim.
class HashingEmbedder : public EmbeddingBackend {
 public:
  explicit HashingEmbedder(int dim = kHashDim) : dim_(dim) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::vector<double> embed_one(std::string_view text) const;

 private:
  int dim_;
};

// Canned responses keyed by request digest or by template id + bindings.
class ScriptedBackend : public CompletionBackend {
 public:
  void add_digest(const std::string& digest, std::string response);
  void add(const std::string& template_id, const Bindings& bindings, std::string response);
  // {"entries": [{"digest": ..., "response": ...} | {"template_id": ..., "bindings": {...}, "response": ...}]}
  void load_fixtures(const std::filesystem::path& path);

  std::string complete(const CompletionRequest& request) override;

  static std::string template_key(const std::string& template_id, const Bindings& bindings);

 private:
  std::mutex mu_;
  std::map<std::string, std::string> responses_;
};

// Deterministic rule-based stand-in for an LLM that understands the shipped
// templates: pillars, cluster annotation, ranking, character and story.
class RuleBackend : public CompletionBackend {
 public:
  std::string complete(const CompletionRequest& request) override;

 private:
  HashingEmbedder embedder_;
};

// Registers "offline" (RuleBackend + HashingEmbedder) on the gateway.
void register_offline_backends(Gateway& gateway);

}  // namespace somonitor::llm
