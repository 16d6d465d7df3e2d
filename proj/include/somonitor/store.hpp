#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "somonitor/domain.hpp"

namespace somonitor::store {

inline constexpr int kSchemaVersion = 1;

enum class DatasetFormat { Jsonl, Csv };
DatasetFormat parse_format(std::string_view s);

struct DatasetHandle {
  std::string dataset_id;
  std::size_t item_count = 0;
  std::string source_path;
  std::string checksum;

  bool operator==(const DatasetHandle&) const = default;
};

struct BrandShare {
  std::size_t count = 0;
  double share = 0.0;
};

struct DatasetStats {
  std::size_t total = 0;
  std::size_t ads = 0;
  std::size_t organic = 0;
  std::map<std::string, BrandShare> per_brand;
};

struct DateRange {
  Timestamp from;  // inclusive
  Timestamp to;    // inclusive
};

struct SubsetFilter {
  std::optional<std::set<std::string>> brands;
  std::optional<ContentKind> kind;
  std::optional<Objective> objective;
  std::optional<DateRange> date_range;

  bool empty() const { return !brands && !kind && !objective && !date_range; }
  bool matches(const AdCreative& ad) const;
  // Stable audit string, e.g. "kind=Ad;brands=A|B".
  std::string description() const;
};

// Conjunction of two filters; set-valued fields intersect, ranges narrow.
SubsetFilter operator&&(const SubsetFilter& a, const SubsetFilter& b);

struct ArtifactKey {
  std::string kind;
  std::string dataset_id;
  std::string run_id;
};

struct Receipt {
  ArtifactKey key;
  std::string checksum;
  std::filesystem::path path;
};

// Parsing only; no persistence. Throws ParseError / ValidationError / DuplicateId.
std::vector<AdCreative> parse_records(const std::filesystem::path& path, DatasetFormat format);
std::string canonical_jsonl(const std::vector<AdCreative>& records);
DatasetStats compute_stats(const std::vector<AdCreative>& records);

// Directory-backed store:
//   <root>/datasets/<id>/records.jsonl, handle.json
//   <root>/artifacts/<kind>/<dataset_id>/<run_id>.json
//   <root>/audit/gateway.jsonl
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  DatasetHandle load_dataset(const std::filesystem::path& path, DatasetFormat format);
  // Persists already-validated records; deduplicated by checksum.
  DatasetHandle import_records(const std::vector<AdCreative>& records, const std::string& source);

  DatasetHandle handle(const std::string& dataset_id) const;
  std::vector<std::string> list_datasets() const;
  std::shared_ptr<const std::vector<AdCreative>> records(const std::string& dataset_id) const;

  DatasetStats dataset_stats(const DatasetHandle& h) const;
  DatasetHandle filter_subset(const DatasetHandle& h, const SubsetFilter& filter);

  Receipt put_artifact(const ArtifactKey& key, const Json& value);
  Json get_artifact(const ArtifactKey& key) const;
  bool has_artifact(const ArtifactKey& key) const;
  std::vector<std::string> list_runs(const std::string& kind, const std::string& dataset_id) const;
  std::filesystem::path artifact_path(const ArtifactKey& key) const;

  void append_audit(const Json& record);

 private:
  std::mutex& key_mutex(const std::string& key);

  std::filesystem::path root_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const std::vector<AdCreative>>> cache_;
  std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
  std::mutex audit_mu_;
};

// Atomic replace: readers see the old file, the new file, or nothing.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

void to_json(Json& j, const DatasetHandle& h);
void from_json(const Json& j, DatasetHandle& h);
void to_json(Json& j, const DatasetStats& s);

}  // namespace somonitor::store
