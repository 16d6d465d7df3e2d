#include "somonitor/store.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <unistd.h>

#include "somonitor/error.hpp"
#include "somonitor/text.hpp"

namespace fs = std::filesystem;

namespace somonitor::store {

DatasetFormat parse_format(std::string_view s) {
  if (s == "jsonl") return DatasetFormat::Jsonl;
  if (s == "csv") return DatasetFormat::Csv;
  throw Error(Errc::InvalidArgument, "unknown dataset format '" + std::string(s) + "'");
}

bool SubsetFilter::matches(const AdCreative& ad) const {
  if (brands && !brands->contains(ad.brand)) return false;
  if (kind && ad.kind != *kind) return false;
  if (objective && ad.objective != *objective) return false;
  if (date_range && (ad.published_at < date_range->from || ad.published_at > date_range->to)) return false;
  return true;
}

std::string SubsetFilter::description() const {
  std::vector<std::string> parts;
  if (brands) {
    std::string b = "brands=";
    bool first = true;
    for (const auto& name : *brands) {
      if (!first) b += "|";
      b += name;
      first = false;
    }
    parts.push_back(b);
  }
  if (kind) parts.push_back("kind=" + std::string(to_string(*kind)));
  if (objective) parts.push_back("objective=" + std::string(to_string(*objective)));
  if (date_range) {
    parts.push_back("date=" + format_timestamp(date_range->from) + ".." + format_timestamp(date_range->to));
  }
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ";" : "") + parts[i];
  return out.empty() ? "all" : out;
}

SubsetFilter operator&&(const SubsetFilter& a, const SubsetFilter& b) {
  SubsetFilter out = a;
  if (b.brands) {
    if (!out.brands) {
      out.brands = b.brands;
    } else {
      std::set<std::string> both;
      std::set_intersection(out.brands->begin(), out.brands->end(), b.brands->begin(), b.brands->end(),
                            std::inserter(both, both.end()));
      out.brands = std::move(both);
    }
  }
  // Conflicting enum constraints yield an unsatisfiable filter: an empty brand set.
  if (b.kind) {
    if (out.kind && *out.kind != *b.kind) out.brands = std::set<std::string>{};
    out.kind = b.kind;
  }
  if (b.objective) {
    if (out.objective && *out.objective != *b.objective) out.brands = std::set<std::string>{};
    out.objective = b.objective;
  }
  if (b.date_range) {
    if (!out.date_range) {
      out.date_range = b.date_range;
    } else {
      out.date_range->from = std::max(out.date_range->from, b.date_range->from);
      out.date_range->to = std::min(out.date_range->to, b.date_range->to);
    }
  }
  return out;
}

namespace {

struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180: quoted fields may contain separators, doubled quotes and newlines.
std::vector<CsvRecord> parse_csv(const std::string& content) {
  std::vector<CsvRecord> out;
  CsvRecord current{1, {}};
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_record = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    if (!(current.fields.size() == 1 && current.fields[0].empty())) out.push_back(std::move(current));
    current = CsvRecord{line, {}};
    field_started = false;
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      current.fields.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n') {
      ++line;
      end_record();
    } else if (c != '\r') {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw Error(Errc::ParseError, "unterminated quote at line " + std::to_string(current.line),
                          {"line " + std::to_string(current.line)});
  if (!field.empty() || !current.fields.empty()) end_record();
  return out;
}

const std::map<std::string, std::string>& csv_header_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"id", "id"},
      {"ad_id", "id"},
      {"brand", "brand"},
      {"objective", "objective"},
      {"kind", "kind"},
      {"text", "text"},
      {"image_ref", "image_ref"},
      {"image", "image_ref"},
      {"impressions", "impressions"},
      {"clicks", "clicks"},
      {"published_at", "published_at"},
      {"date", "published_at"},
  };
  return aliases;
}

Json csv_row_to_json(const std::vector<std::string>& header, const CsvRecord& rec) {
  if (rec.fields.size() != header.size()) {
    throw Error(Errc::ParseError,
                "line " + std::to_string(rec.line) + ": expected " + std::to_string(header.size()) + " fields",
                {"line " + std::to_string(rec.line)});
  }
  Json j = Json::object();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string& name = header[i];
    const std::string& v = rec.fields[i];
    if (name == "impressions" || name == "clicks") {
      std::int64_t n = 0;
      std::size_t used = 0;
      try {
        n = std::stoll(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != v.size()) {
        throw Error(Errc::ParseError, "line " + std::to_string(rec.line) + ": bad integer in " + name,
                    {"line " + std::to_string(rec.line)});
      }
      j[name] = n;
    } else if (name == "image_ref") {
      if (!v.empty()) j[name] = v;
    } else {
      j[name] = v;
    }
  }
  return j;
}

std::vector<std::pair<std::size_t, Json>> read_raw_records(const fs::path& path, DatasetFormat format) {
  if (!fs::exists(path)) throw Error(Errc::ParseError, "no such file: " + path.string());
  const std::string content = read_file(path);
  std::vector<std::pair<std::size_t, Json>> out;
  if (format == DatasetFormat::Jsonl) {
    std::size_t line_no = 0;
    for (const auto& line : text::split_lines(content)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      try {
        out.emplace_back(line_no, Json::parse(line));
      } catch (const Json::parse_error& e) {
        throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": " + e.what(),
                    {"line " + std::to_string(line_no)});
      }
    }
    return out;
  }
  auto rows = parse_csv(content);
  if (rows.empty()) return out;
  std::vector<std::string> header;
  for (const auto& h : rows.front().fields) {
    const auto& aliases = csv_header_aliases();
    auto it = aliases.find(text::to_lower_ascii(text::trim(h)));
    if (it == aliases.end()) throw Error(Errc::ParseError, "unknown CSV column '" + h + "'", {"line 1"});
    header.push_back(it->second);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) out.emplace_back(rows[i].line, csv_row_to_json(header, rows[i]));
  return out;
}

std::string random_suffix() {
  static std::atomic<unsigned long> counter{0};
  return std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + random_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::NotFound, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<AdCreative> parse_records(const fs::path& path, DatasetFormat format) {
  std::vector<AdCreative> records;
  std::vector<std::string> problems;
  std::vector<std::string> duplicates;
  std::unordered_set<std::string> seen;
  for (auto& [line, raw] : read_raw_records(path, format)) {
    AdCreative ad;
    try {
      ad = raw.get<AdCreative>();
    } catch (const Error& e) {
      problems.push_back("line " + std::to_string(line) + ": " + e.what());
      continue;
    } catch (const Json::exception& e) {
      problems.push_back("line " + std::to_string(line) + ": " + e.what());
      continue;
    }
    if (auto why = validate(ad)) {
      problems.push_back("line " + std::to_string(line) + ": " + *why);
      continue;
    }
    if (!seen.insert(ad.id).second) {
      duplicates.push_back("line " + std::to_string(line) + ": " + ad.id);
      continue;
    }
    records.push_back(std::move(ad));
  }
  if (!problems.empty()) {
    throw Error(Errc::ValidationError, std::to_string(problems.size()) + " invalid record(s); first " + problems.front(),
                problems);
  }
  if (!duplicates.empty()) {
    throw Error(Errc::DuplicateId, "duplicate id at " + duplicates.front(), duplicates);
  }
  return records;
}

std::string canonical_jsonl(const std::vector<AdCreative>& records) {
  std::string out;
  for (const auto& ad : records) {
    out += Json(ad).dump();
    out += '\n';
  }
  return out;
}

DatasetStats compute_stats(const std::vector<AdCreative>& records) {
  DatasetStats s;
  s.total = records.size();
  for (const auto& ad : records) {
    (ad.kind == ContentKind::Ad ? s.ads : s.organic) += 1;
    s.per_brand[ad.brand].count += 1;
  }
  for (auto& [brand, bs] : s.per_brand) {
    bs.share = static_cast<double>(bs.count) / static_cast<double>(s.total);
  }
  return s;
}

Store::Store(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "datasets");
  fs::create_directories(root_ / "artifacts");
}

DatasetHandle Store::load_dataset(const fs::path& path, DatasetFormat format) {
  return import_records(parse_records(path, format), path.string());
}

DatasetHandle Store::import_records(const std::vector<AdCreative>& records, const std::string& source) {
  std::unordered_set<std::string> ids;
  for (const auto& ad : records) {
    if (auto why = validate(ad)) throw Error(Errc::ValidationError, ad.id + ": " + *why, {ad.id});
    if (!ids.insert(ad.id).second) throw Error(Errc::DuplicateId, "duplicate id " + ad.id, {ad.id});
  }
  const std::string content = canonical_jsonl(records);
  DatasetHandle h;
  h.checksum = text::sha256_hex(content);
  h.dataset_id = "ds-" + h.checksum.substr(0, 16);
  h.item_count = records.size();
  h.source_path = source;

  const fs::path dir = root_ / "datasets" / h.dataset_id;
  std::lock_guard lock(key_mutex("dataset/" + h.dataset_id));
  if (fs::exists(dir / "handle.json")) return handle(h.dataset_id);
  write_file_atomic(dir / "records.jsonl", content);
  write_file_atomic(dir / "handle.json", Json(h).dump(2) + "\n");
  return h;
}

DatasetHandle Store::handle(const std::string& dataset_id) const {
  const fs::path p = root_ / "datasets" / dataset_id / "handle.json";
  if (dataset_id.empty() || dataset_id.find('/') != std::string::npos || !fs::exists(p)) {
    throw Error(Errc::UnknownDataset, "unknown dataset '" + dataset_id + "'", {dataset_id});
  }
  return Json::parse(read_file(p)).get<DatasetHandle>();
}

std::vector<std::string> Store::list_datasets() const {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root_ / "datasets")) {
    if (fs::exists(e.path() / "handle.json")) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<const std::vector<AdCreative>> Store::records(const std::string& dataset_id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(dataset_id); it != cache_.end()) return it->second;
  }
  const DatasetHandle h = handle(dataset_id);
  auto recs = std::make_shared<std::vector<AdCreative>>();
  const std::string content = read_file(root_ / "datasets" / dataset_id / "records.jsonl");
  for (const auto& line : text::split_lines(content)) {
    if (!line.empty()) recs->push_back(Json::parse(line).get<AdCreative>());
  }
  if (recs->size() != h.item_count) {
    throw Error(Errc::ValidationError, "record count mismatch for " + dataset_id);
  }
  std::lock_guard lock(mu_);
  return cache_.emplace(dataset_id, std::move(recs)).first->second;
}

DatasetStats Store::dataset_stats(const DatasetHandle& h) const { return compute_stats(*records(h.dataset_id)); }

DatasetHandle Store::filter_subset(const DatasetHandle& h, const SubsetFilter& filter) {
  auto all = records(h.dataset_id);
  std::vector<AdCreative> subset;
  std::copy_if(all->begin(), all->end(), std::back_inserter(subset),
               [&](const AdCreative& ad) { return filter.matches(ad); });
  return import_records(subset, h.dataset_id + "?" + filter.description());
}

fs::path Store::artifact_path(const ArtifactKey& key) const {
  for (const auto* part : {&key.kind, &key.dataset_id, &key.run_id}) {
    if (part->empty() || part->find('/') != std::string::npos || part->find("..") != std::string::npos) {
      throw Error(Errc::InvalidArgument, "malformed artifact key component '" + *part + "'");
    }
  }
  return root_ / "artifacts" / key.kind / key.dataset_id / (key.run_id + ".json");
}

Receipt Store::put_artifact(const ArtifactKey& key, const Json& value) {
  const fs::path p = artifact_path(key);
  Json doc = {{"schema_version", kSchemaVersion},
              {"kind", key.kind},
              {"dataset_id", key.dataset_id},
              {"run_id", key.run_id},
              {"payload", value}};
  const std::string content = doc.dump(2) + "\n";
  std::lock_guard lock(key_mutex(p.string()));
  write_file_atomic(p, content);
  return Receipt{key, text::sha256_hex(content), p};
}

Json Store::get_artifact(const ArtifactKey& key) const {
  const fs::path p = artifact_path(key);
  std::string content;
  try {
    content = read_file(p);
  } catch (const Error&) {
    throw Error(Errc::NotFound, "no artifact " + key.kind + "/" + key.dataset_id + "/" + key.run_id);
  }
  Json doc = Json::parse(content);
  if (doc.value("schema_version", 0) != kSchemaVersion) {
    throw Error(Errc::ValidationError, "unsupported artifact schema_version in " + p.string());
  }
  return doc.at("payload");
}

bool Store::has_artifact(const ArtifactKey& key) const { return fs::exists(artifact_path(key)); }

std::vector<std::string> Store::list_runs(const std::string& kind, const std::string& dataset_id) const {
  std::vector<std::string> out;
  const fs::path dir = root_ / "artifacts" / kind / dataset_id;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Store::append_audit(const Json& record) {
  std::lock_guard lock(audit_mu_);
  fs::create_directories(root_ / "audit");
  std::ofstream out(root_ / "audit" / "gateway.jsonl", std::ios::app);
  out << record.dump() << '\n';
}

std::mutex& Store::key_mutex(const std::string& key) {
  std::lock_guard lock(mu_);
  auto& slot = key_mutexes_[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void to_json(Json& j, const DatasetHandle& h) {
  j = Json{{"dataset_id", h.dataset_id},
           {"item_count", h.item_count},
           {"source_path", h.source_path},
           {"checksum", h.checksum}};
}

void from_json(const Json& j, DatasetHandle& h) {
  h.dataset_id = j.at("dataset_id").get<std::string>();
  h.item_count = j.at("item_count").get<std::size_t>();
  h.source_path = j.at("source_path").get<std::string>();
  h.checksum = j.at("checksum").get<std::string>();
}

void to_json(Json& j, const DatasetStats& s) {
  Json brands = Json::object();
  for (const auto& [b, bs] : s.per_brand) brands[b] = Json{{"count", bs.count}, {"share", bs.share}};
  j = Json{{"total", s.total}, {"ads", s.ads}, {"organic", s.organic}, {"per_brand", brands}};
}

}  // namespace somonitor::store
