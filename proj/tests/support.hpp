#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "somonitor/cluster.hpp"
#include "somonitor/domain.hpp"
#include "somonitor/gateway.hpp"

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("somonitor-test-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

inline somonitor::AdCreative make_ad(const std::string& id, std::uint64_t clicks, std::uint64_t impressions,
                                     const std::string& brand = "Zipto", const std::string& text = "") {
  somonitor::AdCreative ad;
  ad.id = id;
  ad.brand = brand;
  ad.objective = somonitor::Objective::Sales;
  ad.kind = somonitor::ContentKind::Ad;
  ad.text = text.empty() ? "Creative " + id + " from " + brand : text;
  ad.impressions = impressions;
  ad.clicks = clicks;
  ad.published_at = somonitor::parse_timestamp("2024-03-01T09:00:00Z");
  return ad;
}

inline somonitor::cluster::Matrix to_rows(const Eigen::MatrixXd& m) { return m; }

// Labels of every row of a partition that covers all rows, in row order.
inline std::vector<int> row_labels(const somonitor::cluster::Partition& p, std::size_t n) {
  std::vector<int> out(n, -1);
  for (std::size_t i = 0; i < p.members.size(); ++i) out[p.members[i]] = p.labels[i];
  return out;
}

inline std::shared_ptr<somonitor::llm::CallbackBackend> callback(somonitor::llm::CallbackBackend::Fn fn) {
  return std::make_shared<somonitor::llm::CallbackBackend>(std::move(fn));
}

// Gateway without retry backoff delays.
inline somonitor::llm::GatewayConfig fast_gateway() {
  somonitor::llm::GatewayConfig c;
  c.base_backoff = std::chrono::milliseconds(0);
  return c;
}

}  // namespace testing
