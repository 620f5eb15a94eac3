#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xview/error.hpp"
#include "xview/feature_store.hpp"

namespace xview::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("xview_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
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

inline FeatureMap random_map(std::mt19937_64& rng, std::uint32_t c, std::uint32_t h, std::uint32_t w,
                             double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  FeatureMap m;
  m.channels = c;
  m.height = h;
  m.width = w;
  m.data.resize(std::size_t{c} * h * w);
  for (float& v : m.data) v = static_cast<float>(dist(rng));
  return m;
}

inline FeatureMap map_from(std::uint32_t c, std::uint32_t h, std::uint32_t w, std::vector<float> data) {
  FeatureMap m;
  m.channels = c;
  m.height = h;
  m.width = w;
  m.data = std::move(data);
  return m;
}

// Captures warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink(std::move(previous_)); }

  std::vector<std::string> messages;

 private:
  WarningSink previous_;
};

inline std::string error_message_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace xview::testing
