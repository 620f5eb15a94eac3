#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xview {

enum class Domain { Drone, Satellite };

std::string_view to_string(Domain domain);
Domain parse_domain(std::string_view text);
Domain opposite(Domain domain);

// Largest accepted C*H*W. Headers claiming more are rejected before allocation.
inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 28;

// Patch-feature tensor for one image: C x H x W floats, channel-major, then
// row-major inside each channel. Identity fields come from the manifest and
// are empty when the map was read straight from a tensor file.
struct FeatureMap {
  std::string image_id;
  Domain domain = Domain::Drone;
  std::string location_id;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  std::size_t num_patches() const { return std::size_t{height} * width; }
  std::size_t index(std::uint32_t k, std::uint32_t i, std::uint32_t j) const {
    return (std::size_t{k} * height + i) * width + j;
  }
  float at(std::uint32_t k, std::uint32_t i, std::uint32_t j) const { return data[index(k, i, j)]; }

  // Throws DataValidation on bad dims, wrong payload length or non-finite values.
  void validate() const;

  // Geometry + payload equality (bitwise on the floats).
  bool same_tensor(const FeatureMap& other) const;
};

inline constexpr std::size_t kTensorHeaderBytes = 28;

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& map);
FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes);

void write_feature_map(const FeatureMap& map, const std::filesystem::path& path);
FeatureMap read_feature_map(const std::filesystem::path& path);

struct ManifestEntry {
  std::string image_id;
  Domain domain = Domain::Drone;
  std::string location_id;
  std::string tensor_path;            // as written in the manifest
  std::filesystem::path resolved_path;  // relative paths resolved against the manifest dir
};

// A parsed manifest. Tensors are read on demand through load().
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::vector<ManifestEntry> entries);

  const std::string& name() const { return name_; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::size_t> indices_of(Domain domain) const;
  std::optional<std::size_t> find(std::string_view image_id) const;

  // Reads and validates the tensor for entry i, attaching manifest metadata.
  FeatureMap load(std::size_t i) const;

  // Throws unless both domains are non-empty.
  void require_both_domains() const;

 private:
  std::string name_;
  std::vector<ManifestEntry> entries_;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);
Dataset parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

// Serializes with tensor_path kept as given in each entry.
std::string manifest_to_json(const Dataset& dataset);

}  // namespace xview
