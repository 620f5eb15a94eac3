#include "xview/feature_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "xview/error.hpp"
#include "xview/io_util.hpp"

namespace xview {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'V', 'F', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kDtypeF32 = 0;

void check_dims(std::uint64_t c, std::uint64_t h, std::uint64_t w) {
  if (c == 0 || h == 0 || w == 0) {
    fail(ErrorKind::DataValidation, "tensor dimensions must be >= 1");
  }
  if (c * h * w > kMaxTensorElements) {
    fail(ErrorKind::DataValidation, "dimension overflow: C*H*W exceeds 2^28 elements");
  }
}

}  // namespace

std::string_view to_string(Domain domain) {
  return domain == Domain::Drone ? "drone" : "satellite";
}

Domain parse_domain(std::string_view text) {
  if (text == "drone") return Domain::Drone;
  if (text == "satellite") return Domain::Satellite;
  fail(ErrorKind::DataValidation, "unknown domain: '" + std::string(text) + "'");
}

Domain opposite(Domain domain) {
  return domain == Domain::Drone ? Domain::Satellite : Domain::Drone;
}

void FeatureMap::validate() const {
  check_dims(channels, height, width);
  if (data.size() != std::size_t{channels} * height * width) {
    fail(ErrorKind::DataValidation, "payload length does not match C*H*W");
  }
  for (float v : data) {
    if (!std::isfinite(v)) fail(ErrorKind::DataValidation, "non-finite value in tensor");
  }
}

bool FeatureMap::same_tensor(const FeatureMap& other) const {
  return channels == other.channels && height == other.height && width == other.width &&
         data.size() == other.data.size() &&
         std::memcmp(data.data(), other.data.data(), data.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_feature_map(const FeatureMap& map) {
  map.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kTensorHeaderBytes + map.data.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint16_t>(out, kDtypeF32);
  put_le<std::uint32_t>(out, map.channels);
  put_le<std::uint32_t>(out, map.height);
  put_le<std::uint32_t>(out, map.width);
  put_le<std::uint64_t>(out, 0);
  for (float v : map.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FeatureMap decode_feature_map(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTensorHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::DataValidation, "unrecognized format (bad magic)");
  }
  if (get_le<std::uint16_t>(bytes, 4) != kVersion) {
    fail(ErrorKind::DataValidation, "unsupported tensor version");
  }
  if (get_le<std::uint16_t>(bytes, 6) != kDtypeF32) {
    fail(ErrorKind::DataValidation, "unsupported tensor dtype");
  }
  FeatureMap map;
  map.channels = get_le<std::uint32_t>(bytes, 8);
  map.height = get_le<std::uint32_t>(bytes, 12);
  map.width = get_le<std::uint32_t>(bytes, 16);
  if (get_le<std::uint64_t>(bytes, 20) != 0) {
    fail(ErrorKind::DataValidation, "reserved header bytes must be zero");
  }
  check_dims(map.channels, map.height, map.width);

  const std::uint64_t count = std::uint64_t{map.channels} * map.height * map.width;
  const std::uint64_t expected = kTensorHeaderBytes + count * 4;
  if (bytes.size() < expected) fail(ErrorKind::DataValidation, "truncated tensor payload");
  if (bytes.size() > expected) fail(ErrorKind::DataValidation, "trailing bytes after tensor payload");

  map.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    map.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, kTensorHeaderBytes + 4 * i));
    if (!std::isfinite(map.data[i])) fail(ErrorKind::DataValidation, "non-finite value in tensor");
  }
  return map;
}

void write_feature_map(const FeatureMap& map, const fs::path& path) {
  auto bytes = encode_feature_map(map);
  atomic_write(path, bytes);
}

FeatureMap read_feature_map(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_feature_map(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

Dataset::Dataset(std::string name, std::vector<ManifestEntry> entries)
    : name_(std::move(name)), entries_(std::move(entries)) {}

std::vector<std::size_t> Dataset::indices_of(Domain domain) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].domain == domain) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> Dataset::find(std::string_view image_id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].image_id == image_id) return i;
  }
  return std::nullopt;
}

FeatureMap Dataset::load(std::size_t i) const {
  const auto& entry = entries_.at(i);
  FeatureMap map = read_feature_map(entry.resolved_path);
  map.image_id = entry.image_id;
  map.domain = entry.domain;
  map.location_id = entry.location_id;
  return map;
}

void Dataset::require_both_domains() const {
  if (indices_of(Domain::Drone).empty() || indices_of(Domain::Satellite).empty()) {
    fail(ErrorKind::DataValidation,
         "dataset '" + name_ + "' needs both drone and satellite entries");
  }
}

Dataset parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::DataValidation, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dataset_name") || !doc.contains("entries") ||
      !doc["dataset_name"].is_string() || !doc["entries"].is_array()) {
    fail(ErrorKind::DataValidation, "manifest must have string 'dataset_name' and array 'entries'");
  }

  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  for (const auto& row : doc["entries"]) {
    for (const char* key : {"image_id", "domain", "location_id", "tensor_path"}) {
      if (!row.is_object() || !row.contains(key) || !row[key].is_string()) {
        fail(ErrorKind::DataValidation, std::string("manifest entry missing string field '") + key + "'");
      }
    }
    ManifestEntry entry;
    entry.image_id = row["image_id"].get<std::string>();
    entry.domain = parse_domain(row["domain"].get<std::string>());
    entry.location_id = row["location_id"].get<std::string>();
    entry.tensor_path = row["tensor_path"].get<std::string>();
    fs::path p(entry.tensor_path);
    entry.resolved_path = p.is_absolute() ? p : base_dir / p;

    if (!seen.insert(entry.image_id).second) {
      fail(ErrorKind::DataValidation, "duplicate image_id in manifest: " + entry.image_id);
    }
    if (!fs::is_regular_file(entry.resolved_path)) {
      fail(ErrorKind::DataValidation, "missing tensor file: " + entry.resolved_path.string());
    }
    entries.push_back(std::move(entry));
  }
  return Dataset(doc["dataset_name"].get<std::string>(), std::move(entries));
}

Dataset load_dataset(const fs::path& manifest_path) {
  const std::string text = read_file_text(manifest_path);
  return parse_manifest(text, manifest_path.parent_path());
}

std::string manifest_to_json(const Dataset& dataset) {
  json entries = json::array();
  for (const auto& e : dataset.entries()) {
    entries.push_back({{"image_id", e.image_id},
                       {"domain", std::string(to_string(e.domain))},
                       {"location_id", e.location_id},
                       {"tensor_path", e.tensor_path}});
  }
  json doc = {{"dataset_name", dataset.name()}, {"entries", entries}};
  return doc.dump(2) + "\n";
}

}  // namespace xview
