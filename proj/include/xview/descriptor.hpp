#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xview/feature_store.hpp"

namespace xview {

// Aggregated, unit-norm image descriptor.
struct Descriptor {
  std::string image_id;
  Domain domain = Domain::Drone;
  std::string location_id;
  std::vector<float> values;

  bool operator==(const Descriptor&) const = default;
};

struct DescriptorSet {
  std::vector<Descriptor> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::size_t dim() const { return items.empty() ? 0 : items.front().values.size(); }

  // Subset with the given domain, order preserved.
  DescriptorSet filter(Domain domain) const;
  std::optional<std::size_t> find(std::string_view image_id) const;

  // Throws when the set is empty or dimensions disagree.
  void require_uniform_dim() const;
};

// FNV-1a 64 over records sorted by image_id: id bytes then f32 LE value bytes.
std::uint64_t descriptor_set_hash(const DescriptorSet& set);
std::uint64_t descriptor_set_hash(const DescriptorSet& a, const DescriptorSet& b);

// JSON-lines: optional leading {"meta": {...}} line, then one object per image
// {"image_id", "domain", "location_id", "values"}.
std::string descriptor_set_to_jsonl(const DescriptorSet& set, const nlohmann::json& meta = nullptr);
DescriptorSet parse_descriptor_jsonl(std::string_view text);

void write_descriptor_set(const std::filesystem::path& path, const DescriptorSet& set,
                          const nlohmann::json& meta = nullptr);
DescriptorSet read_descriptor_set(const std::filesystem::path& path);

}  // namespace xview
