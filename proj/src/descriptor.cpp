#include "xview/descriptor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "xview/error.hpp"
#include "xview/io_util.hpp"

namespace xview {

using nlohmann::json;

DescriptorSet DescriptorSet::filter(Domain domain) const {
  DescriptorSet out;
  for (const auto& d : items) {
    if (d.domain == domain) out.items.push_back(d);
  }
  return out;
}

std::optional<std::size_t> DescriptorSet::find(std::string_view image_id) const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].image_id == image_id) return i;
  }
  return std::nullopt;
}

void DescriptorSet::require_uniform_dim() const {
  if (items.empty()) fail(ErrorKind::DataValidation, "descriptor set is empty");
  const std::size_t dim = items.front().values.size();
  if (dim == 0) fail(ErrorKind::DataValidation, "descriptor has zero length");
  for (const auto& d : items) {
    if (d.values.size() != dim) {
      fail(ErrorKind::DataValidation, "descriptor dimension mismatch at " + d.image_id);
    }
  }
}

namespace {

void hash_records(Fnv1a64& h, std::vector<const Descriptor*> records) {
  std::sort(records.begin(), records.end(),
            [](const Descriptor* a, const Descriptor* b) { return a->image_id < b->image_id; });
  for (const Descriptor* d : records) {
    h.update(d->image_id);
    std::uint8_t buf[4];
    for (float v : d->values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) buf[i] = static_cast<std::uint8_t>(bits >> (8 * i));
      h.update(buf);
    }
  }
}

}  // namespace

std::uint64_t descriptor_set_hash(const DescriptorSet& set) {
  std::vector<const Descriptor*> records;
  for (const auto& d : set.items) records.push_back(&d);
  Fnv1a64 h;
  hash_records(h, std::move(records));
  return h.digest();
}

std::uint64_t descriptor_set_hash(const DescriptorSet& a, const DescriptorSet& b) {
  std::vector<const Descriptor*> records;
  for (const auto& d : a.items) records.push_back(&d);
  for (const auto& d : b.items) records.push_back(&d);
  Fnv1a64 h;
  hash_records(h, std::move(records));
  return h.digest();
}

std::string descriptor_set_to_jsonl(const DescriptorSet& set, const json& meta) {
  std::string out;
  if (!meta.is_null()) out += json{{"meta", meta}}.dump() + "\n";
  for (const auto& d : set.items) {
    json row = {{"image_id", d.image_id},
                {"domain", std::string(to_string(d.domain))},
                {"location_id", d.location_id},
                {"values", d.values}};
    out += row.dump() + "\n";
  }
  return out;
}

DescriptorSet parse_descriptor_jsonl(std::string_view text) {
  DescriptorSet set;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error&) {
      fail(ErrorKind::DataValidation, "descriptor line " + std::to_string(line_no) + " is not JSON");
    }
    if (row.is_object() && row.contains("meta") && row.size() == 1) continue;
    if (!row.is_object() || !row.contains("image_id") || !row.contains("values") ||
        !row["values"].is_array()) {
      fail(ErrorKind::DataValidation,
           "descriptor line " + std::to_string(line_no) + " lacks image_id/values");
    }
    Descriptor d;
    d.image_id = row["image_id"].get<std::string>();
    d.domain = parse_domain(row.value("domain", std::string("drone")));
    d.location_id = row.value("location_id", std::string());
    d.values.reserve(row["values"].size());
    for (const auto& v : row["values"]) {
      if (!v.is_number()) fail(ErrorKind::DataValidation, "non-numeric descriptor value in " + d.image_id);
      const float f = v.get<float>();
      if (!std::isfinite(f)) fail(ErrorKind::DataValidation, "non-finite descriptor value in " + d.image_id);
      d.values.push_back(f);
    }
    set.items.push_back(std::move(d));
  }
  return set;
}

void write_descriptor_set(const std::filesystem::path& path, const DescriptorSet& set,
                          const json& meta) {
  atomic_write(path, descriptor_set_to_jsonl(set, meta));
}

DescriptorSet read_descriptor_set(const std::filesystem::path& path) {
  return parse_descriptor_jsonl(read_file_text(path));
}

}  // namespace xview
