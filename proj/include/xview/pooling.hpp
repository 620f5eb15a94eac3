#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "xview/feature_store.hpp"

namespace xview {

enum class PoolKind { Avg, Max, Cls, GeM };

std::string_view to_string(PoolKind kind);
PoolKind parse_pool_kind(std::string_view text);

struct PoolingSpec {
  PoolKind kind = PoolKind::GeM;
  double p = 3.0;  // GeM exponent, ignored for other kinds
  // GeM only: negative activations are clamped to zero; when false they raise.
  bool clamp_negative = true;

  void validate() const;
};

// Rectangle in patch coordinates: rows [row0, row0+rows), cols [col0, col0+cols).
struct Region {
  std::uint32_t row0 = 0;
  std::uint32_t col0 = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;

  std::size_t area() const { return std::size_t{rows} * cols; }
  bool operator==(const Region&) const = default;
};

Region full_region(const FeatureMap& map);

struct PooledVector {
  std::vector<double> values;
  Region source_region;
};

// Avg / Max / GeM over the region, one value per channel. Cls is rejected here;
// class tokens are stored as 1x1 tensors and go through pool_cls.
PooledVector pool_region(const FeatureMap& map, const Region& region, const PoolingSpec& spec);

PooledVector pool_cls(std::span<const double> cls_vector);

// Whole-map pooling; Cls requires a 1x1 map and forwards to pool_cls.
PooledVector pool_map(const FeatureMap& map, const PoolingSpec& spec);

// Generalized mean of non-negative samples. Scaled by the maximum so large p
// stays finite.
double generalized_mean(std::span<const double> samples, double p);

}  // namespace xview
