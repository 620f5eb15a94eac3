#pragma once

#include <cstdint>
#include <vector>

#include "xview/descriptor.hpp"
#include "xview/feature_store.hpp"
#include "xview/pooling.hpp"

namespace xview {

struct AggregationSpec {
  PoolingSpec pooling;
  std::vector<std::uint32_t> scales{1, 2, 3};
  double alpha = 6.0;
  // L2-normalize each region vector before the per-scale sum.
  bool normalize_regions = true;

  void validate() const;
};

// Row/column boundaries of an n-way split of `extent`: round(i * extent / n),
// halves rounded up. Returns n + 1 monotone offsets from 0 to extent.
std::vector<std::uint32_t> partition_bounds(std::uint32_t extent, std::uint32_t n);

// The n x n grid of regions for one scale, row-major.
std::vector<Region> grid_regions(std::uint32_t height, std::uint32_t width, std::uint32_t n);

// Per-scale sums of (optionally normalized) region vectors, before the 1/n^alpha
// weight. These do not depend on alpha.
struct ScaleSums {
  std::vector<std::uint32_t> scales;
  std::vector<std::vector<double>> sums;  // one C-vector per scale
};

ScaleSums compute_scale_sums(const FeatureMap& map, const AggregationSpec& spec);

// Debug view of one aggregation.
struct AggregationTrace {
  struct Scale {
    std::uint32_t n = 0;
    double weight = 0.0;
    std::vector<double> region_sum;
    std::vector<double> weighted;
  };
  std::vector<Scale> scales;
  std::vector<double> total;  // before final normalization
};

// sum_n n^-alpha * sums[n], L2-normalized. Throws Numerical on an all-zero total.
std::vector<double> combine_scales(const ScaleSums& sums, double alpha,
                                   AggregationTrace* trace = nullptr);

Descriptor aggregate(const FeatureMap& map, const AggregationSpec& spec,
                     AggregationTrace* trace = nullptr);

// One descriptor set per alpha, sharing the region pooling across alphas.
std::vector<DescriptorSet> sweep_alpha(const std::vector<FeatureMap>& maps,
                                       const AggregationSpec& spec,
                                       const std::vector<double>& alphas, unsigned threads = 1);

std::vector<DescriptorSet> sweep_alpha(const Dataset& dataset, const AggregationSpec& spec,
                                       const std::vector<double>& alphas, unsigned threads = 1);

// Aggregates every manifest entry (loading tensors lazily) in manifest order.
DescriptorSet aggregate_dataset(const Dataset& dataset, const AggregationSpec& spec,
                                unsigned threads = 1);

}  // namespace xview
