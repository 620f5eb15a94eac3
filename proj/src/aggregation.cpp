#include "xview/aggregation.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "xview/error.hpp"
#include "xview/parallel.hpp"

namespace xview {

namespace {

double l2_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

Descriptor make_descriptor(const FeatureMap& map, const std::vector<double>& unit) {
  Descriptor d;
  d.image_id = map.image_id;
  d.domain = map.domain;
  d.location_id = map.location_id;
  d.values.assign(unit.begin(), unit.end());
  return d;
}

void check_scales_fit(const FeatureMap& map, const AggregationSpec& spec) {
  const std::uint32_t limit = std::min(map.height, map.width);
  for (std::uint32_t n : spec.scales) {
    if (n > limit) {
      fail(ErrorKind::DataValidation,
           "scale " + std::to_string(n) + " exceeds spatial dims " + std::to_string(map.height) +
               "x" + std::to_string(map.width) + (map.image_id.empty() ? "" : " of " + map.image_id));
    }
  }
}

}  // namespace

void AggregationSpec::validate() const {
  pooling.validate();
  if (scales.empty()) fail(ErrorKind::BadArgument, "aggregation scales must be non-empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] == 0) fail(ErrorKind::BadArgument, "aggregation scales must be positive");
    if (i > 0 && scales[i] <= scales[i - 1]) {
      fail(ErrorKind::BadArgument, "aggregation scales must be strictly increasing");
    }
  }
  if (!std::isfinite(alpha) || alpha < 0.0) {
    fail(ErrorKind::BadArgument, "alpha must be finite and >= 0");
  }
}

std::vector<std::uint32_t> partition_bounds(std::uint32_t extent, std::uint32_t n) {
  std::vector<std::uint32_t> bounds(n + 1);
  for (std::uint32_t i = 0; i <= n; ++i) {
    const std::uint64_t num = 2 * std::uint64_t{i} * extent + n;
    bounds[i] = static_cast<std::uint32_t>(num / (2 * std::uint64_t{n}));
  }
  return bounds;
}

std::vector<Region> grid_regions(std::uint32_t height, std::uint32_t width, std::uint32_t n) {
  const auto rows = partition_bounds(height, n);
  const auto cols = partition_bounds(width, n);
  std::vector<Region> regions;
  regions.reserve(std::size_t{n} * n);
  for (std::uint32_t a = 0; a < n; ++a) {
    for (std::uint32_t b = 0; b < n; ++b) {
      regions.push_back(Region{rows[a], cols[b], rows[a + 1] - rows[a], cols[b + 1] - cols[b]});
    }
  }
  return regions;
}

ScaleSums compute_scale_sums(const FeatureMap& map, const AggregationSpec& spec) {
  spec.validate();
  check_scales_fit(map, spec);

  ScaleSums out;
  out.scales = spec.scales;
  for (std::uint32_t n : spec.scales) {
    std::vector<double> sum(map.channels, 0.0);
    std::vector<PooledVector> pooled;
    if (spec.pooling.kind == PoolKind::Cls) {
      pooled.push_back(pool_map(map, spec.pooling));
    } else {
      for (const Region& r : grid_regions(map.height, map.width, n)) {
        pooled.push_back(pool_region(map, r, spec.pooling));
      }
    }
    for (auto& pv : pooled) {
      if (spec.normalize_regions) {
        const double norm = l2_norm(pv.values);
        if (norm > 0.0) {
          for (double& x : pv.values) x /= norm;
        }
      }
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += pv.values[k];
    }
    out.sums.push_back(std::move(sum));
  }
  return out;
}

std::vector<double> combine_scales(const ScaleSums& sums, double alpha, AggregationTrace* trace) {
  if (sums.sums.empty()) fail(ErrorKind::BadArgument, "no scales to combine");
  std::vector<double> total(sums.sums.front().size(), 0.0);
  if (trace) trace->scales.clear();
  for (std::size_t s = 0; s < sums.scales.size(); ++s) {
    const double weight = std::pow(static_cast<double>(sums.scales[s]), -alpha);
    AggregationTrace::Scale entry;
    entry.n = sums.scales[s];
    entry.weight = weight;
    entry.region_sum = sums.sums[s];
    entry.weighted.resize(total.size());
    for (std::size_t k = 0; k < total.size(); ++k) {
      entry.weighted[k] = weight * sums.sums[s][k];
      total[k] += entry.weighted[k];
    }
    if (trace) trace->scales.push_back(std::move(entry));
  }
  if (trace) trace->total = total;

  const double norm = l2_norm(total);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    fail(ErrorKind::Numerical, "aggregated descriptor is all zero; cannot normalize");
  }
  for (double& x : total) x /= norm;
  return total;
}

Descriptor aggregate(const FeatureMap& map, const AggregationSpec& spec, AggregationTrace* trace) {
  const ScaleSums sums = compute_scale_sums(map, spec);
  try {
    return make_descriptor(map, combine_scales(sums, spec.alpha, trace));
  } catch (const Error& e) {
    if (map.image_id.empty()) throw;
    fail(e.kind(), map.image_id + ": " + e.what());
  }
}

namespace {

std::vector<DescriptorSet> sweep_impl(std::size_t count,
                                      const std::function<FeatureMap(std::size_t)>& load,
                                      const AggregationSpec& spec,
                                      const std::vector<double>& alphas, unsigned threads) {
  if (alphas.empty()) fail(ErrorKind::BadArgument, "alpha list must be non-empty");
  for (double a : alphas) {
    AggregationSpec probe = spec;
    probe.alpha = a;
    probe.validate();
  }
  std::vector<DescriptorSet> out(alphas.size());
  for (auto& set : out) set.items.resize(count);
  parallel_for(count, threads, [&](std::size_t i) {
    const FeatureMap map = load(i);
    const ScaleSums sums = compute_scale_sums(map, spec);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      out[a].items[i] = make_descriptor(map, combine_scales(sums, alphas[a]));
    }
  });
  return out;
}

}  // namespace

std::vector<DescriptorSet> sweep_alpha(const std::vector<FeatureMap>& maps,
                                       const AggregationSpec& spec,
                                       const std::vector<double>& alphas, unsigned threads) {
  return sweep_impl(maps.size(), [&](std::size_t i) { return maps[i]; }, spec, alphas, threads);
}

std::vector<DescriptorSet> sweep_alpha(const Dataset& dataset, const AggregationSpec& spec,
                                       const std::vector<double>& alphas, unsigned threads) {
  return sweep_impl(dataset.size(), [&](std::size_t i) { return dataset.load(i); }, spec, alphas,
                    threads);
}

DescriptorSet aggregate_dataset(const Dataset& dataset, const AggregationSpec& spec,
                                unsigned threads) {
  spec.validate();
  DescriptorSet out;
  out.items.resize(dataset.size());
  parallel_for(dataset.size(), threads,
               [&](std::size_t i) { out.items[i] = aggregate(dataset.load(i), spec); });
  return out;
}

}  // namespace xview
