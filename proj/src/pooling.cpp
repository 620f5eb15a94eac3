#include "xview/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xview/error.hpp"

namespace xview {

std::string_view to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::Avg:
      return "avg";
    case PoolKind::Max:
      return "max";
    case PoolKind::Cls:
      return "cls";
    case PoolKind::GeM:
      return "gem";
  }
  return "?";
}

PoolKind parse_pool_kind(std::string_view text) {
  if (text == "avg") return PoolKind::Avg;
  if (text == "max") return PoolKind::Max;
  if (text == "cls") return PoolKind::Cls;
  if (text == "gem") return PoolKind::GeM;
  fail(ErrorKind::BadArgument, "unknown pooling kind: '" + std::string(text) + "'");
}

void PoolingSpec::validate() const {
  if (!std::isfinite(p) || p < 1.0) {
    fail(ErrorKind::BadArgument, "GeM exponent p must be finite and >= 1");
  }
}

Region full_region(const FeatureMap& map) { return Region{0, 0, map.height, map.width}; }

double generalized_mean(std::span<const double> samples, double p) {
  double peak = 0.0;
  for (double x : samples) peak = std::max(peak, x);
  if (peak == 0.0) return 0.0;
  double acc = 0.0;
  for (double x : samples) acc += std::pow(x / peak, p);
  return peak * std::pow(acc / static_cast<double>(samples.size()), 1.0 / p);
}

PooledVector pool_region(const FeatureMap& map, const Region& region, const PoolingSpec& spec) {
  spec.validate();
  if (region.rows == 0 || region.cols == 0) fail(ErrorKind::BadArgument, "empty pooling region");
  if (std::uint64_t{region.row0} + region.rows > map.height ||
      std::uint64_t{region.col0} + region.cols > map.width) {
    fail(ErrorKind::BadArgument, "pooling region out of bounds");
  }
  if (spec.kind == PoolKind::Cls) {
    fail(ErrorKind::BadArgument, "cls pooling is not spatial; use pool_cls on a 1x1 tensor");
  }

  PooledVector out;
  out.source_region = region;
  out.values.resize(map.channels);
  std::vector<double> samples(region.area());

  for (std::uint32_t k = 0; k < map.channels; ++k) {
    std::size_t n = 0;
    for (std::uint32_t i = region.row0; i < region.row0 + region.rows; ++i) {
      for (std::uint32_t j = region.col0; j < region.col0 + region.cols; ++j) {
        samples[n++] = map.at(k, i, j);
      }
    }
    double value = 0.0;
    switch (spec.kind) {
      case PoolKind::Avg: {
        for (double x : samples) value += x;
        value /= static_cast<double>(samples.size());
        break;
      }
      case PoolKind::Max:
        value = *std::max_element(samples.begin(), samples.end());
        break;
      case PoolKind::GeM: {
        for (double& x : samples) {
          if (x < 0.0) {
            if (!spec.clamp_negative) {
              fail(ErrorKind::DataValidation, "negative activation under GeM with clamping disabled");
            }
            x = 0.0;
          }
        }
        value = generalized_mean(samples, spec.p);
        break;
      }
      case PoolKind::Cls:
        break;
    }
    out.values[k] = value;
  }
  return out;
}

PooledVector pool_cls(std::span<const double> cls_vector) {
  for (double v : cls_vector) {
    if (!std::isfinite(v)) fail(ErrorKind::DataValidation, "non-finite value in class token");
  }
  PooledVector out;
  out.values.assign(cls_vector.begin(), cls_vector.end());
  out.source_region = Region{0, 0, 1, 1};
  return out;
}

PooledVector pool_map(const FeatureMap& map, const PoolingSpec& spec) {
  if (spec.kind != PoolKind::Cls) return pool_region(map, full_region(map), spec);
  if (map.height != 1 || map.width != 1) {
    fail(ErrorKind::DataValidation, "cls pooling expects a 1x1 class-token tensor");
  }
  std::vector<double> token(map.data.begin(), map.data.end());
  return pool_cls(token);
}

}  // namespace xview
