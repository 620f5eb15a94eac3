#include "xview/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "xview/alignment.hpp"
#include "xview/error.hpp"
#include "xview/io_util.hpp"
#include "xview/parallel.hpp"

namespace xview {

namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t {
  kLatent = 1,
  kRotation = 2,
  kOffset = 3,
  kNoise = 4,
  kJitter = 5,
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// exp(scale * S) for a random skew-symmetric S with entries of variance ~1/n.
Matrix random_rotation(std::mt19937_64& rng, Eigen::Index n, double scale) {
  if (scale == 0.0) return Matrix::Identity(n, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) g(r, c) = normal(rng);
  }
  const Matrix skew = (g - g.transpose()) * (scale / std::sqrt(2.0 * static_cast<double>(n)));
  return skew.exp();
}

std::string padded(const char* prefix, std::uint32_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*u", prefix, width, value);
  return buf;
}

struct DomainMap {
  Matrix rotation;
  Vector offset;
};

DomainMap make_domain_map(const SynthSpec& spec, std::uint64_t domain_index) {
  const auto dim = static_cast<Eigen::Index>(spec.ambient_dim);
  const auto latent = static_cast<Eigen::Index>(spec.latent_dim);
  DomainMap m;
  std::mt19937_64 rot_rng(derive_seed(spec.seed, kRotation, domain_index));
  m.rotation = random_rotation(rot_rng, dim, spec.domain_rotation_angle_scale);
  m.offset = Vector::Zero(dim);
  if (spec.domain_offset_norm > 0.0) {
    std::mt19937_64 off_rng(derive_seed(spec.seed, kOffset, domain_index));
    Vector tail = Vector::Zero(dim);
    tail.tail(dim - latent) = gaussian_vector(off_rng, dim - latent);
    tail *= spec.domain_offset_norm / tail.norm();
    m.offset = m.rotation * tail;
  }
  return m;
}

std::vector<float> render(const SynthSpec& spec, const DomainMap& map, const Vector& latent,
                          std::uint64_t domain_index, std::uint64_t loc, std::uint64_t view) {
  const auto dim = static_cast<Eigen::Index>(spec.ambient_dim);
  Vector embedded = Vector::Zero(dim);
  embedded.head(latent.size()) = latent;
  Vector x = map.rotation * embedded + map.offset;
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(derive_seed(spec.seed, kNoise, domain_index, loc, view));
    x += gaussian_vector(rng, dim) * (spec.noise_sigma / std::sqrt(static_cast<double>(dim)));
  }
  const double n = x.norm();
  if (n > 0.0) x /= n;
  return std::vector<float>(x.data(), x.data() + x.size());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                          std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t part : {stream, a, b, c}) h = splitmix64(h ^ splitmix64(part));
  return h;
}

void SynthSpec::validate() const {
  if (num_locations < 1 || views_per_location_drone < 1 || latent_dim < 1 || ambient_dim < 1) {
    fail(ErrorKind::BadArgument, "synthetic counts must be >= 1");
  }
  if (latent_dim > ambient_dim) fail(ErrorKind::BadArgument, "latent_dim must not exceed ambient_dim");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    fail(ErrorKind::BadArgument, "noise_sigma must be finite and >= 0");
  }
  if (!(domain_offset_norm >= 0.0) || !std::isfinite(domain_offset_norm)) {
    fail(ErrorKind::BadArgument, "domain_offset_norm must be finite and >= 0");
  }
  if (domain_offset_norm > 0.0 && latent_dim == ambient_dim) {
    fail(ErrorKind::BadArgument, "a domain offset needs latent_dim < ambient_dim");
  }
  if (!std::isfinite(domain_rotation_angle_scale) || !(location_jitter >= 0.0) ||
      !std::isfinite(location_jitter)) {
    fail(ErrorKind::BadArgument, "rotation scales must be finite (jitter >= 0)");
  }
}

SynthBenchmark generate(const SynthSpec& spec, unsigned threads) {
  spec.validate();
  const DomainMap drone_map = make_domain_map(spec, 0);
  const DomainMap sat_map = spec.shared_domain_map ? drone_map : make_domain_map(spec, 1);
  const auto latent_dim = static_cast<Eigen::Index>(spec.latent_dim);
  const std::uint32_t views = spec.views_per_location_drone;

  SynthBenchmark bench;
  bench.drone.items.resize(std::size_t{spec.num_locations} * views);
  bench.satellite.items.resize(spec.num_locations);

  parallel_for(spec.num_locations, threads, [&](std::size_t loc_index) {
    const auto loc = static_cast<std::uint32_t>(loc_index);
    std::mt19937_64 latent_rng(derive_seed(spec.seed, kLatent, loc));
    Vector z = gaussian_vector(latent_rng, latent_dim);
    z /= z.norm();
    const std::string location_id = padded("L", loc, 5);

    Descriptor& sat = bench.satellite.items[loc];
    sat.image_id = padded("s", loc, 5);
    sat.domain = Domain::Satellite;
    sat.location_id = location_id;
    sat.values = render(spec, sat_map, z, 1, loc, 0);

    for (std::uint32_t v = 0; v < views; ++v) {
      Vector zv = z;
      if (spec.location_jitter > 0.0) {
        std::mt19937_64 jitter_rng(derive_seed(spec.seed, kJitter, loc, v));
        zv = random_rotation(jitter_rng, latent_dim, spec.location_jitter) * z;
      }
      Descriptor& d = bench.drone.items[std::size_t{loc} * views + v];
      d.image_id = padded("d", loc, 5) + padded("_", v, 2);
      d.domain = Domain::Drone;
      d.location_id = location_id;
      d.values = render(spec, drone_map, zv, 0, loc, v);
    }
  });

  bench.drone_to_satellite = ground_truth_from(bench.drone, bench.satellite);
  bench.satellite_to_drone = ground_truth_from(bench.satellite, bench.drone);
  return bench;
}

void write_benchmark(const SynthBenchmark& bench, const SynthSpec& spec, const fs::path& out_dir,
                     const nlohmann::json& meta) {
  std::error_code ec;
  fs::create_directories(out_dir / "tensors", ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + (out_dir / "tensors").string());

  std::vector<ManifestEntry> entries;
  for (const DescriptorSet* set : {&bench.drone, &bench.satellite}) {
    for (const auto& d : set->items) {
      FeatureMap map;
      map.channels = static_cast<std::uint32_t>(d.values.size());
      map.height = 1;
      map.width = 1;
      map.data = d.values;
      ManifestEntry e;
      e.image_id = d.image_id;
      e.domain = d.domain;
      e.location_id = d.location_id;
      e.tensor_path = "tensors/" + d.image_id + ".cvfm";
      e.resolved_path = out_dir / e.tensor_path;
      write_feature_map(map, e.resolved_path);
      entries.push_back(std::move(e));
    }
  }
  atomic_write(out_dir / "manifest.json", manifest_to_json(Dataset(spec.dataset_name, entries)));
  write_descriptor_set(out_dir / "drone.jsonl", bench.drone, meta);
  write_descriptor_set(out_dir / "satellite.jsonl", bench.satellite, meta);
}

}  // namespace xview
