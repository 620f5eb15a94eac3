#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xview/descriptor.hpp"
#include "xview/evaluation.hpp"

namespace xview {

// Synthetic cross-view benchmark. Each location has a latent unit vector z in
// R^latent_dim, embedded as [z; 0] in R^D. Per domain a fixed orthogonal map
// Q = exp(angle_scale * S) (S random skew-symmetric) and an offset b of norm
// offset_norm, placed orthogonal to the image of the latent subspace, give
//   descriptor = normalize(Q [z; 0] + b + eps),  eps ~ N(0, sigma^2 / D I).
// With sigma = 0 every descriptor has norm sqrt(1 + |b|^2) before
// normalization, so the domains differ by an exact rotation after centring.
struct SynthSpec {
  std::uint32_t num_locations = 100;
  std::uint32_t views_per_location_drone = 1;
  std::uint32_t latent_dim = 16;
  std::uint32_t ambient_dim = 64;
  double domain_rotation_angle_scale = 1.0;
  double domain_offset_norm = 0.5;
  double noise_sigma = 0.0;
  // Harder mode: each drone view's latent vector gets its own small rotation
  // exp(location_jitter * S_view).
  double location_jitter = 0.0;
  // Both domains draw Q and b from the same sub-seed (no domain shift).
  bool shared_domain_map = false;
  std::uint64_t seed = 0;
  std::string dataset_name = "synthetic";

  void validate() const;
};

struct SynthBenchmark {
  DescriptorSet drone;
  DescriptorSet satellite;
  GroundTruth drone_to_satellite;
  GroundTruth satellite_to_drone;
};

SynthBenchmark generate(const SynthSpec& spec, unsigned threads = 1);

// Counter-based seed derivation: each (stream, a, b, c) gets an independent
// 64-bit seed, so subsets regenerate identically.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0);

// Writes manifest.json, tensors/<id>.cvfm (1x1 tensors holding the descriptor),
// drone.jsonl and satellite.jsonl into out_dir.
void write_benchmark(const SynthBenchmark& bench, const SynthSpec& spec,
                     const std::filesystem::path& out_dir, const nlohmann::json& meta = nullptr);

}  // namespace xview
