#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xview/descriptor.hpp"

namespace xview {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Row-per-descriptor matrix (N x D).
Matrix to_matrix(const DescriptorSet& set);

// Domain-wise PCA: mean, top-d eigenvectors of the 1/(N-1) covariance (columns,
// ordered by non-increasing eigenvalue) and their eigenvalues.
struct DomainStats {
  Vector mean;
  Matrix projection;  // D x d, orthonormal columns
  Vector eigenvalues;  // d, non-increasing, >= 0

  Eigen::Index input_dim() const { return projection.rows(); }
  Eigen::Index output_dim() const { return projection.cols(); }
};

DomainStats fit_pca(const Matrix& descriptors, Eigen::Index dim);

// Full spectrum (D eigenvalues, non-increasing), used for variance-threshold
// dimension selection.
Vector covariance_spectrum(const Matrix& descriptors);

// Smallest k with cumulative eigenvalue mass >= fraction of the total.
Eigen::Index dim_for_variance(const Vector& spectrum, double fraction);

// (X - 1 mu^T) P_d
Matrix project(const DomainStats& stats, const Matrix& descriptors);

struct ProcrustesResult {
  Matrix rotation;          // d x d, orthogonal
  Vector singular_values;   // of X_S^T X_D, non-increasing
  bool non_unique = false;  // some singular-value gap (or the smallest value) < 1e-8 * sigma_max
};

// argmin_R ||X_D R - X_S||_F over orthogonal R: R = V U^T with
// U S V^T = svd(X_S^T X_D). With strict_rotation the sign of the last singular
// pair is flipped when needed so that det(R) = +1.
ProcrustesResult fit_procrustes(const Matrix& drone, const Matrix& satellite,
                                bool strict_rotation = false);

double procrustes_objective(const Matrix& drone, const Matrix& satellite, const Matrix& rotation);

enum class Pairing { GivenPairs, MutualNN };

std::string_view to_string(Pairing pairing);
Pairing parse_pairing(std::string_view text);

struct PairList {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (drone_idx, satellite_idx)
  bool degenerate = false;
};

// GivenPairs: every drone view paired with every satellite entry of the same
// location_id. MutualNN: label-free mutual nearest neighbours by cosine on
// per-domain mean-centred descriptors. Fewer than min_pairs mutual pairs is
// flagged degenerate (with a warning) rather than rejected.
PairList build_pairs(const DescriptorSet& drone, const DescriptorSet& satellite, Pairing strategy,
                     std::size_t min_pairs = 0);

struct AlignmentOptions {
  std::optional<Eigen::Index> dim;           // default min(256, N-1, D)
  std::optional<double> variance_fraction;  // pick d from cumulative eigenvalue mass instead
  Pairing pairing = Pairing::GivenPairs;
  bool strict_rotation = false;
  std::string dataset_name;
};

struct AlignmentModel {
  DomainStats drone;
  DomainStats satellite;
  Matrix rotation;
  Pairing pairing = Pairing::GivenPairs;
  std::string dataset_name;
  std::uint64_t descriptor_hash = 0;
  bool non_unique = false;
  bool degenerate_pairs = false;
  std::size_t num_pairs = 0;

  Eigen::Index dim() const { return rotation.rows(); }
  Eigen::Index input_dim() const { return drone.input_dim(); }

  // Throws when shapes disagree or R / P_d are not orthonormal within 1e-6.
  void validate() const;
};

AlignmentModel fit_alignment(const DescriptorSet& drone, const DescriptorSet& satellite,
                             const AlignmentOptions& options = {});

// Drone: ((x - mu_D) P_D) R. Satellite: (x - mu_S) P_S.
Vector apply_alignment(const AlignmentModel& model, const Vector& descriptor, Domain domain);
Matrix apply_alignment(const AlignmentModel& model, const Matrix& descriptors, Domain domain);

// Ablation: per-domain PCA projection without the rotation.
Matrix apply_pca_only(const AlignmentModel& model, const Matrix& descriptors, Domain domain);

// Binary model file ("CVAM"): matrices bit-exact as f64, CRC-32 of the body,
// then the 64-bit descriptor-set hash. Pairing and flags go in a sidecar
// "<path>.json" that load_model reads when present.
std::vector<std::uint8_t> encode_model(const AlignmentModel& model);
AlignmentModel decode_model(std::span<const std::uint8_t> bytes);

void save_model(const AlignmentModel& model, const std::filesystem::path& path,
                const nlohmann::json& extra_meta = nullptr);
AlignmentModel load_model(const std::filesystem::path& path);

// True when the model was fitted on exactly these descriptors; warns otherwise.
bool check_model_hash(const AlignmentModel& model, std::uint64_t descriptor_hash);

}  // namespace xview
