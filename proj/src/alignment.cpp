#include "xview/alignment.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <string>

#include <Eigen/SVD>

#include "xview/error.hpp"
#include "xview/io_util.hpp"

namespace xview {

using nlohmann::json;
namespace fs = std::filesystem;

Matrix to_matrix(const DescriptorSet& set) {
  set.require_uniform_dim();
  Matrix out(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t k = 0; k < set.dim(); ++k) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = set.items[i].values[k];
    }
  }
  return out;
}

namespace {

struct Eigenpairs {
  Vector values;   // non-increasing
  Matrix vectors;  // matching columns
};

Eigenpairs covariance_eigen(const Matrix& x, const Vector& mean) {
  const Matrix centered = x.rowwise() - mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "symmetric eigen-solver did not converge");
  }
  Eigenpairs out;
  // Eigen returns ascending order.
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    out.values(i) = std::max(0.0, out.values(i));
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    out.vectors.col(i).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, i) < 0.0) out.vectors.col(i) *= -1.0;
  }
  return out;
}

void require_samples(const Matrix& x) {
  if (x.rows() < 2) fail(ErrorKind::DataValidation, "PCA needs at least 2 descriptors");
  if (x.cols() < 1) fail(ErrorKind::DataValidation, "PCA needs descriptors of dimension >= 1");
  if (!x.allFinite()) fail(ErrorKind::DataValidation, "non-finite descriptor values");
}

double max_orthonormality_error(const Matrix& m) {
  const Matrix gram = m.transpose() * m;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

DomainStats fit_pca(const Matrix& descriptors, Eigen::Index dim) {
  require_samples(descriptors);
  const Eigen::Index limit = std::min<Eigen::Index>(descriptors.rows() - 1, descriptors.cols());
  if (dim < 1 || dim > limit) {
    fail(ErrorKind::BadArgument, "PCA dimension " + std::to_string(dim) + " outside [1, " +
                                     std::to_string(limit) + "]");
  }
  DomainStats stats;
  stats.mean = descriptors.colwise().mean().transpose();
  Eigenpairs eig = covariance_eigen(descriptors, stats.mean);
  stats.projection = eig.vectors.leftCols(dim);
  stats.eigenvalues = eig.values.head(dim);
  return stats;
}

Vector covariance_spectrum(const Matrix& descriptors) {
  require_samples(descriptors);
  const Vector mean = descriptors.colwise().mean().transpose();
  return covariance_eigen(descriptors, mean).values;
}

Eigen::Index dim_for_variance(const Vector& spectrum, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    fail(ErrorKind::BadArgument, "variance fraction must lie in (0, 1]");
  }
  const double total = spectrum.sum();
  if (total <= 0.0) return 1;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < spectrum.size(); ++k) {
    acc += spectrum(k);
    if (acc >= fraction * total) return k + 1;
  }
  return spectrum.size();
}

Matrix project(const DomainStats& stats, const Matrix& descriptors) {
  if (descriptors.cols() != stats.input_dim()) {
    fail(ErrorKind::DataValidation, "descriptor dimension " + std::to_string(descriptors.cols()) +
                                        " does not match model dimension " +
                                        std::to_string(stats.input_dim()));
  }
  return (descriptors.rowwise() - stats.mean.transpose()) * stats.projection;
}

ProcrustesResult fit_procrustes(const Matrix& drone, const Matrix& satellite, bool strict_rotation) {
  if (drone.rows() != satellite.rows()) {
    fail(ErrorKind::DataValidation, "Procrustes row-count mismatch");
  }
  if (drone.cols() != satellite.cols()) {
    fail(ErrorKind::DataValidation, "Procrustes column-count mismatch");
  }
  if (drone.rows() < 1 || drone.cols() < 1) {
    fail(ErrorKind::DataValidation, "Procrustes needs at least one paired row");
  }

  const Matrix cross = satellite.transpose() * drone;
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix u = svd.matrixU();
  Matrix v = svd.matrixV();
  if (!u.allFinite() || !v.allFinite()) fail(ErrorKind::Numerical, "SVD produced non-finite factors");

  ProcrustesResult out;
  out.singular_values = svd.singularValues();
  if (strict_rotation && (v * u.transpose()).determinant() < 0.0) {
    v.col(v.cols() - 1) *= -1.0;
  }
  out.rotation = v * u.transpose();

  const Vector& s = out.singular_values;
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = 1e-8 * smax;
  out.non_unique = smax <= 0.0 || s(s.size() - 1) < tol;
  for (Eigen::Index i = 0; i + 1 < s.size() && !out.non_unique; ++i) {
    if (s(i) - s(i + 1) < tol) out.non_unique = true;
  }
  return out;
}

double procrustes_objective(const Matrix& drone, const Matrix& satellite, const Matrix& rotation) {
  return (drone * rotation - satellite).squaredNorm();
}

std::string_view to_string(Pairing pairing) {
  return pairing == Pairing::GivenPairs ? "given" : "mutual_nn";
}

Pairing parse_pairing(std::string_view text) {
  if (text == "given" || text == "given_pairs") return Pairing::GivenPairs;
  if (text == "mutual_nn" || text == "mnn") return Pairing::MutualNN;
  fail(ErrorKind::BadArgument, "unknown pairing strategy: '" + std::string(text) + "'");
}

namespace {

Matrix centered_unit_rows(const DescriptorSet& set) {
  Matrix x = to_matrix(set);
  x.rowwise() -= x.colwise().mean();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > 0.0) x.row(i) /= n;
  }
  return x;
}

}  // namespace

PairList build_pairs(const DescriptorSet& drone, const DescriptorSet& satellite, Pairing strategy,
                     std::size_t min_pairs) {
  if (drone.empty() || satellite.empty()) {
    fail(ErrorKind::DataValidation, "pairing needs non-empty drone and satellite sets");
  }
  PairList out;
  if (strategy == Pairing::GivenPairs) {
    std::multimap<std::string, std::size_t> sat_by_location;
    for (std::size_t j = 0; j < satellite.size(); ++j) {
      sat_by_location.emplace(satellite.items[j].location_id, j);
    }
    for (std::size_t i = 0; i < drone.size(); ++i) {
      auto [lo, hi] = sat_by_location.equal_range(drone.items[i].location_id);
      for (auto it = lo; it != hi; ++it) out.pairs.emplace_back(i, it->second);
    }
    if (out.pairs.empty()) {
      fail(ErrorKind::DataValidation, "no location_id is shared between drone and satellite sets");
    }
    return out;
  }

  if (drone.dim() != satellite.dim()) {
    fail(ErrorKind::DataValidation, "mutual-NN pairing needs equal descriptor dimensions");
  }
  const Matrix a = centered_unit_rows(drone);
  const Matrix b = centered_unit_rows(satellite);
  const auto nd = a.rows();
  const auto ns = b.rows();
  std::vector<Eigen::Index> best_for_drone(nd, 0);
  std::vector<double> best_drone_score(nd, -std::numeric_limits<double>::infinity());
  std::vector<Eigen::Index> best_for_sat(ns, 0);
  std::vector<double> best_sat_score(ns, -std::numeric_limits<double>::infinity());

  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < nd; start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, nd - start);
    const Matrix scores = a.middleRows(start, rows) * b.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = start + r;
      for (Eigen::Index j = 0; j < ns; ++j) {
        const double s = scores(r, j);
        // Strict comparisons keep the lowest index on ties.
        if (s > best_drone_score[i]) {
          best_drone_score[i] = s;
          best_for_drone[i] = j;
        }
        if (s > best_sat_score[j]) {
          best_sat_score[j] = s;
          best_for_sat[j] = i;
        }
      }
    }
  }
  for (Eigen::Index i = 0; i < nd; ++i) {
    const Eigen::Index j = best_for_drone[i];
    if (best_for_sat[j] == i) {
      out.pairs.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  if (out.pairs.size() < std::max<std::size_t>(min_pairs, 1)) {
    out.degenerate = true;
    warn("mutual-NN pairing found " + std::to_string(out.pairs.size()) +
         " pairs, fewer than the " + std::to_string(min_pairs) +
         " needed for a unique rotation; proceeding with a degenerate fit");
  }
  return out;
}

void AlignmentModel::validate() const {
  const auto d = rotation.rows();
  if (d < 1 || rotation.cols() != d) fail(ErrorKind::DataValidation, "rotation must be square");
  for (const DomainStats* s : {&drone, &satellite}) {
    if (s->projection.cols() != d || s->projection.rows() != drone.projection.rows() ||
        s->mean.size() != s->projection.rows()) {
      fail(ErrorKind::DataValidation, "alignment model shapes are inconsistent");
    }
    if (max_orthonormality_error(s->projection) > 1e-6) {
      fail(ErrorKind::Numerical, "PCA projection is not column-orthonormal");
    }
  }
  if (max_orthonormality_error(rotation) > 1e-6) {
    fail(ErrorKind::Numerical, "rotation is not orthogonal");
  }
}

AlignmentModel fit_alignment(const DescriptorSet& drone, const DescriptorSet& satellite,
                             const AlignmentOptions& options) {
  drone.require_uniform_dim();
  satellite.require_uniform_dim();
  if (drone.dim() != satellite.dim()) {
    fail(ErrorKind::DataValidation, "drone and satellite descriptors differ in dimension");
  }
  const Matrix xd = to_matrix(drone);
  const Matrix xs = to_matrix(satellite);
  if (xd.rows() < 2 || xs.rows() < 2) {
    fail(ErrorKind::DataValidation, "alignment needs at least 2 descriptors per domain");
  }
  const auto full_dim = static_cast<Eigen::Index>(drone.dim());
  const Eigen::Index limit = std::min({xd.rows() - 1, xs.rows() - 1, full_dim});

  Eigen::Index d = 0;
  if (options.variance_fraction) {
    d = std::max(dim_for_variance(covariance_spectrum(xd), *options.variance_fraction),
                 dim_for_variance(covariance_spectrum(xs), *options.variance_fraction));
    d = std::min(d, limit);
  } else if (options.dim) {
    d = *options.dim;
  } else {
    d = std::min<Eigen::Index>(256, limit);
  }
  if (d < 1 || d > limit) {
    fail(ErrorKind::BadArgument, "alignment dimension " + std::to_string(d) +
                                     " must lie in [1, " + std::to_string(limit) + "]");
  }

  AlignmentModel model;
  model.drone = fit_pca(xd, d);
  model.satellite = fit_pca(xs, d);
  model.pairing = options.pairing;
  model.dataset_name = options.dataset_name;
  model.descriptor_hash = descriptor_set_hash(drone, satellite);

  const PairList pairs = build_pairs(drone, satellite, options.pairing, static_cast<std::size_t>(d));
  model.degenerate_pairs = pairs.degenerate;
  model.num_pairs = pairs.pairs.size();

  const Matrix pd = project(model.drone, xd);
  const Matrix ps = project(model.satellite, xs);
  Matrix rows_d(static_cast<Eigen::Index>(pairs.pairs.size()), d);
  Matrix rows_s(static_cast<Eigen::Index>(pairs.pairs.size()), d);
  for (std::size_t r = 0; r < pairs.pairs.size(); ++r) {
    rows_d.row(static_cast<Eigen::Index>(r)) = pd.row(static_cast<Eigen::Index>(pairs.pairs[r].first));
    rows_s.row(static_cast<Eigen::Index>(r)) = ps.row(static_cast<Eigen::Index>(pairs.pairs[r].second));
  }
  ProcrustesResult fit = fit_procrustes(rows_d, rows_s, options.strict_rotation);
  model.rotation = std::move(fit.rotation);
  model.non_unique = fit.non_unique;
  return model;
}

Vector apply_alignment(const AlignmentModel& model, const Vector& descriptor, Domain domain) {
  Matrix row = descriptor.transpose();
  return apply_alignment(model, row, domain).row(0).transpose();
}

Matrix apply_alignment(const AlignmentModel& model, const Matrix& descriptors, Domain domain) {
  if (domain == Domain::Drone) return project(model.drone, descriptors) * model.rotation;
  return project(model.satellite, descriptors);
}

Matrix apply_pca_only(const AlignmentModel& model, const Matrix& descriptors, Domain domain) {
  return project(domain == Domain::Drone ? model.drone : model.satellite, descriptors);
}

namespace {

constexpr char kModelMagic[4] = {'C', 'V', 'A', 'M'};
constexpr std::uint16_t kModelVersion = 1;
constexpr std::size_t kModelHeaderBytes = 4 + 2 + 4 + 4;

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  // Column-major, matching Eigen's default storage.
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) put_f64(out, m(r, c));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  double f64() {
    const double v = std::bit_cast<double>(get_le<std::uint64_t>(bytes_, pos_));
    pos_ += 8;
    return v;
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = f64();
    }
    return m;
  }
  Vector vector(Eigen::Index n) { return matrix(n, 1).col(0); }

  std::size_t pos_ = kModelHeaderBytes;

 private:
  std::span<const std::uint8_t> bytes_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector json_to_vector(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".json";
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const AlignmentModel& model) {
  model.validate();
  const auto d = static_cast<std::uint32_t>(model.dim());
  const auto big_d = static_cast<std::uint32_t>(model.input_dim());
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  put_le<std::uint16_t>(out, kModelVersion);
  put_le<std::uint32_t>(out, d);
  put_le<std::uint32_t>(out, big_d);
  put_matrix(out, model.drone.mean);
  put_matrix(out, model.drone.projection);
  put_matrix(out, model.satellite.mean);
  put_matrix(out, model.satellite.projection);
  put_matrix(out, model.rotation);
  put_le<std::uint32_t>(out, crc32_of(out));
  put_le<std::uint64_t>(out, model.descriptor_hash);
  return out;
}

AlignmentModel decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kModelHeaderBytes || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    fail(ErrorKind::DataValidation, "unrecognized model format (bad magic)");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kModelVersion) {
    fail(ErrorKind::DataValidation, "model version mismatch: " + std::to_string(version));
  }
  const std::uint64_t d = get_le<std::uint32_t>(bytes, 6);
  const std::uint64_t big_d = get_le<std::uint32_t>(bytes, 10);
  if (d == 0 || big_d == 0 || d > big_d || big_d * d > kMaxTensorElements) {
    fail(ErrorKind::DataValidation, "model header has invalid dimensions");
  }
  const std::uint64_t doubles = 2 * big_d + 2 * big_d * d + d * d;
  const std::uint64_t body = kModelHeaderBytes + 8 * doubles;
  if (bytes.size() < body + 4 + 8) fail(ErrorKind::DataValidation, "truncated model file");
  if (bytes.size() > body + 4 + 8) fail(ErrorKind::DataValidation, "trailing bytes in model file");
  if (get_le<std::uint32_t>(bytes, body) != crc32_of(bytes.first(body))) {
    fail(ErrorKind::DataValidation, "model file corrupted (checksum mismatch)");
  }

  Reader in(bytes);
  const auto di = static_cast<Eigen::Index>(d);
  const auto bi = static_cast<Eigen::Index>(big_d);
  AlignmentModel model;
  model.drone.mean = in.vector(bi);
  model.drone.projection = in.matrix(bi, di);
  model.satellite.mean = in.vector(bi);
  model.satellite.projection = in.matrix(bi, di);
  model.rotation = in.matrix(di, di);
  model.descriptor_hash = get_le<std::uint64_t>(bytes, body + 4);
  if (!model.rotation.allFinite() || !model.drone.projection.allFinite() ||
      !model.satellite.projection.allFinite() || !model.drone.mean.allFinite() ||
      !model.satellite.mean.allFinite()) {
    fail(ErrorKind::DataValidation, "model file holds non-finite values");
  }
  return model;
}

void save_model(const AlignmentModel& model, const fs::path& path, const json& extra_meta) {
  const auto bytes = encode_model(model);
  json meta = {{"pairing", std::string(to_string(model.pairing))},
               {"dataset_name", model.dataset_name},
               {"descriptor_hash", hex64(model.descriptor_hash)},
               {"non_unique", model.non_unique},
               {"degenerate_pairs", model.degenerate_pairs},
               {"num_pairs", model.num_pairs},
               {"dim", model.dim()},
               {"input_dim", model.input_dim()},
               {"drone_eigenvalues", vector_to_json(model.drone.eigenvalues)},
               {"satellite_eigenvalues", vector_to_json(model.satellite.eigenvalues)}};
  if (!extra_meta.is_null()) meta["config"] = extra_meta;
  atomic_write(sidecar_path(path), meta.dump(2) + "\n");
  atomic_write(path, bytes);
}

AlignmentModel load_model(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  AlignmentModel model;
  try {
    model = decode_model(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
  const fs::path side = sidecar_path(path);
  if (fs::is_regular_file(side)) {
    json meta;
    try {
      meta = json::parse(read_file_text(side));
      model.pairing = parse_pairing(meta.value("pairing", std::string("given")));
      model.dataset_name = meta.value("dataset_name", std::string());
      model.non_unique = meta.value("non_unique", false);
      model.degenerate_pairs = meta.value("degenerate_pairs", false);
      model.num_pairs = meta.value("num_pairs", std::size_t{0});
      if (meta.contains("drone_eigenvalues")) {
        model.drone.eigenvalues = json_to_vector(meta["drone_eigenvalues"]);
      }
      if (meta.contains("satellite_eigenvalues")) {
        model.satellite.eigenvalues = json_to_vector(meta["satellite_eigenvalues"]);
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::DataValidation, side.string() + ": malformed model metadata: " + e.what());
    }
  }
  model.validate();
  return model;
}

bool check_model_hash(const AlignmentModel& model, std::uint64_t descriptor_hash) {
  if (model.descriptor_hash == descriptor_hash) return true;
  warn("alignment model was fitted on different descriptors (model hash " +
       hex64(model.descriptor_hash) + ", inputs hash " + hex64(descriptor_hash) + ")");
  return false;
}

}  // namespace xview
