#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdio>

#include "xview/aggregation.hpp"
#include "xview/alignment.hpp"
#include "xview/error.hpp"
#include "xview/evaluation.hpp"
#include "xview/feature_store.hpp"
#include "xview/pooling.hpp"
#include "xview/retrieval.hpp"
#include "xview/synth.hpp"

namespace py = pybind11;
using namespace xview;

namespace {

py::exception<xview::Error>* error_type = nullptr;

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureMap map_from_array(const FloatArray& a) {
  if (a.ndim() != 3) throw py::value_error("feature map must be a (C, H, W) array");
  FeatureMap m;
  m.channels = static_cast<std::uint32_t>(a.shape(0));
  m.height = static_cast<std::uint32_t>(a.shape(1));
  m.width = static_cast<std::uint32_t>(a.shape(2));
  m.data.assign(a.data(), a.data() + a.size());
  m.validate();
  return m;
}

py::array_t<float> array_from_map(const FeatureMap& m) {
  py::array_t<float> out({m.channels, m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::array_t<double> to_array(const std::vector<float>& v) {
  py::array_t<double> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Index-derived ids, zero padded so lexicographic order equals index order.
std::string index_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%09zu", prefix, i);
  return buf;
}

DescriptorSet set_from(const Matrix& rows, const std::vector<std::string>& locations, Domain domain) {
  if (static_cast<std::size_t>(rows.rows()) != locations.size()) {
    throw py::value_error("need one location id per descriptor row");
  }
  DescriptorSet s;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Descriptor d;
    d.image_id = index_id(domain == Domain::Drone ? "d" : "s", static_cast<std::size_t>(i));
    d.domain = domain;
    d.location_id = locations[static_cast<std::size_t>(i)];
    d.values.resize(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index j = 0; j < rows.cols(); ++j) d.values[static_cast<std::size_t>(j)] = static_cast<float>(rows(i, j));
    s.items.push_back(std::move(d));
  }
  return s;
}

Matrix rows_of(const DescriptorSet& set) { return to_matrix(set); }

std::vector<std::string> locations_of(const DescriptorSet& set) {
  std::vector<std::string> out;
  for (const auto& d : set.items) out.push_back(d.location_id);
  return out;
}

std::vector<std::string> ids_of(const DescriptorSet& set) {
  std::vector<std::string> out;
  for (const auto& d : set.items) out.push_back(d.image_id);
  return out;
}

PoolingSpec pooling_spec(const std::string& kind, double p, bool clamp) {
  PoolingSpec s;
  s.kind = parse_pool_kind(kind);
  s.p = p;
  s.clamp_negative = clamp;
  return s;
}

// Ranked index lists in, GroundTruth over index ids.
std::vector<RankedResult> ranked_from(const std::vector<std::vector<std::size_t>>& rankings) {
  std::vector<RankedResult> out;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    RankedResult r{index_id("q", q), {}};
    for (std::size_t i = 0; i < rankings[q].size(); ++i) {
      r.hits.push_back({index_id("g", rankings[q][i]), -static_cast<double>(i)});
    }
    out.push_back(std::move(r));
  }
  return out;
}

GroundTruth truth_from(const std::vector<std::vector<std::size_t>>& relevant) {
  GroundTruth gt;
  for (std::size_t q = 0; q < relevant.size(); ++q) {
    auto& set = gt.relevant[index_id("q", q)];
    for (std::size_t g : relevant[q]) set.insert(index_id("g", g));
  }
  return gt;
}

void check_sizes(const std::vector<std::vector<std::size_t>>& a, const std::vector<std::vector<std::size_t>>& b) {
  if (a.size() != b.size()) throw py::value_error("rankings and relevant must have one entry per query");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Training-free cross-view geo-localization core";

  // Subclass of ValueError carrying .kind and .exit_code. Deliberately leaked:
  // it must outlive every translator call.
  error_type = new py::exception<xview::Error>(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const xview::Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type->ptr())(e.what());
      exc.attr("kind") = std::string(xview::to_string(e.kind()));
      exc.attr("exit_code") = static_cast<int>(e.kind());
      PyErr_SetObject(error_type->ptr(), exc.ptr());
    }
  });

  // feature files
  m.def("read_feature_map", [](const std::filesystem::path& path) { return array_from_map(read_feature_map(path)); },
        py::arg("path"), "Read a .cvfm tensor as a float32 (C, H, W) array.");
  m.def("write_feature_map",
        [](const std::filesystem::path& path, const FloatArray& a) { write_feature_map(map_from_array(a), path); },
        py::arg("path"), py::arg("array"));

  // pooling and aggregation
  m.def("pool",
        [](const FloatArray& a, const std::string& kind, double p, bool clamp_negative) {
          return to_array(pool_map(map_from_array(a), pooling_spec(kind, p, clamp_negative)).values);
        },
        py::arg("feature_map"), py::arg("kind") = "gem", py::arg("p") = 3.0, py::arg("clamp_negative") = true);
  m.def("pool_region",
        [](const FloatArray& a, std::uint32_t row0, std::uint32_t col0, std::uint32_t rows, std::uint32_t cols,
           const std::string& kind, double p) {
          return to_array(pool_region(map_from_array(a), Region{row0, col0, rows, cols}, pooling_spec(kind, p, true)).values);
        },
        py::arg("feature_map"), py::arg("row0"), py::arg("col0"), py::arg("rows"), py::arg("cols"),
        py::arg("kind") = "gem", py::arg("p") = 3.0);
  m.def("aggregate",
        [](const FloatArray& a, const std::string& kind, double p, std::vector<std::uint32_t> scales, double alpha,
           bool normalize_regions) {
          AggregationSpec spec;
          spec.pooling = pooling_spec(kind, p, true);
          spec.scales = std::move(scales);
          spec.alpha = alpha;
          spec.normalize_regions = normalize_regions;
          return to_array(aggregate(map_from_array(a), spec).values);
        },
        py::arg("feature_map"), py::arg("kind") = "gem", py::arg("p") = 3.0,
        py::arg("scales") = std::vector<std::uint32_t>{1, 2, 3}, py::arg("alpha") = 6.0,
        py::arg("normalize_regions") = true, "Multi-scale weighted regional descriptor, unit norm.");

  // alignment
  m.def("fit_pca",
        [](const Matrix& x, Eigen::Index dim) {
          const DomainStats s = fit_pca(x, dim);
          return py::dict(py::arg("mean") = s.mean, py::arg("projection") = s.projection,
                          py::arg("eigenvalues") = s.eigenvalues);
        },
        py::arg("descriptors"), py::arg("dim"));
  m.def("fit_procrustes",
        [](const Matrix& drone, const Matrix& satellite, bool strict_rotation) {
          const auto r = fit_procrustes(drone, satellite, strict_rotation);
          return py::make_tuple(r.rotation, r.singular_values, r.non_unique);
        },
        py::arg("drone"), py::arg("satellite"), py::arg("strict_rotation") = false,
        "Orthogonal R minimising ||drone @ R - satellite||_F. Returns (R, singular_values, non_unique).");
  m.def("procrustes_objective", &procrustes_objective, py::arg("drone"), py::arg("satellite"), py::arg("rotation"));

  py::class_<AlignmentModel>(m, "AlignmentModel")
      .def_property_readonly("dim", &AlignmentModel::dim)
      .def_property_readonly("input_dim", &AlignmentModel::input_dim)
      .def_property_readonly("rotation", [](const AlignmentModel& a) { return a.rotation; })
      .def_property_readonly("drone_mean", [](const AlignmentModel& a) { return a.drone.mean; })
      .def_property_readonly("drone_projection", [](const AlignmentModel& a) { return a.drone.projection; })
      .def_property_readonly("satellite_mean", [](const AlignmentModel& a) { return a.satellite.mean; })
      .def_property_readonly("satellite_projection", [](const AlignmentModel& a) { return a.satellite.projection; })
      .def_readonly("non_unique", &AlignmentModel::non_unique)
      .def_readonly("degenerate_pairs", &AlignmentModel::degenerate_pairs)
      .def_readonly("num_pairs", &AlignmentModel::num_pairs)
      .def("apply",
           [](const AlignmentModel& a, const Matrix& x, const std::string& domain) {
             return apply_alignment(a, x, parse_domain(domain));
           },
           py::arg("descriptors"), py::arg("domain"))
      .def("apply_pca_only",
           [](const AlignmentModel& a, const Matrix& x, const std::string& domain) {
             return apply_pca_only(a, x, parse_domain(domain));
           },
           py::arg("descriptors"), py::arg("domain"))
      .def("save", [](const AlignmentModel& a, const std::filesystem::path& p) { save_model(a, p); }, py::arg("path"))
      .def_static("load", &load_model, py::arg("path"));

  m.def("fit_alignment",
        [](const Matrix& drone, const Matrix& satellite, const std::vector<std::string>& drone_locations,
           const std::vector<std::string>& satellite_locations, std::optional<Eigen::Index> dim,
           std::optional<double> variance_fraction, const std::string& pairing, bool strict_rotation) {
          AlignmentOptions o;
          o.dim = dim;
          o.variance_fraction = variance_fraction;
          o.pairing = parse_pairing(pairing);
          o.strict_rotation = strict_rotation;
          return fit_alignment(set_from(drone, drone_locations, Domain::Drone),
                               set_from(satellite, satellite_locations, Domain::Satellite), o);
        },
        py::arg("drone"), py::arg("satellite"), py::arg("drone_locations"), py::arg("satellite_locations"),
        py::arg("dim") = py::none(), py::arg("variance_fraction") = py::none(), py::arg("pairing") = "given",
        py::arg("strict_rotation") = false);

  // retrieval
  m.def("search",
        [](const Matrix& queries, const Matrix& gallery, std::size_t k) {
          EmbeddingSet q{{}, queries};
          EmbeddingSet g{{}, gallery};
          for (Eigen::Index i = 0; i < queries.rows(); ++i) q.ids.push_back(index_id("q", static_cast<std::size_t>(i)));
          for (Eigen::Index i = 0; i < gallery.rows(); ++i) g.ids.push_back(index_id("g", static_cast<std::size_t>(i)));
          const auto results = search(q, g, k);
          const std::size_t width = results.empty() ? 0 : results.front().hits.size();
          py::array_t<std::int64_t> idx({results.size(), width});
          py::array_t<double> scores({results.size(), width});
          auto ri = idx.mutable_unchecked<2>();
          auto rs = scores.mutable_unchecked<2>();
          for (std::size_t r = 0; r < results.size(); ++r) {
            for (std::size_t c = 0; c < width; ++c) {
              ri(r, c) = std::stoll(results[r].hits[c].gallery_id.substr(1));
              rs(r, c) = results[r].hits[c].score;
            }
          }
          return py::make_tuple(idx, scores);
        },
        py::arg("queries"), py::arg("gallery"), py::arg("k"),
        "Exact cosine top-k. Returns (indices, scores), ties broken by lower index.");

  m.def("similarity_heatmap",
        [](const AlignmentModel& model, const FloatArray& drone_map, const Vector& satellite) {
          Descriptor sat;
          sat.domain = Domain::Satellite;
          sat.values.assign(satellite.data(), satellite.data() + satellite.size());
          const Heatmap h = similarity_heatmap(map_from_array(drone_map), sat, model);
          py::array_t<double> out({h.height, h.width});
          std::copy(h.values.begin(), h.values.end(), out.mutable_data());
          return out;
        },
        py::arg("model"), py::arg("drone_map"), py::arg("satellite"));

  // metrics: rankings are gallery indices per query, relevant the index sets
  m.def("recall_at_k",
        [](const std::vector<std::vector<std::size_t>>& rankings, const std::vector<std::vector<std::size_t>>& relevant,
           std::size_t k) {
          check_sizes(rankings, relevant);
          return recall_at_k(ranked_from(rankings), truth_from(relevant), k);
        },
        py::arg("rankings"), py::arg("relevant"), py::arg("k"));
  m.def("recall_top1pct",
        [](const std::vector<std::vector<std::size_t>>& rankings, const std::vector<std::vector<std::size_t>>& relevant,
           std::size_t gallery_size) {
          check_sizes(rankings, relevant);
          return recall_top1pct(ranked_from(rankings), truth_from(relevant), gallery_size);
        },
        py::arg("rankings"), py::arg("relevant"), py::arg("gallery_size"));
  m.def("average_precision",
        [](const std::vector<std::vector<std::size_t>>& rankings, const std::vector<std::vector<std::size_t>>& relevant) {
          check_sizes(rankings, relevant);
          return average_precision(ranked_from(rankings), truth_from(relevant));
        },
        py::arg("rankings"), py::arg("relevant"));
  m.def("top1pct_threshold", &top1pct_threshold, py::arg("gallery_size"));

  // synthetic benchmark
  m.def("synth_generate",
        [](std::uint32_t num_locations, std::uint32_t views_per_location_drone, std::uint32_t latent_dim,
           std::uint32_t ambient_dim, double domain_rotation_angle_scale, double domain_offset_norm,
           double noise_sigma, double location_jitter, bool shared_domain_map, std::uint64_t seed) {
          SynthSpec s;
          s.num_locations = num_locations;
          s.views_per_location_drone = views_per_location_drone;
          s.latent_dim = latent_dim;
          s.ambient_dim = ambient_dim;
          s.domain_rotation_angle_scale = domain_rotation_angle_scale;
          s.domain_offset_norm = domain_offset_norm;
          s.noise_sigma = noise_sigma;
          s.location_jitter = location_jitter;
          s.shared_domain_map = shared_domain_map;
          s.seed = seed;
          const SynthBenchmark b = generate(s);
          return py::dict(py::arg("drone") = rows_of(b.drone), py::arg("satellite") = rows_of(b.satellite),
                          py::arg("drone_ids") = ids_of(b.drone), py::arg("satellite_ids") = ids_of(b.satellite),
                          py::arg("drone_locations") = locations_of(b.drone),
                          py::arg("satellite_locations") = locations_of(b.satellite));
        },
        py::arg("num_locations") = 100, py::arg("views_per_location_drone") = 1, py::arg("latent_dim") = 16,
        py::arg("ambient_dim") = 64, py::arg("domain_rotation_angle_scale") = 1.0,
        py::arg("domain_offset_norm") = 0.5, py::arg("noise_sigma") = 0.0, py::arg("location_jitter") = 0.0,
        py::arg("shared_domain_map") = false, py::arg("seed") = 0);
}
