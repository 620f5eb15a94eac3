#include "xview/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "xview/error.hpp"
#include "xview/parallel.hpp"

namespace xview {

using nlohmann::json;

double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

}  // namespace

std::vector<RankedResult> search(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                 std::size_t k, unsigned threads) {
  if (k < 1) fail(ErrorKind::BadArgument, "K must be >= 1");
  if (gallery.rows.rows() == 0) fail(ErrorKind::DataValidation, "gallery is empty");
  if (queries.rows.rows() > 0 && queries.rows.cols() != gallery.rows.cols()) {
    fail(ErrorKind::DataValidation, "query and gallery dimensions differ");
  }
  if (static_cast<Eigen::Index>(queries.ids.size()) != queries.rows.rows() ||
      static_cast<Eigen::Index>(gallery.ids.size()) != gallery.rows.rows()) {
    fail(ErrorKind::BadArgument, "embedding ids and rows disagree");
  }

  const Matrix q = unit_rows(queries.rows);
  const Matrix g = unit_rows(gallery.rows);
  const std::size_t n = gallery.ids.size();
  const std::size_t depth = std::min(k, n);

  std::vector<RankedResult> results(queries.ids.size());
  parallel_for(results.size(), threads, [&](std::size_t qi) {
    const Vector scores = g * q.row(static_cast<Eigen::Index>(qi)).transpose();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto better = [&](std::size_t a, std::size_t b) {
      const double sa = scores(static_cast<Eigen::Index>(a));
      const double sb = scores(static_cast<Eigen::Index>(b));
      if (sa != sb) return sa > sb;
      return gallery.ids[a] < gallery.ids[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), order.end(),
                      better);
    RankedResult& r = results[qi];
    r.query_id = queries.ids[qi];
    r.hits.reserve(depth);
    for (std::size_t h = 0; h < depth; ++h) {
      r.hits.push_back(Hit{gallery.ids[order[h]], scores(static_cast<Eigen::Index>(order[h]))});
    }
  });
  return results;
}

std::string_view to_string(SearchMode mode) {
  switch (mode) {
    case SearchMode::Aligned:
      return "aligned";
    case SearchMode::PcaOnly:
      return "pca";
    case SearchMode::Raw:
      return "raw";
  }
  return "?";
}

SearchMode parse_search_mode(std::string_view text) {
  if (text == "aligned") return SearchMode::Aligned;
  if (text == "pca") return SearchMode::PcaOnly;
  if (text == "raw") return SearchMode::Raw;
  fail(ErrorKind::BadArgument, "unknown search mode: '" + std::string(text) + "'");
}

EmbeddingSet embed(const DescriptorSet& set, const AlignmentModel* model, SearchMode mode) {
  EmbeddingSet out;
  for (const auto& d : set.items) out.ids.push_back(d.image_id);
  if (set.empty()) return out;
  const Matrix raw = to_matrix(set);
  if (mode == SearchMode::Raw) {
    out.rows = raw;
    return out;
  }
  if (model == nullptr) fail(ErrorKind::BadArgument, "an alignment model is required for this mode");

  out.rows.resize(raw.rows(), model->dim());
  for (Domain domain : {Domain::Drone, Domain::Satellite}) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.items[i].domain == domain) idx.push_back(static_cast<Eigen::Index>(i));
    }
    if (idx.empty()) continue;
    Matrix sub(static_cast<Eigen::Index>(idx.size()), raw.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = raw.row(idx[r]);
    const Matrix mapped = mode == SearchMode::Aligned ? apply_alignment(*model, sub, domain)
                                                      : apply_pca_only(*model, sub, domain);
    for (std::size_t r = 0; r < idx.size(); ++r) out.rows.row(idx[r]) = mapped.row(static_cast<Eigen::Index>(r));
  }
  return out;
}

std::string results_to_jsonl(const std::vector<RankedResult>& results, const json& meta) {
  std::string out;
  if (!meta.is_null()) out += json{{"meta", meta}}.dump() + "\n";
  for (const auto& r : results) {
    json hits = json::array();
    for (const auto& h : r.hits) hits.push_back({{"id", h.gallery_id}, {"score", h.score}});
    out += json{{"query_id", r.query_id}, {"hits", hits}}.dump() + "\n";
  }
  return out;
}

namespace {

template <typename Fn>
void for_each_json_line(std::string_view text, Fn&& fn) {
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
      fail(ErrorKind::DataValidation, "results line " + std::to_string(line_no) + " is not JSON");
    }
    fn(row, line_no);
  }
}

}  // namespace

std::vector<RankedResult> parse_results_jsonl(std::string_view text) {
  std::vector<RankedResult> out;
  for_each_json_line(text, [&](const json& row, std::size_t line_no) {
    if (row.is_object() && row.contains("meta") && row.size() == 1) return;
    if (!row.is_object() || !row.contains("query_id") || !row.contains("hits") ||
        !row["hits"].is_array()) {
      fail(ErrorKind::DataValidation, "results line " + std::to_string(line_no) + " lacks query_id/hits");
    }
    RankedResult r;
    r.query_id = row["query_id"].get<std::string>();
    for (const auto& h : row["hits"]) {
      if (!h.is_object() || !h.contains("id") || !h.contains("score")) {
        fail(ErrorKind::DataValidation, "malformed hit in results for " + r.query_id);
      }
      r.hits.push_back(Hit{h["id"].get<std::string>(), h["score"].get<double>()});
    }
    out.push_back(std::move(r));
  });
  return out;
}

json read_results_meta(std::string_view text) {
  json meta;
  for_each_json_line(text, [&](const json& row, std::size_t) {
    if (meta.is_null() && row.is_object() && row.contains("meta") && row.size() == 1) meta = row["meta"];
  });
  return meta;
}

bool normalize_min_max(const std::vector<double>& raw, std::vector<double>& out) {
  out.assign(raw.size(), 0.5);
  if (raw.empty()) return true;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (range <= 1e-12) return true;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return false;
}

Heatmap similarity_heatmap(const FeatureMap& drone_map, const Descriptor& satellite,
                           const AlignmentModel& model) {
  drone_map.validate();
  const auto dim = static_cast<std::uint32_t>(model.input_dim());
  if (drone_map.channels != dim) {
    fail(ErrorKind::DataValidation, "drone map has " + std::to_string(drone_map.channels) +
                                        " channels but the model expects " + std::to_string(dim));
  }
  if (satellite.values.size() != dim) {
    fail(ErrorKind::DataValidation, "satellite descriptor dimension does not match the model");
  }

  const std::size_t patches = drone_map.num_patches();
  Matrix patch_rows(static_cast<Eigen::Index>(patches), dim);
  for (std::uint32_t k = 0; k < drone_map.channels; ++k) {
    for (std::size_t p = 0; p < patches; ++p) {
      patch_rows(static_cast<Eigen::Index>(p), k) = drone_map.data[std::size_t{k} * patches + p];
    }
  }
  const Matrix aligned = apply_alignment(model, patch_rows, Domain::Drone);
  Vector sat(dim);
  for (std::uint32_t k = 0; k < dim; ++k) sat(k) = satellite.values[k];
  const Vector sat_aligned = apply_alignment(model, sat, Domain::Satellite);

  Heatmap out;
  out.query_id = drone_map.image_id;
  out.gallery_id = satellite.image_id;
  out.height = drone_map.height;
  out.width = drone_map.width;
  out.raw.resize(patches);
  for (std::size_t p = 0; p < patches; ++p) {
    out.raw[p] = cosine_similarity(aligned.row(static_cast<Eigen::Index>(p)).transpose(), sat_aligned);
  }
  out.constant = normalize_min_max(out.raw, out.values);
  if (out.constant) {
    warn("similarity heatmap is constant" +
         (out.query_id.empty() ? std::string() : " for " + out.query_id) + "; emitting uniform 0.5");
  }
  return out;
}

std::vector<double> upsample_bilinear(const std::vector<double>& grid, std::uint32_t height,
                                      std::uint32_t width, std::uint32_t out_height,
                                      std::uint32_t out_width) {
  if (height == 0 || width == 0 || out_height == 0 || out_width == 0) {
    fail(ErrorKind::BadArgument, "upsampling needs non-empty grids");
  }
  if (grid.size() != std::size_t{height} * width) {
    fail(ErrorKind::BadArgument, "grid size does not match its dimensions");
  }
  auto source_coord = [](std::uint32_t o, std::uint32_t out_extent, std::uint32_t in_extent) {
    if (out_extent == 1) return 0.0;
    return static_cast<double>(o) * static_cast<double>(in_extent - 1) /
           static_cast<double>(out_extent - 1);
  };
  std::vector<double> out(std::size_t{out_height} * out_width);
  for (std::uint32_t oy = 0; oy < out_height; ++oy) {
    const double y = source_coord(oy, out_height, height);
    const auto y0 = static_cast<std::uint32_t>(std::floor(y));
    const std::uint32_t y1 = std::min(y0 + 1, height - 1);
    const double fy = y - y0;
    for (std::uint32_t ox = 0; ox < out_width; ++ox) {
      const double x = source_coord(ox, out_width, width);
      const auto x0 = static_cast<std::uint32_t>(std::floor(x));
      const std::uint32_t x1 = std::min(x0 + 1, width - 1);
      const double fx = x - x0;
      auto g = [&](std::uint32_t r, std::uint32_t c) { return grid[std::size_t{r} * width + c]; };
      const double top = g(y0, x0) * (1.0 - fx) + g(y0, x1) * fx;
      const double bottom = g(y1, x0) * (1.0 - fx) + g(y1, x1) * fx;
      out[std::size_t{oy} * out_width + ox] = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

std::string heatmap_to_pgm(const std::vector<double>& values, std::uint32_t height,
                           std::uint32_t width, const std::vector<std::string>& comments) {
  if (values.size() != std::size_t{height} * width) {
    fail(ErrorKind::BadArgument, "heatmap size does not match its dimensions");
  }
  std::string out = "P5\n";
  for (const auto& c : comments) out += "# " + c + "\n";
  out += std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  for (double v : values) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    const auto level = static_cast<std::uint16_t>(std::lround(clamped * 65535.0));
    out.push_back(static_cast<char>(level >> 8));
    out.push_back(static_cast<char>(level & 0xff));
  }
  return out;
}

std::string heatmap_to_csv(const std::vector<double>& values, std::uint32_t height,
                           std::uint32_t width, const std::vector<std::string>& comments) {
  if (values.size() != std::size_t{height} * width) {
    fail(ErrorKind::BadArgument, "heatmap size does not match its dimensions");
  }
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  char buf[32];
  for (std::uint32_t i = 0; i < height; ++i) {
    for (std::uint32_t j = 0; j < width; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", values[std::size_t{i} * width + j]);
      if (j > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace xview
