#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xview/alignment.hpp"
#include "xview/descriptor.hpp"
#include "xview/feature_store.hpp"

namespace xview {

// Rows of vectors in a shared metric space, keyed by id.
struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix rows;  // N x d
};

struct Hit {
  std::string gallery_id;
  double score = 0.0;
};

struct RankedResult {
  std::string query_id;
  std::vector<Hit> hits;  // scores non-increasing, ties by ascending gallery_id
};

double cosine_similarity(const Vector& a, const Vector& b);

// Exact brute-force top-K by cosine similarity. Returns min(K, gallery) hits
// per query. A zero vector scores 0 against everything.
std::vector<RankedResult> search(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                 std::size_t k, unsigned threads = 1);

// How descriptors are mapped before search.
enum class SearchMode { Aligned, PcaOnly, Raw };

std::string_view to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view text);

// Embeds every descriptor through its own domain's path.
EmbeddingSet embed(const DescriptorSet& set, const AlignmentModel* model, SearchMode mode);

std::string results_to_jsonl(const std::vector<RankedResult>& results,
                             const nlohmann::json& meta = nullptr);
std::vector<RankedResult> parse_results_jsonl(std::string_view text);
nlohmann::json read_results_meta(std::string_view text);

struct Heatmap {
  std::string query_id;
  std::string gallery_id;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<double> raw;     // per-patch cosine, row-major
  std::vector<double> values;  // min-max normalized into [0, 1]
  bool constant = false;       // all cosines equal; values are 0.5

  double at(std::uint32_t i, std::uint32_t j) const { return values[std::size_t{i} * width + j]; }
};

// Min-max normalization over a grid. Returns true if the input was constant
// (within 1e-12), in which case every output is 0.5.
bool normalize_min_max(const std::vector<double>& raw, std::vector<double>& out);

// Every patch vector of the drone map is centred, projected and rotated like a
// drone descriptor, then compared by cosine to the aligned satellite descriptor.
Heatmap similarity_heatmap(const FeatureMap& drone_map, const Descriptor& satellite,
                           const AlignmentModel& model);

// Bilinear resize with align-corners sampling: output corner pixels coincide
// with the corner patch centres.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, std::uint32_t height,
                                      std::uint32_t width, std::uint32_t out_height,
                                      std::uint32_t out_width);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Comment lines carry
// the optional metadata.
std::string heatmap_to_pgm(const std::vector<double>& values, std::uint32_t height,
                           std::uint32_t width, const std::vector<std::string>& comments = {});
std::string heatmap_to_csv(const std::vector<double>& values, std::uint32_t height,
                           std::uint32_t width, const std::vector<std::string>& comments = {});

}  // namespace xview
