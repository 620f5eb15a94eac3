#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xview/descriptor.hpp"
#include "xview/feature_store.hpp"
#include "xview/retrieval.hpp"

namespace xview {

// query_id -> relevant gallery ids.
struct GroundTruth {
  std::map<std::string, std::set<std::string>> relevant;

  const std::set<std::string>& for_query(const std::string& query_id) const;
};

// Relevance by equal location_id between queries and gallery. Every query must
// have at least one relevant gallery item.
GroundTruth ground_truth_from(const DescriptorSet& queries, const DescriptorSet& gallery);

struct QuerySplit {
  GroundTruth truth;
  std::size_t gallery_size = 0;
};

// Ground truth for ranked results using manifest labels: each query's gallery is
// every manifest entry of the opposite domain.
QuerySplit ground_truth_from_manifest(const Dataset& dataset,
                                      const std::vector<RankedResult>& results);

// Percentage of queries with a relevant item in the top K.
double recall_at_k(const std::vector<RankedResult>& results, const GroundTruth& gt, std::size_t k);

// Recall@K with K = ceil(gallery_size / 100).
std::size_t top1pct_threshold(std::size_t gallery_size);
double recall_top1pct(const std::vector<RankedResult>& results, const GroundTruth& gt,
                      std::size_t gallery_size);

// (1/|rel|) * sum_i i / rank_i for one query, in [0, 1]. Relevant items missing
// from a truncated ranking contribute zero precision.
double average_precision(const RankedResult& result, const std::set<std::string>& relevant);
// Mean of the above over queries, as a percentage.
double average_precision(const std::vector<RankedResult>& results, const GroundTruth& gt);

struct EvalReport {
  std::map<std::size_t, double> recall_at;
  double recall_top1pct = 0.0;
  std::size_t top1pct_k = 1;
  double ap_mean = 0.0;
  std::size_t num_queries = 0;
  std::size_t gallery_size = 0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const std::vector<RankedResult>& results, const GroundTruth& gt,
                    const std::vector<std::size_t>& ks, std::size_t gallery_size,
                    const nlohmann::json& config = nlohmann::json::object());

// Aligned-column text table: one header row plus one row per report.
struct TableRow {
  std::string label;
  const EvalReport* report;
};
std::string format_table(const std::vector<TableRow>& rows, const std::vector<std::size_t>& ks);

}  // namespace xview
