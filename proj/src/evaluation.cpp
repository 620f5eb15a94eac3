#include "xview/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include "xview/error.hpp"

namespace xview {

using nlohmann::json;

const std::set<std::string>& GroundTruth::for_query(const std::string& query_id) const {
  auto it = relevant.find(query_id);
  if (it == relevant.end()) {
    fail(ErrorKind::DataValidation, "query '" + query_id + "' has no ground truth");
  }
  if (it->second.empty()) {
    fail(ErrorKind::DataValidation, "query '" + query_id + "' has an empty relevant set");
  }
  return it->second;
}

GroundTruth ground_truth_from(const DescriptorSet& queries, const DescriptorSet& gallery) {
  std::unordered_map<std::string, std::vector<std::string>> by_location;
  for (const auto& g : gallery.items) by_location[g.location_id].push_back(g.image_id);
  GroundTruth gt;
  for (const auto& q : queries.items) {
    auto it = by_location.find(q.location_id);
    if (it == by_location.end()) {
      fail(ErrorKind::DataValidation, "query '" + q.image_id + "' has no relevant gallery item");
    }
    gt.relevant[q.image_id].insert(it->second.begin(), it->second.end());
  }
  return gt;
}

QuerySplit ground_truth_from_manifest(const Dataset& dataset,
                                      const std::vector<RankedResult>& results) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.size(); ++i) index[dataset.entries()[i].image_id] = i;

  std::optional<Domain> query_domain;
  QuerySplit split;
  std::unordered_map<std::string, std::vector<std::string>> gallery_by_location;
  for (const auto& r : results) {
    auto it = index.find(r.query_id);
    if (it == index.end()) {
      fail(ErrorKind::DataValidation, "results reference unknown query_id '" + r.query_id + "'");
    }
    const ManifestEntry& q = dataset.entries()[it->second];
    if (!query_domain) {
      query_domain = q.domain;
      for (const auto& e : dataset.entries()) {
        if (e.domain != q.domain) {
          gallery_by_location[e.location_id].push_back(e.image_id);
          ++split.gallery_size;
        }
      }
    } else if (q.domain != *query_domain) {
      fail(ErrorKind::DataValidation, "results mix drone and satellite queries");
    }
    auto rel = gallery_by_location.find(q.location_id);
    if (rel == gallery_by_location.end()) {
      fail(ErrorKind::DataValidation, "query '" + r.query_id + "' has no relevant gallery item");
    }
    split.truth.relevant[r.query_id].insert(rel->second.begin(), rel->second.end());
  }
  return split;
}

double recall_at_k(const std::vector<RankedResult>& results, const GroundTruth& gt, std::size_t k) {
  if (k < 1) fail(ErrorKind::BadArgument, "K must be >= 1");
  if (results.empty()) fail(ErrorKind::DataValidation, "no queries to evaluate");
  std::size_t hits = 0;
  for (const auto& r : results) {
    const auto& rel = gt.for_query(r.query_id);
    const std::size_t depth = std::min(k, r.hits.size());
    for (std::size_t i = 0; i < depth; ++i) {
      if (rel.count(r.hits[i].gallery_id)) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

std::size_t top1pct_threshold(std::size_t gallery_size) {
  if (gallery_size < 1) fail(ErrorKind::BadArgument, "gallery size must be >= 1");
  return (gallery_size + 99) / 100;
}

double recall_top1pct(const std::vector<RankedResult>& results, const GroundTruth& gt,
                      std::size_t gallery_size) {
  return recall_at_k(results, gt, top1pct_threshold(gallery_size));
}

double average_precision(const RankedResult& result, const std::set<std::string>& relevant) {
  if (relevant.empty()) {
    fail(ErrorKind::DataValidation, "query '" + result.query_id + "' has an empty relevant set");
  }
  double acc = 0.0;
  std::size_t found = 0;
  for (std::size_t rank = 1; rank <= result.hits.size(); ++rank) {
    if (relevant.count(result.hits[rank - 1].gallery_id)) {
      ++found;
      acc += static_cast<double>(found) / static_cast<double>(rank);
    }
  }
  return acc / static_cast<double>(relevant.size());
}

double average_precision(const std::vector<RankedResult>& results, const GroundTruth& gt) {
  if (results.empty()) fail(ErrorKind::DataValidation, "no queries to evaluate");
  double acc = 0.0;
  for (const auto& r : results) acc += average_precision(r, gt.for_query(r.query_id));
  return 100.0 * acc / static_cast<double>(results.size());
}

json EvalReport::to_json() const {
  json recall = json::object();
  for (const auto& [k, v] : recall_at) recall[std::to_string(k)] = v;
  recall["top1pct"] = recall_top1pct;
  return json{{"recall", recall},
              {"top1pct_k", top1pct_k},
              {"ap", ap_mean},
              {"n_queries", num_queries},
              {"gallery_size", gallery_size},
              {"config", config}};
}

EvalReport evaluate(const std::vector<RankedResult>& results, const GroundTruth& gt,
                    const std::vector<std::size_t>& ks, std::size_t gallery_size,
                    const json& config) {
  if (ks.empty()) fail(ErrorKind::BadArgument, "at least one K is required");
  EvalReport report;
  for (std::size_t k : ks) report.recall_at[k] = recall_at_k(results, gt, k);
  report.top1pct_k = top1pct_threshold(gallery_size);
  report.recall_top1pct = recall_at_k(results, gt, report.top1pct_k);
  report.ap_mean = average_precision(results, gt);
  report.num_queries = results.size();
  report.gallery_size = gallery_size;
  report.config = config;
  return report;
}

std::string format_table(const std::vector<TableRow>& rows, const std::vector<std::size_t>& ks) {
  std::vector<std::string> header{""};
  for (std::size_t k : ks) header.push_back("R@" + std::to_string(k));
  header.push_back("R@top1");
  header.push_back("AP");

  std::vector<std::vector<std::string>> cells{header};
  char buf[32];
  for (const auto& row : rows) {
    std::vector<std::string> line{row.label};
    for (std::size_t k : ks) {
      auto it = row.report->recall_at.find(k);
      std::snprintf(buf, sizeof(buf), "%.2f", it == row.report->recall_at.end() ? 0.0 : it->second);
      line.emplace_back(buf);
    }
    std::snprintf(buf, sizeof(buf), "%.2f", row.report->recall_top1pct);
    line.emplace_back(buf);
    std::snprintf(buf, sizeof(buf), "%.2f", row.report->ap_mean);
    line.emplace_back(buf);
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto& s = cells[r][c];
      const std::string pad(widths[c] - s.size(), ' ');
      out += c == 0 ? s + pad : " | " + pad + s;
    }
    out += '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < widths.size(); ++c) {
        out += (c == 0 ? "" : "-+-") + std::string(widths[c], '-');
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace xview
