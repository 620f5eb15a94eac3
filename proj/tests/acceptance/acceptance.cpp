// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "test_util.hpp"
#include "xview/aggregation.hpp"
#include "xview/alignment.hpp"
#include "xview/evaluation.hpp"
#include "xview/feature_store.hpp"
#include "xview/io_util.hpp"
#include "xview/pooling.hpp"
#include "xview/retrieval.hpp"
#include "xview/synth.hpp"

using namespace xview;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index d) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, d, d));
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Outcome gem_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::uint32_t> dim(1, 12);
  double worst_p1 = 0.0;
  std::size_t order_violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const FeatureMap m = testing::random_map(rng, dim(rng), dim(rng), dim(rng), 0.0, 5.0);
    PoolingSpec spec;
    spec.kind = PoolKind::Avg;
    const auto avg = pool_map(m, spec).values;
    spec.kind = PoolKind::Max;
    const auto mx = pool_map(m, spec).values;
    spec.kind = PoolKind::GeM;
    spec.p = 1.0;
    const auto g1 = pool_map(m, spec).values;
    for (std::size_t k = 0; k < avg.size(); ++k) worst_p1 = std::max(worst_p1, std::abs(g1[k] - avg[k]));
    for (double p : {2.0, 4.0, 8.0, 16.0}) {
      spec.p = p;
      const auto g = pool_map(m, spec).values;
      for (std::size_t k = 0; k < g.size(); ++k) {
        // Both bounds are exact inequalities; allow only rounding of the last ulp or so.
        const double slack = 1e-12 * std::max(1.0, mx[k]);
        if (g[k] < avg[k] - slack || g[k] > mx[k] + slack) ++order_violations;
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst_p1 <= 1e-9 && order_violations == 0 && t < 5.0,
          "max|GeM1-avg|=" + fmt("%.2e", worst_p1) + " order_violations=" + std::to_string(order_violations) +
              " time=" + fmt("%.2fs", t)};
}

Outcome procrustes_recovery() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1002);
  const int dims[] = {2, 3, 5, 16};
  double worst_err = 0.0;
  std::size_t beaten = 0;
  for (int i = 0; i < 100; ++i) {
    const int d = dims[i % 4];
    const Matrix truth = random_orthogonal(rng, d);
    const Matrix xd = gaussian(rng, 20, d);
    worst_err = std::max(worst_err, (fit_procrustes(xd, xd * truth).rotation - truth).norm());

    const Matrix xs = xd * truth + 0.2 * gaussian(rng, 20, d);
    const double best = procrustes_objective(xd, xs, fit_procrustes(xd, xs).rotation);
    for (int t = 0; t < 1000; ++t) {
      if (procrustes_objective(xd, xs, random_orthogonal(rng, d)) < best) ++beaten;
    }
  }
  const double t = seconds_since(t0);
  return {worst_err <= 1e-6 && beaten == 0 && t < 30.0,
          "max||R-R*||_F=" + fmt("%.2e", worst_err) + " random_wins=" + std::to_string(beaten) +
              " time=" + fmt("%.2fs", t)};
}

Outcome grid_oracle_2d() {
  std::mt19937_64 rng(1003);
  double worst_gap = -INFINITY;
  std::size_t failures = 0;
  for (int i = 0; i < 50; ++i) {
    const Matrix xd = gaussian(rng, 20, 2);
    const Matrix xs = xd * random_orthogonal(rng, 2) + 0.5 * gaussian(rng, 20, 2);
    const double got = procrustes_objective(xd, xs, fit_procrustes(xd, xs).rotation);
    double grid = INFINITY;
    for (int k = 0; k < 3600; ++k) {
      const double th = 2.0 * std::numbers::pi * k / 3600.0;
      Matrix rot(2, 2), ref(2, 2);
      rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
      ref << std::cos(th), std::sin(th), std::sin(th), -std::cos(th);
      grid = std::min({grid, procrustes_objective(xd, xs, rot), procrustes_objective(xd, xs, ref)});
    }
    worst_gap = std::max(worst_gap, got - grid);
    if (got > grid + 1e-9) ++failures;
  }
  return {failures == 0, "max(obj-grid)=" + fmt("%.3e", worst_gap) + " failures=" + std::to_string(failures)};
}

double r1(const SynthBenchmark& b, SearchMode mode) {
  const AlignmentModel model = fit_alignment(b.drone, b.satellite);
  const auto q = embed(b.drone, &model, mode);
  const auto g = embed(b.satellite, &model, mode);
  return recall_at_k(search(q, g, 1), b.drone_to_satellite, 1);
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  SynthSpec spec;  // 100 locations, D = 64, latent 16, sigma 0
  const SynthBenchmark b = generate(spec);
  const double aligned = r1(b, SearchMode::Aligned);
  const double pca = r1(b, SearchMode::PcaOnly);
  const double t = seconds_since(t0);
  return {aligned == 100.0 && pca <= aligned && t < 10.0,
          "aligned R@1=" + fmt("%.2f", aligned) + " pca_only R@1=" + fmt("%.2f", pca) + " time=" + fmt("%.2fs", t)};
}

Outcome monotone_degradation() {
  std::string detail = "R@1:";
  double prev = INFINITY;
  bool ok = true;
  for (double sigma : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    SynthSpec spec;
    spec.noise_sigma = sigma;
    const double r = r1(generate(spec), SearchMode::Aligned);
    if (r > prev) ok = false;
    prev = r;
    detail += " " + fmt("%g", sigma) + "->" + fmt("%.2f", r);
  }
  return {ok, detail};
}

Outcome metric_oracle() {
  const auto sets =
      nlohmann::json::parse(read_file_text(std::string(XVIEW_FIXTURE_DIR) + "/planted_ranks.json"));
  std::size_t mismatches = 0;
  double worst_ap = 0.0;
  for (const auto& s : sets) {
    const std::size_t gallery = s["gallery_size"];
    const std::size_t depth = s["depth"];
    GroundTruth gt;
    std::vector<RankedResult> results;
    std::size_t qi = 0;
    for (const auto& rel : s["relevant"]) {
      const std::string qid = "q" + std::to_string(qi++);
      RankedResult r{qid, {}};
      for (std::size_t g = 0; g < depth; ++g) {
        char id[32];
        std::snprintf(id, sizeof(id), "g%05zu", g);  // zero-padded so id order matches rank order
        r.hits.push_back({id, 1.0 - 1e-3 * static_cast<double>(g)});
      }
      for (int g : rel) {
        char id[32];
        std::snprintf(id, sizeof(id), "g%05d", g);
        gt.relevant[qid].insert(id);
      }
      results.push_back(std::move(r));
    }
    for (const auto& [k, expected] : s["recall"].items()) {
      if (recall_at_k(results, gt, std::stoul(k)) != expected.get<double>()) ++mismatches;
    }
    if (top1pct_threshold(gallery) != s["top1pct_k"].get<std::size_t>()) ++mismatches;
    if (recall_top1pct(results, gt, gallery) != s["recall_top1pct"].get<double>()) ++mismatches;
    const double ap_err = std::abs(average_precision(results, gt) - s["ap"].get<double>());
    worst_ap = std::max(worst_ap, ap_err);
    if (ap_err > 1e-9) ++mismatches;
  }
  return {mismatches == 0 && sets.size() == 200,
          std::to_string(sets.size()) + " sets, mismatches=" + std::to_string(mismatches) +
              " max|AP-oracle|=" + fmt("%.2e", worst_ap)};
}

Outcome alpha_limit() {
  std::mt19937_64 rng(1007);
  std::uniform_int_distribution<std::uint32_t> side(3, 14);
  std::uniform_int_distribution<std::uint32_t> ch(1, 32);
  AggregationSpec big;
  big.alpha = 1000.0;
  AggregationSpec single;
  single.scales = {1};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const FeatureMap m = testing::random_map(rng, ch(rng), side(rng), side(rng), 0.0, 3.0);
    const auto a = aggregate(m, big).values;
    const auto b = aggregate(m, single).values;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(double{a[k]} - b[k]));
  }
  return {worst <= 1e-6, "max|diff|=" + fmt("%.2e", worst)};
}

bool run_pipeline(const std::filesystem::path& dir) {
  std::ostringstream out, err;
  const std::string d = dir.string();
  const std::vector<std::vector<std::string>> steps{
      {"--seed", "17", "synth", "-", d},
      {"align", d + "/drone.jsonl", d + "/satellite.jsonl", "-o", d + "/model.cvam"},
      {"search", d + "/model.cvam", d + "/drone.jsonl", d + "/satellite.jsonl", "-o", d + "/results.jsonl"},
      {"evaluate", d + "/results.jsonl", d + "/manifest.json", "-o", d + "/report.json"},
  };
  for (const auto& args : steps) {
    if (cli::run(args, out, err) != 0) {
      std::fprintf(stderr, "%s", err.str().c_str());
      return false;
    }
  }
  return true;
}

Outcome determinism() {
  testing::TempDir dir("accept");
  if (!run_pipeline(dir / "one") || !run_pipeline(dir / "two")) return {false, "pipeline failed"};
  bool ok = true;
  std::string detail;
  for (const char* f : {"report.json", "report.txt", "results.jsonl", "model.cvam", "model.cvam.json"}) {
    const bool same = read_file_bytes(dir / "one" / f) == read_file_bytes(dir / "two" / f);
    ok = ok && same;
    detail += std::string(f) + (same ? "=same " : "=DIFFERENT ");
  }
  return {ok, detail};
}

Outcome format_robustness() {
  const auto golden = read_file_bytes(std::string(XVIEW_FIXTURE_DIR) + "/golden_c2_h3_w3.cvfm");
  struct Field {
    const char* name;
    std::size_t offset;
    std::size_t width;
  };
  const Field fields[] = {{"magic", 0, 4}, {"version", 4, 2}, {"dtype", 6, 2}, {"channels", 8, 4},
                          {"height", 12, 4}, {"width", 16, 4}, {"reserved", 20, 8}};
  std::size_t tried = 0;
  std::size_t accepted = 0;
  std::string accepted_names;
  auto attempt = [&](const std::vector<std::uint8_t>& bytes, const char* name) {
    ++tried;
    try {
      decode_feature_map(bytes);
      ++accepted;
      accepted_names += std::string(name) + " ";
    } catch (const Error&) {
    }
  };
  // Sanity: the untouched fixture must decode.
  try {
    decode_feature_map(golden);
  } catch (const Error& e) {
    return {false, std::string("golden fixture rejected: ") + e.what()};
  }
  for (const Field& f : fields) {
    // every bit flip and every single-byte overwrite inside the field
    for (std::size_t i = f.offset; i < f.offset + f.width; ++i) {
      for (int bit = 0; bit < 8; ++bit) {
        auto b = golden;
        b[i] ^= static_cast<std::uint8_t>(1u << bit);
        attempt(b, f.name);
      }
      for (int v : {0x00, 0x7f, 0xff}) {
        if (golden[i] == v) continue;
        auto b = golden;
        b[i] = static_cast<std::uint8_t>(v);
        attempt(b, f.name);
      }
    }
    // whole-field values
    for (std::uint8_t v : {0x00, 0xff}) {
      auto b = golden;
      bool changed = false;
      for (std::size_t i = f.offset; i < f.offset + f.width; ++i) {
        changed |= b[i] != v;
        b[i] = v;
      }
      if (changed) attempt(b, f.name);
    }
  }
  return {accepted == 0, std::to_string(tried) + " corruptions over 7 header fields, accepted=" +
                             std::to_string(accepted) + (accepted ? " [" + accepted_names + "]" : "")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const Criterion criteria[] = {
      {"gem_correctness", gem_correctness},
      {"procrustes_exact_recovery", procrustes_recovery},
      {"procrustes_2d_grid_oracle", grid_oracle_2d},
      {"synthetic_end_to_end", synthetic_end_to_end},
      {"monotone_degradation", monotone_degradation},
      {"metric_oracle_equivalence", metric_oracle},
      {"alpha_limit", alpha_limit},
      {"determinism", determinism},
      {"format_robustness", format_robustness},
  };
  set_warning_sink([](std::string_view) {});
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.ok) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
