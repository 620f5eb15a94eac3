#include <doctest.h>

#include <algorithm>

#include "test_util.hpp"
#include "xview/evaluation.hpp"

using namespace xview;

namespace {

// Gallery g0..g{n-1}, ranked in the given order.
RankedResult ranking(const std::string& q, const std::vector<int>& order) {
  RankedResult r{q, {}};
  double score = 1.0;
  for (int i : order) {
    r.hits.push_back({"g" + std::to_string(i), score});
    score -= 1e-3;
  }
  return r;
}

std::vector<int> iota(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("recall at K") {
  GroundTruth gt;
  gt.relevant["q0"] = {"g0"};
  gt.relevant["q1"] = {"g1"};
  std::vector<RankedResult> rs{ranking("q0", {0, 1, 2}), ranking("q1", {1, 0, 2})};
  CHECK(recall_at_k(rs, gt, 1) == 100.0);

  rs[1] = ranking("q1", {0, 1, 2});  // relevant item at rank 2
  CHECK(recall_at_k(rs, gt, 1) == 50.0);
  CHECK(recall_at_k(rs, gt, 5) == 100.0);
}

TEST_CASE("a single query at rank 2") {
  GroundTruth gt;
  gt.relevant["q"] = {"g1"};
  const std::vector<RankedResult> rs{ranking("q", iota(10))};
  CHECK(recall_at_k(rs, gt, 1) == 0.0);
  CHECK(recall_at_k(rs, gt, 5) == 100.0);
  CHECK(average_precision(rs, gt) == doctest::Approx(50.0));
}

TEST_CASE("top-1% threshold") {
  CHECK(top1pct_threshold(50) == 1);
  CHECK(top1pct_threshold(100) == 1);
  CHECK(top1pct_threshold(101) == 2);
  CHECK(top1pct_threshold(200) == 2);
  CHECK(top1pct_threshold(951) == 10);
  CHECK(top1pct_threshold(1) == 1);
}

TEST_CASE("average precision hand cases") {
  CHECK(average_precision(ranking("q", {0, 1, 2, 3, 4}), {"g0"}) == doctest::Approx(1.0));
  CHECK(average_precision(ranking("q", {0, 1, 2, 3, 4}), {"g3"}) == doctest::Approx(0.25));
  // relevant at ranks 1, 3, 5: (1 + 2/3 + 3/5) / 3
  CHECK(average_precision(ranking("q", {0, 1, 2, 3, 4}), {"g0", "g2", "g4"}) ==
        doctest::Approx(0.755555555556).epsilon(1e-9));
  // the only relevant item last in a gallery of 10
  std::vector<int> reversed = iota(10);
  std::reverse(reversed.begin(), reversed.end());
  GroundTruth gt;
  gt.relevant["q"] = {"g0"};
  CHECK(average_precision({ranking("q", reversed)}, gt) == doctest::Approx(10.0));
  // relevant item cut off by a truncated ranking
  CHECK(average_precision(ranking("q", {0, 1}), {"g5"}) == 0.0);
  CHECK(average_precision(ranking("q", {0, 1}), {"g0", "g5"}) == doctest::Approx(0.5));
}

TEST_CASE("planted ranks agree with a direct oracle") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + static_cast<int>(rng() % 80);
    GroundTruth gt;
    std::vector<RankedResult> rs;
    std::vector<int> planted;
    for (int q = 0; q < 10; ++q) {
      std::vector<int> order = iota(n);
      std::shuffle(order.begin(), order.end(), rng);
      const int rank = 1 + static_cast<int>(rng() % n);
      planted.push_back(rank);
      const std::string qid = "q" + std::to_string(q);
      gt.relevant[qid] = {"g" + std::to_string(order[rank - 1])};
      rs.push_back(ranking(qid, order));
    }
    for (std::size_t k : {1, 5, 10}) {
      const double expected =
          100.0 * std::count_if(planted.begin(), planted.end(), [&](int r) { return r <= static_cast<int>(k); }) / 10.0;
      CHECK(recall_at_k(rs, gt, k) == doctest::Approx(expected).epsilon(1e-12));
    }
    double ap = 0.0;
    for (int r : planted) ap += 1.0 / r;
    CHECK(std::abs(average_precision(rs, gt) - 100.0 * ap / 10.0) <= 1e-9);
  }
}

TEST_CASE("metric invariants") {
  std::mt19937_64 rng(62);
  GroundTruth gt;
  std::vector<RankedResult> rs;
  for (int q = 0; q < 30; ++q) {
    std::vector<int> order = iota(40);
    std::shuffle(order.begin(), order.end(), rng);
    const std::string qid = "q" + std::to_string(q);
    gt.relevant[qid] = {"g" + std::to_string(q % 40), "g" + std::to_string((q + 7) % 40)};
    rs.push_back(ranking(qid, order));
  }
  double prev = 0.0;
  for (std::size_t k = 1; k <= 40; ++k) {
    const double r = recall_at_k(rs, gt, k);
    CHECK(r >= prev);
    CHECK(r <= 100.0);
    prev = r;
  }
  CHECK(prev == 100.0);
  const double ap = average_precision(rs, gt);
  CHECK(ap >= 0.0);
  CHECK(ap <= 100.0);

  // Query order does not matter.
  auto shuffled = rs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(average_precision(shuffled, gt) == doctest::Approx(ap).epsilon(1e-12));
  CHECK(recall_at_k(shuffled, gt, 5) == recall_at_k(rs, gt, 5));
}

TEST_CASE("unknown queries and empty relevance are errors") {
  GroundTruth gt;
  gt.relevant["q0"] = {"g0"};
  gt.relevant["q1"] = {};
  CHECK_THROWS_AS(recall_at_k({ranking("qx", {0})}, gt, 1), Error);
  CHECK_THROWS_AS(gt.for_query("q1"), Error);
}

TEST_CASE("ground truth from location labels") {
  DescriptorSet q, g;
  q.items = {{"d0", Domain::Drone, "A", {1}}, {"d1", Domain::Drone, "B", {1}}};
  g.items = {{"s0", Domain::Satellite, "B", {1}}, {"s1", Domain::Satellite, "A", {1}},
             {"s2", Domain::Satellite, "A", {1}}};
  const GroundTruth gt = ground_truth_from(q, g);
  CHECK(gt.for_query("d0") == std::set<std::string>{"s1", "s2"});
  CHECK(gt.for_query("d1") == std::set<std::string>{"s0"});
  q.items.push_back({"d2", Domain::Drone, "C", {1}});
  CHECK_THROWS_AS(ground_truth_from(q, g), Error);
}

TEST_CASE("report and table") {
  GroundTruth gt;
  gt.relevant["q0"] = {"g0"};
  gt.relevant["q1"] = {"g2"};
  const std::vector<RankedResult> rs{ranking("q0", {0, 1, 2}), ranking("q1", {0, 1, 2})};
  const EvalReport rep = evaluate(rs, gt, {1, 5}, 3);
  CHECK(rep.recall_at.at(1) == 50.0);
  CHECK(rep.recall_at.at(5) == 100.0);
  CHECK(rep.top1pct_k == 1);
  CHECK(rep.recall_top1pct == 50.0);
  CHECK(rep.ap_mean == doctest::Approx((100.0 + 100.0 / 3.0) / 2.0));
  CHECK(rep.num_queries == 2);

  const auto j = rep.to_json();
  CHECK(j["recall"]["1"] == 50.0);
  CHECK(j["recall"]["top1pct"] == 50.0);
  CHECK(j["n_queries"] == 2);

  const std::string table = format_table({{"aligned", &rep}}, {1, 5});
  CHECK(table ==
        "        |   R@1 |    R@5 | R@top1 |    AP\n"
        "--------+-------+--------+--------+------\n"
        "aligned | 50.00 | 100.00 |  50.00 | 66.67\n");
}
