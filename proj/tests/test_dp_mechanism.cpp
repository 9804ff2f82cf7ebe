#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "collab/dp_mechanism.hpp"
#include "collab/rng.hpp"

using namespace collab;
using namespace collab::dp;

namespace {

FoQDataset make_ds(std::vector<FoQPoint> pts) {
  FoQDataset ds;
  ds.points = std::move(pts);
  return ds;
}

}  // namespace

TEST_CASE("query_stats sums and bounds") {
  // Points written as (h, t) pairs: (-5, 2) and (-10, 4).
  const auto s = query_stats(make_ds({{2.0, -5.0}, {4.0, -10.0}}), 120.0, 300.0);
  CHECK(s.lam_t == doctest::Approx(20.0));
  CHECK(s.lam_th == doctest::Approx(-50.0));
  CHECK(s.lam_h == doctest::Approx(125.0));
  CHECK(s.n == doctest::Approx(2.0));
  CHECK(s.cauchy_schwarz_ok());

  const auto empty = query_stats(make_ds({}), 120.0, 300.0);
  CHECK(empty.lam_t == 0.0);
  CHECK(empty.lam_th == 0.0);
  CHECK(empty.lam_h == 0.0);
  CHECK(empty.n == 0.0);

  const auto corner = query_stats(make_ds({{120.0, -300.0}}), 120.0, 300.0);
  CHECK(corner.lam_t == doctest::Approx(120.0 * 120.0));
  CHECK(corner.lam_th == doctest::Approx(-120.0 * 300.0));
  CHECK(corner.lam_h == doctest::Approx(300.0 * 300.0));

  CHECK_THROWS_AS(query_stats(make_ds({{121.0, -5.0}}), 120.0, 300.0), OutOfBoundsError);
  CHECK_THROWS_AS(query_stats(make_ds({{5.0, -301.0}}), 120.0, 300.0), OutOfBoundsError);
  CHECK_THROWS_AS(query_stats(make_ds({{5.0, 1.0}}), 120.0, 300.0), OutOfBoundsError);
}

TEST_CASE("l2 sensitivity") {
  SensitivityWeights w{1.0, 1.0, 1.0, 1.0, 60.0, 150.0};
  CHECK(l2_sensitivity(w) == doctest::Approx(std::sqrt(600210001.0)).epsilon(1e-12));
  CHECK(l2_sensitivity(w) == doctest::Approx(24499.18).epsilon(1e-6));

  SensitivityWeights count_only{1e-12, 1e-12, 1e-12, 1.0, 60.0, 150.0};
  CHECK(l2_sensitivity(count_only) == doctest::Approx(1.0).epsilon(1e-6));

  SensitivityWeights unit{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK(l2_sensitivity(unit) == doctest::Approx(2.0));

  // The balanced default normalizes every component to unit contribution.
  CHECK(l2_sensitivity(SensitivityWeights::balanced(120.0, 300.0)) == doctest::Approx(2.0));
}

TEST_CASE("gaussian sigma formula and budget domain") {
  const double sigma = gaussian_sigma(1.0, {0.5, 0.05});
  CHECK(sigma == doctest::Approx(std::sqrt(2.0 * std::log(25.0)) / 0.5).epsilon(1e-14));
  CHECK(sigma == doctest::Approx(5.074545).epsilon(1e-6));

  CHECK(gaussian_sigma(2.0, {0.5, 0.05}) == doctest::Approx(2.0 * sigma).epsilon(1e-12));

  CHECK_THROWS_AS(gaussian_sigma(1.0, {1.0, 0.05}), BudgetOutOfRangeError);
  CHECK_THROWS_AS(gaussian_sigma(1.0, {0.5, 1.0}), BudgetOutOfRangeError);
  CHECK_THROWS_AS(gaussian_sigma(1.0, {-0.1, 0.05}), BudgetOutOfRangeError);
}

TEST_CASE("gaussian sigma monotone in eps and delta") {
  double prev = 1e300;
  for (double eps = 0.05; eps < 1.0; eps += 0.05) {
    const double s = gaussian_sigma(1.0, {eps, 0.05});
    CHECK(s < prev);
    prev = s;
  }
  prev = 1e300;
  for (double delta = 0.01; delta < 1.0; delta += 0.05) {
    const double s = gaussian_sigma(1.0, {0.5, delta});
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("perturb_stats: vanishing sensitivity leaves stats unchanged") {
  QueryStats s{20.0, -50.0, 125.0, 2.0};
  SensitivityWeights w{1e-30, 1e-30, 1e-30, 1e-30, 1.0, 1.0};
  const auto out = perturb_stats(s, w, {0.5, 0.05}, 42);
  CHECK(out.lam_t == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(out.lam_th == doctest::Approx(-50.0).epsilon(1e-12));
  CHECK(out.lam_h == doctest::Approx(125.0).epsilon(1e-12));
  CHECK(out.n == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("perturb_stats: deterministic given seed") {
  QueryStats s{20.0, -50.0, 125.0, 2.0};
  SensitivityWeights w{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  const auto a = perturb_stats(s, w, {0.5, 0.05}, 7);
  const auto b = perturb_stats(s, w, {0.5, 0.05}, 7);
  CHECK(a.lam_t == b.lam_t);
  CHECK(a.lam_th == b.lam_th);
  CHECK(a.lam_h == b.lam_h);
  CHECK(a.n == b.n);
  const auto c = perturb_stats(s, w, {0.5, 0.05}, 8);
  CHECK(a.lam_t != c.lam_t);
}

TEST_CASE("perturb_stats: moments match the mechanism (reduced replicate count)") {
  QueryStats s{20.0, -50.0, 125.0, 2.0};
  SensitivityWeights w{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  PrivacyBudget pb{0.5, 0.05};
  const double sigma_f = gaussian_sigma(l2_sensitivity(w), pb);
  const double sd = sigma_f * 0.5;  // four equal shares

  const int reps = 20000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < reps; ++i) {
    const auto out = perturb_stats(s, w, pb, Rng::derive(505, static_cast<std::uint64_t>(i)));
    const double noise = out.lam_t - s.lam_t;
    mean += noise;
    m2 += noise * noise;
  }
  mean /= reps;
  const double var = m2 / reps - mean * mean;
  CHECK(std::abs(mean) < 4.0 * sd / std::sqrt(static_cast<double>(reps)));
  CHECK(var == doctest::Approx(sd * sd).epsilon(0.05));
}

TEST_CASE("slope distribution") {
  // Noiseless stats on the exact line h = -2.5 t.
  QueryStats line{20.0, -50.0, 125.0, 2.0};
  const auto exact = slope_distribution(line, 20.0, {0.0, 0.0, 0.0, 0.0});
  CHECK(exact.mean == doctest::Approx(-2.5));
  CHECK(exact.variance == doctest::Approx(0.0));

  const auto d = slope_distribution(line, 20.0, {2.0, 1.0, 0.0, 0.0});
  CHECK(d.mean == doctest::Approx(-2.5));
  CHECK(d.variance == doctest::Approx((1.0 + 6.25 * 4.0) / 400.0).epsilon(1e-12));
  CHECK(d.variance == doctest::Approx(0.065).epsilon(1e-12));

  QueryStats bad{-1.0, -50.0, 125.0, 2.0};
  CHECK_THROWS_AS(slope_distribution(bad, 20.0, {1.0, 1.0, 0.0, 0.0}), DegenerateStatsError);
}

TEST_CASE("reconstruct_foq: collinear stats give exactly collinear points") {
  // Stats of many points on h = -2 t.
  QueryStats s{5000.0, -10000.0, 20000.0, 400.0};
  const auto rec = reconstruct_foq(s, 400, 40.0, 120.0, 300.0, 99);
  CHECK_FALSE(rec.degenerate);
  CHECK(rec.data.points.size() == 400);
  for (const auto& p : rec.data.points) {
    CHECK(p.h == doctest::Approx(-2.0 * p.t).epsilon(1e-9));
    CHECK(p.t >= 0.0);
    CHECK(p.t <= 40.0);
  }
}

TEST_CASE("reconstruct_foq: determinism and clamps") {
  QueryStats s{5000.0, -10000.0, 20249.75, 1000.0};
  const auto a = reconstruct_foq(s, 1000, 40.0, 120.0, 300.0, 5);
  const auto b = reconstruct_foq(s, 1000, 40.0, 120.0, 300.0, 5);
  REQUIRE(a.data.points.size() == b.data.points.size());
  for (std::size_t i = 0; i < a.data.points.size(); ++i) {
    CHECK(a.data.points[i].t == b.data.points[i].t);
    CHECK(a.data.points[i].h == b.data.points[i].h);
  }

  // Count clamped to two from below, flagged.
  QueryStats tiny{100.0, -200.0, 400.0, 0.4};
  const auto low = reconstruct_foq(tiny, 5, 40.0, 120.0, 300.0, 5);
  CHECK(low.degenerate);
  CHECK(low.data.points.size() == 2);

  // Count clamped to 10x the true count from above, flagged.
  QueryStats big{100.0, -200.0, 400.0, 1000.0};
  const auto high = reconstruct_foq(big, 5, 40.0, 120.0, 300.0, 5);
  CHECK(high.degenerate);
  CHECK(high.data.points.size() == 50);

  // Negative perturbed variance clamps to zero with a flag.
  QueryStats negvar{5000.0, -10000.0, 15000.0, 100.0};
  const auto flagged = reconstruct_foq(negvar, 100, 40.0, 120.0, 300.0, 5);
  CHECK(flagged.degenerate);
  CHECK(flagged.resid_var == 0.0);

  QueryStats badlam{-5.0, -10000.0, 20000.0, 100.0};
  CHECK_THROWS_AS(reconstruct_foq(badlam, 100, 40.0, 120.0, 300.0, 5), DegenerateStatsError);
}

TEST_CASE("reconstruct_foq: regression on own output recovers the slope") {
  QueryStats s{5000.0, -10000.0, 20249.75, 1000.0};  // slope -2, resid var 0.25
  const auto rec = reconstruct_foq(s, 1000, 40.0, 120.0, 300.0, 321);
  REQUIRE(rec.data.points.size() == 1000);
  double lam_t = 0.0, lam_th = 0.0;
  for (const auto& p : rec.data.points) {
    lam_t += p.t * p.t;
    lam_th += p.t * p.h;
  }
  const double fitted = lam_th / lam_t;
  CHECK(std::abs(fitted - rec.slope) <= 2.0 * std::sqrt(rec.resid_var / lam_t));
}

TEST_CASE("reconstruction is post-processing: only statistics flow through") {
  // Two different raw datasets with identical sufficient statistics must give
  // identical synthetic output for the same seed.
  const auto d1 = make_ds({{1.0, -1.0}, {3.0, -3.0}});
  const auto d2 = make_ds({{std::sqrt(5.0), -std::sqrt(5.0)}, {std::sqrt(5.0), -std::sqrt(5.0)}});
  const auto s1 = query_stats(d1, 120.0, 300.0);
  const auto s2 = query_stats(d2, 120.0, 300.0);
  REQUIRE(s1.lam_t == doctest::Approx(s2.lam_t).epsilon(1e-12));
  REQUIRE(s1.lam_th == doctest::Approx(s2.lam_th).epsilon(1e-12));
  REQUIRE(s1.lam_h == doctest::Approx(s2.lam_h).epsilon(1e-12));
  const auto r1 = reconstruct_foq(s1, 2, 10.0, 120.0, 300.0, 11);
  const auto r2 = reconstruct_foq(s2, 2, 10.0, 120.0, 300.0, 11);
  REQUIRE(r1.data.points.size() == r2.data.points.size());
  for (std::size_t i = 0; i < r1.data.points.size(); ++i) {
    CHECK(r1.data.points[i].t == doctest::Approx(r2.data.points[i].t).epsilon(1e-12));
    CHECK(r1.data.points[i].h == doctest::Approx(r2.data.points[i].h).epsilon(1e-12));
  }
}

TEST_CASE("trajectory to count budget conversion") {
  const auto id = traj_to_count_budget(0.3, 0.02, 1);
  CHECK(id.first == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(id.second == doctest::Approx(0.02).epsilon(1e-15));

  const auto b2 = traj_to_count_budget(0.5, 0.01, 2);
  CHECK(b2.first == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b2.second == doctest::Approx(0.01 * (1.0 + std::exp(0.5))).epsilon(1e-15));
  CHECK(b2.second == doctest::Approx(0.026487212707).epsilon(1e-9));

  const auto b3 = traj_to_count_budget(0.5, 0.01, 3);
  CHECK(b3.first == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(b3.second ==
        doctest::Approx(0.01 * (1.0 + std::exp(0.5) + std::exp(1.0))).epsilon(1e-15));
  CHECK(b3.second == doctest::Approx(0.053670030991).epsilon(1e-9));

  // The theorem-statement variant includes the e^{b eps} term as well.
  const auto loose = traj_to_count_budget(0.5, 0.01, 2, true);
  CHECK(loose.second ==
        doctest::Approx(0.01 * (1.0 + std::exp(0.5) + std::exp(1.0))).epsilon(1e-15));
}

TEST_CASE("count-level adjacency decomposes into trajectory-level steps") {
  // Removing b points one at a time yields a chain whose consecutive members
  // differ by exactly one point and whose ends differ by exactly b.
  std::multiset<double> current;
  for (int i = 0; i < 10; ++i) current.insert(1.0 + i);
  const auto start = current;
  const int b = 4;
  std::multiset<double> prev = current;
  for (int step = 0; step < b; ++step) {
    auto next = prev;
    next.erase(next.find(*next.begin()));
    CHECK(prev.size() - next.size() == 1);
    prev = next;
  }
  CHECK(start.size() - prev.size() == static_cast<std::size_t>(b));
}

TEST_CASE("case-2 extended query, perturbation, reconstruction") {
  // Points on h = -3 t - 4 over t in {1, 2, 3, 4}.
  std::vector<FoQPoint> pts;
  for (int i = 1; i <= 4; ++i) {
    pts.push_back({static_cast<double>(i), -3.0 * i - 4.0});
  }
  const auto s = query_stats_case2(make_ds(pts), 120.0, 300.0);
  CHECK(s.sum_t == doctest::Approx(10.0));
  CHECK(s.sum_h == doctest::Approx(-46.0));
  CHECK(s.sum_t2 == doctest::Approx(30.0));
  CHECK(s.n == doctest::Approx(4.0));

  const auto rec = reconstruct_foq_case2(s, 4, 1.0, 4.0, 120.0, 300.0, 3);
  CHECK(rec.slope == doctest::Approx(-3.0).epsilon(1e-9));
  for (const auto& p : rec.data.points) {
    CHECK(p.h == doctest::Approx(-3.0 * p.t - 4.0).epsilon(1e-9));
  }

  SensitivityWeights2 w = SensitivityWeights2::balanced(120.0, 300.0);
  CHECK(l2_sensitivity_case2(w) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
  const auto a = perturb_stats_case2(s, w, {0.5, 0.05}, 9);
  const auto b = perturb_stats_case2(s, w, {0.5, 0.05}, 9);
  CHECK(a.sum_th == b.sum_th);
  CHECK(case2_slope_variance(s, w, {0.5, 0.05}) > 0.0);
}

TEST_CASE("JSON round trips") {
  QueryStats s{20.125, -50.0625, 125.25, 3.0};
  const auto s2 = query_stats_from_json(to_json(s));
  CHECK(s2.lam_t == s.lam_t);
  CHECK(s2.lam_th == s.lam_th);
  CHECK(s2.lam_h == s.lam_h);
  CHECK(s2.n == s.n);

  FoQDataset ds;
  ds.movement_id = 4;
  ds.owner_id = 2;
  Rng rng(15);
  for (int i = 0; i < 20; ++i) {
    ds.points.push_back({40.0 * rng.next_double(), -150.0 * rng.next_double()});
  }
  const auto ds2 = dataset_from_json(to_json(ds));
  CHECK(ds2.movement_id == 4);
  CHECK(ds2.owner_id == 2);
  REQUIRE(ds2.points.size() == ds.points.size());
  for (std::size_t i = 0; i < ds.points.size(); ++i) {
    CHECK(ds2.points[i].t == ds.points[i].t);
    CHECK(ds2.points[i].h == ds.points[i].h);
  }
}
