#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "collab/rng.hpp"
#include "collab/signal_opt.hpp"
#include "collab/simplex.hpp"

#include "band_oracle.hpp"

using namespace collab;
using namespace collab::signalopt;

namespace {

// Arterial with one outbound-through, one inbound-through (phase 0) and one
// side movement (phase 1) per intersection.
ArterialGeometry make_geometry(int intersections, double art_cap = 1.0, double side_cap = 1.0) {
  ArterialGeometry g;
  for (int i = 0; i < intersections; ++i) {
    g.intersections.push_back({12.0, 2, 0.0, 0.0, 0.0});
    g.movements.push_back({i, 0, Direction::kOutboundThrough, art_cap});
    g.movements.push_back({i, 0, Direction::kInboundThrough, art_cap});
    g.movements.push_back({i, 1, Direction::kSide, side_cap});
  }
  for (int i = 0; i + 1 < intersections; ++i) {
    g.travel_out_s.push_back(80.0);
    g.travel_in_s.push_back(80.0);
  }
  return g;
}

std::vector<double> demands3(int intersections, double out, double in, double side) {
  std::vector<double> q;
  for (int i = 0; i < intersections; ++i) {
    q.push_back(out);
    q.push_back(in);
    q.push_back(side);
  }
  return q;
}

}  // namespace

TEST_CASE("simplex: known optima") {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6 -> (1.6, 1.2), value 2.8.
  std::vector<lp::Constraint> cons = {{{1.0, 2.0}, lp::Relation::kLe, 4.0},
                                      {{3.0, 1.0}, lp::Relation::kLe, 6.0}};
  const auto sol = lp::maximize({1.0, 1.0}, cons);
  REQUIRE(sol.feasible);
  CHECK(sol.x[0] == doctest::Approx(1.6).epsilon(1e-9));
  CHECK(sol.x[1] == doctest::Approx(1.2).epsilon(1e-9));
  CHECK(sol.objective == doctest::Approx(2.8).epsilon(1e-9));

  // Equality + inequality mix.
  std::vector<lp::Constraint> mixed = {{{1.0, 1.0}, lp::Relation::kEq, 3.0},
                                       {{1.0, 0.0}, lp::Relation::kLe, 2.0}};
  const auto sol2 = lp::maximize({2.0, 1.0}, mixed);
  REQUIRE(sol2.feasible);
  CHECK(sol2.x[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol2.x[1] == doctest::Approx(1.0).epsilon(1e-9));

  // Infeasible system.
  std::vector<lp::Constraint> bad = {{{1.0}, lp::Relation::kLe, 1.0},
                                     {{1.0}, lp::Relation::kGe, 2.0}};
  CHECK_FALSE(lp::maximize({1.0}, bad).feasible);
}

TEST_CASE("simplex: random instances against basic-solution enumeration") {
  // Oracle: enumerate all basic solutions of {Ax <= b, x >= 0} by solving
  // every n x n subsystem of active constraints and keeping feasible points.
  Rng rng(9090);
  for (int inst = 0; inst < 40; ++inst) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 2);  // 2 or 3 variables
    const int m = 3 + static_cast<int>(rng.next_u64() % 3);
    std::vector<double> objective(static_cast<std::size_t>(n));
    for (auto& c : objective) c = 2.0 * rng.next_double() - 0.5;
    std::vector<lp::Constraint> cons;
    for (int i = 0; i < m; ++i) {
      lp::Constraint c;
      c.coeffs.resize(static_cast<std::size_t>(n));
      for (auto& a : c.coeffs) a = 2.0 * rng.next_double() - 0.5;
      c.rel = lp::Relation::kLe;
      c.rhs = 0.5 + 2.0 * rng.next_double();
      cons.push_back(std::move(c));
    }
    // Box the region so the oracle is finite and the LP bounded.
    for (int j = 0; j < n; ++j) {
      lp::Constraint box;
      box.coeffs.assign(static_cast<std::size_t>(n), 0.0);
      box.coeffs[static_cast<std::size_t>(j)] = 1.0;
      box.rel = lp::Relation::kLe;
      box.rhs = 3.0;
      cons.push_back(std::move(box));
    }

    // All rows including the implicit x_j >= 0 planes.
    struct Plane {
      std::vector<double> a;
      double b;
    };
    std::vector<Plane> planes;
    for (const auto& c : cons) planes.push_back({c.coeffs, c.rhs});
    for (int j = 0; j < n; ++j) {
      Plane p;
      p.a.assign(static_cast<std::size_t>(n), 0.0);
      p.a[static_cast<std::size_t>(j)] = 1.0;
      p.b = 0.0;
      planes.push_back(std::move(p));
    }

    double oracle = -1e300;
    const int total = static_cast<int>(planes.size());
    auto feasible = [&](const std::vector<double>& x) {
      for (const auto& c : cons) {
        double lhs = 0.0;
        for (int j = 0; j < n; ++j) lhs += c.coeffs[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
        if (lhs > c.rhs + 1e-7) return false;
      }
      for (double v : x) {
        if (v < -1e-7) return false;
      }
      return true;
    };
    // Iterate n-subsets of planes.
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int a = 0; a < total; ++a) {
      for (int b = a + 1; b < (n >= 2 ? total : a + 2); ++b) {
        for (int c = (n == 3 ? b + 1 : total); n == 2 ? c == total : c < total; ++c) {
          idx[0] = a;
          if (n >= 2) idx[1] = b;
          if (n == 3) idx[2] = static_cast<int>(c);
          // Solve the n x n system by Gaussian elimination.
          std::vector<std::vector<double>> mat(static_cast<std::size_t>(n),
                                               std::vector<double>(static_cast<std::size_t>(n + 1)));
          for (int r = 0; r < n; ++r) {
            for (int col = 0; col < n; ++col) {
              mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] =
                  planes[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])].a[static_cast<std::size_t>(col)];
            }
            mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(n)] =
                planes[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])].b;
          }
          bool singular = false;
          for (int col = 0; col < n && !singular; ++col) {
            int pivot = -1;
            double best = 1e-9;
            for (int r = col; r < n; ++r) {
              if (std::abs(mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) > best) {
                best = std::abs(mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]);
                pivot = r;
              }
            }
            if (pivot < 0) {
              singular = true;
              break;
            }
            std::swap(mat[static_cast<std::size_t>(col)], mat[static_cast<std::size_t>(pivot)]);
            for (int r = 0; r < n; ++r) {
              if (r == col) continue;
              const double f = mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] /
                               mat[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
              for (int cc = col; cc <= n; ++cc) {
                mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(cc)] -=
                    f * mat[static_cast<std::size_t>(col)][static_cast<std::size_t>(cc)];
              }
            }
          }
          if (singular) continue;
          std::vector<double> x(static_cast<std::size_t>(n));
          for (int r = 0; r < n; ++r) {
            x[static_cast<std::size_t>(r)] = mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(n)] /
                                             mat[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
          }
          if (!feasible(x)) continue;
          double val = 0.0;
          for (int j = 0; j < n; ++j) val += objective[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
          oracle = std::max(oracle, val);
        }
      }
    }

    const auto sol = lp::maximize(objective, cons);
    REQUIRE(sol.feasible);  // origin is always feasible here
    CHECK(sol.objective == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("webster cycle: hand case, clamp, oversaturation") {
  auto geom = make_geometry(1);
  // Phase ratios 0.3 + 0.3 => Y = 0.6.
  const auto q = demands3(1, 0.3, 0.25, 0.3);
  CHECK(webster_cycle(q, geom) == doctest::Approx(57.5).epsilon(1e-12));

  // Y = 0.93 would need 328.6 s; the cycle clamps at 180.
  const auto heavy = demands3(1, 0.8, 0.7, 0.13);
  CHECK(webster_cycle(heavy, geom) == doctest::Approx(180.0));

  CHECK_THROWS_AS(webster_cycle(demands3(1, 0.9, 0.2, 0.2), geom), OversaturatedError);
}

TEST_CASE("webster cycle: non-decreasing in every demand before clamping") {
  auto geom = make_geometry(2);
  geom.cycle_min_s = 1.0;
  geom.cycle_max_s = 1e6;
  std::vector<double> q = demands3(2, 0.3, 0.25, 0.2);
  const double base = webster_cycle(q, geom);
  for (std::size_t i = 0; i < q.size(); ++i) {
    auto bumped = q;
    bumped[i] += 0.05;
    CHECK(webster_cycle(bumped, geom) >= base - 1e-12);
  }
}

TEST_CASE("webster splits") {
  auto geom = make_geometry(1);
  // Equal phase ratios, C = 57.5, L = 12: each phase gets 22.75 s.
  const auto equal = webster_splits(demands3(1, 0.3, 0.25, 0.3), geom, 57.5);
  CHECK(equal[0][0] == doctest::Approx(22.75).epsilon(1e-12));
  CHECK(equal[0][1] == doctest::Approx(22.75).epsilon(1e-12));

  // Ratios (0.4, 0.2) over the 48 s effective green: (32, 16).
  const auto prop = webster_splits(demands3(1, 0.4, 0.1, 0.2), geom, 60.0);
  CHECK(prop[0][0] == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(prop[0][1] == doctest::Approx(16.0).epsilon(1e-12));

  // A near-zero phase is lifted to the minimum green.
  const auto floored = webster_splits(demands3(1, 0.6, 0.1, 1e-7), geom, 60.0);
  CHECK(floored[0][1] == doctest::Approx(5.0));
  CHECK(floored[0][0] == doctest::Approx(43.0));

  // Splits always fill the effective green exactly.
  for (const auto& splits : {equal, prop, floored}) {
    double total = 0.0;
    for (double g : splits[0]) total += g;
    CHECK(total == doctest::Approx(splits == equal ? 45.5 : 48.0).epsilon(1e-9));
  }

  auto cramped = make_geometry(1);
  cramped.intersections[0].lost_time_s = 16.0;
  CHECK_THROWS_AS(webster_splits(demands3(1, 0.3, 0.2, 0.2), cramped, 24.0),
                  InfeasibleMinGreenError);
}

TEST_CASE("maxband: single intersection") {
  auto geom = make_geometry(1);
  const auto sol = maxband_solve(geom, {0.8, 0.5, 1.0}, {0.4}, {0.3}, 60.0);
  REQUIRE(sol.feasible);
  CHECK(sol.b_out == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(sol.b_in == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("maxband: two identical intersections, integer travel time") {
  auto geom = make_geometry(2);
  geom.travel_out_s = {120.0};
  geom.travel_in_s = {120.0};
  const auto sol = maxband_solve(geom, {1.0, 1.0, 1.0}, {0.5, 0.5}, {0.5, 0.5}, 60.0);
  REQUIRE(sol.feasible);
  CHECK(sol.b_out == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.b_in == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("maxband: matches the reduced-form oracle on random instances") {
  Rng rng(321);
  for (int inst = 0; inst < 6; ++inst) {
    const int count = 2 + static_cast<int>(rng.next_u64() % 2);
    auto geom = make_geometry(count);
    geom.travel_out_s.clear();
    geom.travel_in_s.clear();
    for (int i = 0; i + 1 < count; ++i) {
      geom.travel_out_s.push_back(30.0 + 170.0 * rng.next_double());
      geom.travel_in_s.push_back(30.0 + 170.0 * rng.next_double());
    }
    for (auto& node : geom.intersections) {
      node.adv_out_cycles = 0.2 * rng.next_double();
      node.adv_in_cycles = 0.2 * rng.next_double();
      node.delta_ref_cycles = 0.1 * rng.next_double();
    }
    const double cycle = 60.0 + 60.0 * rng.next_double();
    std::vector<double> red_out(static_cast<std::size_t>(count)), red_in(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      red_out[static_cast<std::size_t>(i)] = 0.3 + 0.4 * rng.next_double();
      red_in[static_cast<std::size_t>(i)] = 0.3 + 0.4 * rng.next_double();
    }
    BandWeights weights{0.4 + 0.6 * rng.next_double(), 0.4 + 0.6 * rng.next_double(), 1.0};

    const auto sol = maxband_solve(geom, weights, red_out, red_in, cycle);
    const double oracle = collab::testing::band_oracle(geom, weights, red_out, red_in, cycle, 2e-3);
    if (sol.feasible) {
      CHECK(sol.objective >= oracle - 5e-3);
      CHECK(std::abs(sol.objective - oracle) <= 5e-3);
      double cap = 1e9;
      for (double r : red_out) cap = std::min(cap, 1.0 - r);
      CHECK(sol.b_out <= cap + 1e-9);
    } else {
      CHECK(oracle <= 5e-3);
    }
  }
}

TEST_CASE("offsets from band") {
  auto geom = make_geometry(2);
  geom.travel_out_s = {120.0};
  geom.travel_in_s = {120.0};
  BandSolution sol;
  sol.feasible = true;
  sol.zeta_out = {0.2, 0.2};
  sol.zeta_in = {0.0, 0.0};

  // Identical intersections, exactly two cycles of travel: zero offset.
  const auto zero = offsets_from_band(sol, geom, 60.0, {0.5, 0.5});
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == doctest::Approx(0.0).epsilon(1e-9));

  // Constant shift of all relative offsets cancels in the differencing.
  BandSolution shifted = sol;
  shifted.zeta_out = {0.35, 0.35};
  const auto shifted_offsets = offsets_from_band(shifted, geom, 60.0, {0.5, 0.5});
  CHECK(shifted_offsets[1] == doctest::Approx(zero[1]).epsilon(1e-9));

  // Hand-evaluated pair: (0.25 + 0.1 + 0.8) - (0.2 + 0.2) = 0.75 cycles.
  auto geom2 = make_geometry(2);
  geom2.travel_out_s = {0.8 * 60.0};
  geom2.travel_in_s = {0.8 * 60.0};
  BandSolution hand;
  hand.feasible = true;
  hand.zeta_out = {0.1, 0.2};
  hand.zeta_in = {0.0, 0.0};
  const auto offs = offsets_from_band(hand, geom2, 60.0, {0.5, 0.4});
  CHECK(offs[1] == doctest::Approx(0.75 * 60.0).epsilon(1e-9));
}

TEST_CASE("evaluate_delay: uniform limit, band clamp, monotonicity") {
  auto geom = make_geometry(1);
  SignalPlan plan;
  plan.cycle_s = 60.0;
  plan.greens_s = {{24.0, 24.0}};
  plan.offsets_s = {0.0};
  BandSolution no_band;
  no_band.zeta_out = {0.0};
  no_band.zeta_in = {0.0};

  // Zero demand: unweighted mean of C/2 (1-g/C)^2 with PF = 1.
  const double gc = 24.0 / 60.0;
  const double uniform = 0.5 * 60.0 * (1.0 - gc) * (1.0 - gc);
  CHECK(evaluate_delay(plan, {0.0, 0.0, 0.0}, geom, no_band) ==
        doctest::Approx(uniform).epsilon(1e-12));

  // A band covering the whole green clamps PF at 0.15 for through movements.
  BandSolution full = no_band;
  full.feasible = true;
  full.b_out = gc;
  full.b_in = gc;
  const auto q = demands3(1, 0.2, 0.15, 0.1);
  const double with_band = evaluate_delay(plan, q, geom, full);
  const double without = evaluate_delay(plan, q, geom, no_band);
  CHECK(with_band < without);

  // Doubling bandwidth never increases delay.
  double prev = 1e300;
  for (double b = 0.0; b <= gc + 1e-9; b += gc / 8.0) {
    BandSolution band = no_band;
    band.feasible = true;
    band.b_out = b;
    band.b_in = b;
    const double d = evaluate_delay(plan, q, geom, band);
    CHECK(d <= prev + 1e-12);
    prev = d;
  }

  // Non-decreasing in every true flow at a fixed plan.
  const double base = evaluate_delay(plan, q, geom, no_band);
  for (std::size_t i = 0; i < q.size(); ++i) {
    auto bumped = q;
    bumped[i] += 0.05;
    CHECK(evaluate_delay(plan, bumped, geom, no_band) >= base - 1e-12);
  }
}

TEST_CASE("build_plan produces a consistent plan") {
  auto geom = make_geometry(3);
  geom.travel_out_s = {82.0, 129.0};
  geom.travel_in_s = {82.0, 129.0};
  const auto q = demands3(3, 0.5, 0.3, 0.08);
  const auto pb = build_plan(q, geom);
  CHECK(pb.plan.cycle_s >= geom.cycle_min_s);
  CHECK(pb.plan.cycle_s <= geom.cycle_max_s);
  for (int i = 0; i < 3; ++i) {
    double total = geom.intersections[static_cast<std::size_t>(i)].lost_time_s;
    for (double g : pb.plan.greens_s[static_cast<std::size_t>(i)]) {
      total += g;
      CHECK(g > 0.0);
    }
    CHECK(total == doctest::Approx(pb.plan.cycle_s).epsilon(1e-9));
    CHECK(pb.plan.offsets_s[static_cast<std::size_t>(i)] >= 0.0);
    CHECK(pb.plan.offsets_s[static_cast<std::size_t>(i)] < pb.plan.cycle_s);
  }
  CHECK(pb.plan.offsets_s[0] == 0.0);
}
