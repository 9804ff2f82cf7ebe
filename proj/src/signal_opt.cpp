#include "collab/signal_opt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "collab/simplex.hpp"

namespace collab::signalopt {

namespace {

// Phase critical ratios y_p = max over movements in phase of q_m / q_m^c.
std::vector<std::vector<double>> phase_ratios(const std::vector<double>& demand_vps,
                                              const ArterialGeometry& geom) {
  const int count = geom.count();
  std::vector<std::vector<double>> ratios(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ratios[static_cast<std::size_t>(i)].assign(
        static_cast<std::size_t>(geom.intersections[static_cast<std::size_t>(i)].num_phases), 0.0);
  }
  if (demand_vps.size() != geom.movements.size()) {
    throw Error("demand vector must align with the movement list");
  }
  for (std::size_t m = 0; m < geom.movements.size(); ++m) {
    const Movement& mv = geom.movements[m];
    double& slot = ratios[static_cast<std::size_t>(mv.intersection)][static_cast<std::size_t>(mv.phase)];
    slot = std::max(slot, demand_vps[m] / mv.capacity_vps);
  }
  return ratios;
}

int through_phase(const ArterialGeometry& geom, int intersection) {
  for (const Movement& mv : geom.movements) {
    if (mv.intersection == intersection && mv.direction == Direction::kOutboundThrough) {
      return mv.phase;
    }
  }
  throw Error("intersection has no outbound through movement");
}

}  // namespace

std::vector<double> critical_ratio_sums(const std::vector<double>& demand_vps,
                                        const ArterialGeometry& geom) {
  const auto ratios = phase_ratios(demand_vps, geom);
  std::vector<double> sums(ratios.size(), 0.0);
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    for (double y : ratios[i]) sums[i] += y;
  }
  return sums;
}

double webster_cycle(const std::vector<double>& demand_vps, const ArterialGeometry& geom) {
  const auto sums = critical_ratio_sums(demand_vps, geom);
  double cycle = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (sums[i] >= 1.0 - 1e-12) {
      std::ostringstream msg;
      msg << "intersection " << i << " oversaturated: critical ratio sum Y=" << sums[i];
      throw OversaturatedError(msg.str());
    }
    const double li = geom.intersections[i].lost_time_s;
    cycle = std::max(cycle, (1.5 * li + 5.0) / (1.0 - sums[i]));
  }
  return std::clamp(cycle, geom.cycle_min_s, geom.cycle_max_s);
}

std::vector<std::vector<double>> webster_splits(const std::vector<double>& demand_vps,
                                                const ArterialGeometry& geom, double cycle_s) {
  const auto ratios = phase_ratios(demand_vps, geom);
  std::vector<std::vector<double>> greens(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double effective = cycle_s - geom.intersections[i].lost_time_s;
    const std::size_t phases = ratios[i].size();
    if (geom.min_green_s * static_cast<double>(phases) > effective + 1e-12) {
      std::ostringstream msg;
      msg << "intersection " << i << ": " << phases << " minimum greens of " << geom.min_green_s
          << " s do not fit in the effective green " << effective << " s";
      throw InfeasibleMinGreenError(msg.str());
    }
    double y_total = 0.0;
    for (double y : ratios[i]) y_total += y;
    if (!(y_total > 0.0)) throw Error("all critical ratios are zero");

    // Proportional allocation, then lift deficits to the floor and
    // re-share the remainder among the unpinned phases.
    std::vector<double>& g = greens[i];
    g.assign(phases, 0.0);
    std::vector<bool> pinned(phases, false);
    double budget = effective;
    double weight = y_total;
    for (int round = 0; round < static_cast<int>(phases); ++round) {
      bool changed = false;
      for (std::size_t p = 0; p < phases; ++p) {
        if (pinned[p]) continue;
        g[p] = budget * ratios[i][p] / weight;
        if (g[p] < geom.min_green_s - 1e-12) {
          g[p] = geom.min_green_s;
          pinned[p] = true;
          budget -= geom.min_green_s;
          weight -= ratios[i][p];
          changed = true;
          break;
        }
      }
      if (!changed) break;
    }
    if (weight <= 0.0) {
      // Everything pinned: hand the leftover to the largest-ratio phase.
      double leftover = effective;
      for (double v : g) leftover -= v;
      auto it = std::max_element(ratios[i].begin(), ratios[i].end());
      g[static_cast<std::size_t>(it - ratios[i].begin())] += leftover;
    }
  }
  return greens;
}

BandSolution maxband_solve(const ArterialGeometry& geom, const BandWeights& weights,
                           const std::vector<double>& red_out_cycles,
                           const std::vector<double>& red_in_cycles, double cycle_s) {
  const int count = geom.count();
  if (static_cast<int>(red_out_cycles.size()) != count ||
      static_cast<int>(red_in_cycles.size()) != count) {
    throw Error("red vectors must have one entry per intersection");
  }
  const double w_out = std::pow(std::max(weights.out_ratio, 1e-9), weights.alpha);
  const double w_in = std::pow(std::max(weights.in_ratio, 1e-9), weights.alpha);

  // Variables: [b, b_in, zeta_1..zeta_I, zetabar_1..zetabar_I].
  const int nvars = 2 + 2 * count;
  std::vector<double> objective(static_cast<std::size_t>(nvars), 0.0);
  objective[0] = w_out;
  objective[1] = w_in;

  std::vector<lp::Constraint> fixed;
  for (int i = 0; i < count; ++i) {
    lp::Constraint c1;
    c1.coeffs.assign(static_cast<std::size_t>(nvars), 0.0);
    c1.coeffs[0] = 1.0;
    c1.coeffs[static_cast<std::size_t>(2 + i)] = 1.0;
    c1.rel = lp::Relation::kLe;
    c1.rhs = 1.0 - red_out_cycles[static_cast<std::size_t>(i)];
    fixed.push_back(std::move(c1));

    lp::Constraint c2;
    c2.coeffs.assign(static_cast<std::size_t>(nvars), 0.0);
    c2.coeffs[1] = 1.0;
    c2.coeffs[static_cast<std::size_t>(2 + count + i)] = 1.0;
    c2.rel = lp::Relation::kLe;
    c2.rhs = 1.0 - red_in_cycles[static_cast<std::size_t>(i)];
    fixed.push_back(std::move(c2));
  }

  const int pairs = count - 1;
  std::vector<double> t_out(static_cast<std::size_t>(std::max(0, pairs)));
  std::vector<double> t_in(static_cast<std::size_t>(std::max(0, pairs)));
  std::vector<int> m_lo(static_cast<std::size_t>(std::max(0, pairs)));
  std::vector<int> m_hi(static_cast<std::size_t>(std::max(0, pairs)));
  for (int i = 0; i < pairs; ++i) {
    t_out[static_cast<std::size_t>(i)] = geom.travel_out_s[static_cast<std::size_t>(i)] / cycle_s;
    t_in[static_cast<std::size_t>(i)] = geom.travel_in_s[static_cast<std::size_t>(i)] / cycle_s;
    const double range = t_out[static_cast<std::size_t>(i)] + t_in[static_cast<std::size_t>(i)] + 2.0;
    m_hi[static_cast<std::size_t>(i)] = static_cast<int>(std::ceil(range)) + 2;
    m_lo[static_cast<std::size_t>(i)] = -m_hi[static_cast<std::size_t>(i)];
  }

  BandSolution best;
  best.zeta_out.assign(static_cast<std::size_t>(count), 0.0);
  best.zeta_in.assign(static_cast<std::size_t>(count), 0.0);
  best.loop_m.assign(static_cast<std::size_t>(std::max(0, pairs)), 0);

  std::vector<int> m(static_cast<std::size_t>(std::max(0, pairs)), 0);
  bool found = false;
  auto solve_current = [&]() {
    std::vector<lp::Constraint> cons = fixed;
    for (int i = 0; i < pairs; ++i) {
      const Intersection& a = geom.intersections[static_cast<std::size_t>(i)];
      const Intersection& b = geom.intersections[static_cast<std::size_t>(i + 1)];
      lp::Constraint eq;
      eq.coeffs.assign(static_cast<std::size_t>(nvars), 0.0);
      eq.coeffs[static_cast<std::size_t>(2 + i)] = 1.0;
      eq.coeffs[static_cast<std::size_t>(2 + count + i)] = 1.0;
      eq.coeffs[static_cast<std::size_t>(2 + i + 1)] = -1.0;
      eq.coeffs[static_cast<std::size_t>(2 + count + i + 1)] = -1.0;
      eq.rel = lp::Relation::kEq;
      eq.rhs = -0.5 * (red_out_cycles[static_cast<std::size_t>(i)] + red_in_cycles[static_cast<std::size_t>(i)]) +
               0.5 * (red_out_cycles[static_cast<std::size_t>(i + 1)] + red_in_cycles[static_cast<std::size_t>(i + 1)]) +
               a.adv_in_cycles + b.adv_out_cycles + static_cast<double>(m[static_cast<std::size_t>(i)]) -
               (t_out[static_cast<std::size_t>(i)] + t_in[static_cast<std::size_t>(i)]) - a.delta_ref_cycles +
               b.delta_ref_cycles;
      cons.push_back(std::move(eq));
    }
    const auto sol = lp::maximize(objective, cons);
    if (!sol.feasible) return;
    if (!found || sol.objective > best.objective + 1e-12) {
      found = true;
      best.objective = sol.objective;
      best.b_out = sol.x[0];
      best.b_in = sol.x[1];
      for (int i = 0; i < count; ++i) {
        best.zeta_out[static_cast<std::size_t>(i)] = sol.x[static_cast<std::size_t>(2 + i)];
        best.zeta_in[static_cast<std::size_t>(i)] = sol.x[static_cast<std::size_t>(2 + count + i)];
      }
      best.loop_m = m;
      best.feasible = true;
    }
  };

  if (pairs <= 0) {
    solve_current();
  } else {
    // Odometer over the loop-integer box.
    for (int i = 0; i < pairs; ++i) m[static_cast<std::size_t>(i)] = m_lo[static_cast<std::size_t>(i)];
    while (true) {
      solve_current();
      int pos = 0;
      while (pos < pairs) {
        if (++m[static_cast<std::size_t>(pos)] <= m_hi[static_cast<std::size_t>(pos)]) break;
        m[static_cast<std::size_t>(pos)] = m_lo[static_cast<std::size_t>(pos)];
        ++pos;
      }
      if (pos == pairs) break;
    }
  }

  if (!found) {
    best.b_out = 0.0;
    best.b_in = 0.0;
    best.objective = 0.0;
    best.feasible = false;
  }
  return best;
}

std::vector<double> offsets_from_band(const BandSolution& sol, const ArterialGeometry& geom,
                                      double cycle_s, const std::vector<double>& red_out_cycles) {
  const int count = geom.count();
  std::vector<double> offsets(static_cast<std::size_t>(count), 0.0);
  double absolute = 0.0;
  for (int i = 0; i + 1 < count; ++i) {
    const double t_cycles = geom.travel_out_s[static_cast<std::size_t>(i)] / cycle_s;
    double pair = (0.5 * red_out_cycles[static_cast<std::size_t>(i)] + sol.zeta_out[static_cast<std::size_t>(i)] +
                   t_cycles) -
                  (0.5 * red_out_cycles[static_cast<std::size_t>(i + 1)] +
                   sol.zeta_out[static_cast<std::size_t>(i + 1)]);
    pair -= std::floor(pair);  // wrap into [0, 1) cycles
    absolute += pair;
    absolute -= std::floor(absolute);
    offsets[static_cast<std::size_t>(i + 1)] = absolute * cycle_s;
  }
  return offsets;
}

double evaluate_delay(const SignalPlan& plan, const std::vector<double>& demand_vps,
                      const ArterialGeometry& geom, const BandSolution& band) {
  if (demand_vps.size() != geom.movements.size()) {
    throw Error("demand vector must align with the movement list");
  }
  const double cycle = plan.cycle_s;
  double weighted = 0.0, flow_total = 0.0, plain = 0.0;
  for (std::size_t m = 0; m < geom.movements.size(); ++m) {
    const Movement& mv = geom.movements[m];
    const double g =
        plan.greens_s[static_cast<std::size_t>(mv.intersection)][static_cast<std::size_t>(mv.phase)];
    const double gc = g / cycle;
    const double x = demand_vps[m] / (mv.capacity_vps * gc);
    const double x_capped = std::min(x, 0.98);
    double pf = 1.0;
    if (mv.direction == Direction::kOutboundThrough || mv.direction == Direction::kInboundThrough) {
      const double b_dir = mv.direction == Direction::kOutboundThrough ? band.b_out : band.b_in;
      pf = std::clamp(1.0 - b_dir / gc, 0.15, 1.0);
    }
    const double d = pf * 0.5 * cycle * (1.0 - gc) * (1.0 - gc) / (1.0 - x_capped * gc);
    weighted += demand_vps[m] * d;
    flow_total += demand_vps[m];
    plain += d;
  }
  if (flow_total <= 0.0) return plain / static_cast<double>(geom.movements.size());
  return weighted / flow_total;
}

PlanWithBand build_plan(const std::vector<double>& demand_vps, const ArterialGeometry& geom) {
  PlanWithBand out;
  out.plan.cycle_s = webster_cycle(demand_vps, geom);
  out.plan.greens_s = webster_splits(demand_vps, geom, out.plan.cycle_s);

  const int count = geom.count();
  std::vector<double> red_out(static_cast<std::size_t>(count));
  std::vector<double> red_in(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int phase = through_phase(geom, i);
    const double g = out.plan.greens_s[static_cast<std::size_t>(i)][static_cast<std::size_t>(phase)];
    red_out[static_cast<std::size_t>(i)] = 1.0 - g / out.plan.cycle_s;
    red_in[static_cast<std::size_t>(i)] = red_out[static_cast<std::size_t>(i)];
  }

  BandWeights weights;
  weights.alpha = geom.band_alpha;
  weights.out_ratio = 0.0;
  weights.in_ratio = 0.0;
  for (std::size_t m = 0; m < geom.movements.size(); ++m) {
    const Movement& mv = geom.movements[m];
    const double ratio = demand_vps[m] / mv.capacity_vps;
    if (mv.direction == Direction::kOutboundThrough) {
      weights.out_ratio = std::max(weights.out_ratio, ratio);
    } else if (mv.direction == Direction::kInboundThrough) {
      weights.in_ratio = std::max(weights.in_ratio, ratio);
    }
  }

  out.band = maxband_solve(geom, weights, red_out, red_in, out.plan.cycle_s);
  out.plan.offsets_s = offsets_from_band(out.band, geom, out.plan.cycle_s, red_out);
  return out;
}

std::string to_json(const SignalPlan& plan) {
  nlohmann::ordered_json j;
  j["cycle_s"] = plan.cycle_s;
  j["greens_s"] = plan.greens_s;
  j["offsets_s"] = plan.offsets_s;
  return j.dump();
}

}  // namespace collab::signalopt
