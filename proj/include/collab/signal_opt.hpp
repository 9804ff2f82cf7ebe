#pragma once

#include <string>
#include <vector>

#include "collab/errors.hpp"

namespace collab::signalopt {

enum class Direction { kOutboundThrough, kInboundThrough, kSide };

struct Movement {
  int intersection = 0;
  int phase = 0;
  Direction direction = Direction::kSide;
  double capacity_vps = 0.5;  // saturation flow of the movement
};

struct Intersection {
  double lost_time_s = 12.0;
  int num_phases = 2;
  double adv_out_cycles = 0.0;   // queue clearance advance e_i
  double adv_in_cycles = 0.0;    // e-bar_i
  double delta_ref_cycles = 0.0; // offset between the red centers, Delta_i
};

struct ArterialGeometry {
  std::vector<Intersection> intersections;
  std::vector<Movement> movements;
  std::vector<double> travel_out_s;  // internode travel times, I-1 entries
  std::vector<double> travel_in_s;
  double cycle_min_s = 40.0;
  double cycle_max_s = 180.0;
  double min_green_s = 5.0;
  double band_alpha = 1.0;

  int count() const { return static_cast<int>(intersections.size()); }
};

struct SignalPlan {
  double cycle_s = 0.0;
  std::vector<std::vector<double>> greens_s;  // [intersection][phase]
  std::vector<double> offsets_s;              // absolute per intersection, first is 0
};

struct BandSolution {
  double b_out = 0.0;  // bandwidths in cycles
  double b_in = 0.0;
  std::vector<double> zeta_out;
  std::vector<double> zeta_in;
  std::vector<int> loop_m;
  double objective = 0.0;
  bool feasible = false;  // false means the zero-band fallback was returned
};

struct BandWeights {
  double out_ratio = 1.0;  // critical flow ratio of the outbound movements
  double in_ratio = 1.0;
  double alpha = 1.0;
};

// Webster cycle: C = max_i (1.5 L_i + 5) / (1 - Y_i), clamped to the
// configured bounds. Throws OversaturatedError naming the intersection when
// some Y_i >= 1.
double webster_cycle(const std::vector<double>& demand_vps, const ArterialGeometry& geom);

// Per-phase greens proportional to the phase critical ratios over the
// effective green C - L_i, with the minimum-green floor applied and the
// remainder renormalized.
std::vector<std::vector<double>> webster_splits(const std::vector<double>& demand_vps,
                                                const ArterialGeometry& geom, double cycle_s);

// Critical-ratio sum per intersection (diagnostic used by callers to guard
// oversaturated estimates before planning).
std::vector<double> critical_ratio_sums(const std::vector<double>& demand_vps,
                                        const ArterialGeometry& geom);

// Band optimization: globally optimal over the loop-integer box, each fixed
// choice solved as a linear program. Returns the zero-band solution with
// feasible=false when no integer combination admits a band.
BandSolution maxband_solve(const ArterialGeometry& geom, const BandWeights& weights,
                           const std::vector<double>& red_out_cycles,
                           const std::vector<double>& red_in_cycles, double cycle_s);

// Offsets from the band solution: pairwise
// o_{i,i+1} = ((r_i/2 + zeta_i + t_i) - (r_{i+1}/2 + zeta_{i+1})) mod 1,
// accumulated into absolute per-intersection offsets in seconds, o_1 = 0.
std::vector<double> offsets_from_band(const BandSolution& sol, const ArterialGeometry& geom,
                                      double cycle_s, const std::vector<double>& red_out_cycles);

// Flow-weighted analytical delay: per movement
// d = PF * C/2 * (1 - g/C)^2 / (1 - min(X, 0.98) g/C), with the progression
// factor PF = clamp(1 - B_dir/(g/C), 0.15, 1) for coordinated through
// movements and 1 for side movements.
double evaluate_delay(const SignalPlan& plan, const std::vector<double>& demand_vps,
                      const ArterialGeometry& geom, const BandSolution& band);

struct PlanWithBand {
  SignalPlan plan;
  BandSolution band;
};

// Webster + band + offsets in one step.
PlanWithBand build_plan(const std::vector<double>& demand_vps, const ArterialGeometry& geom);

// JSON with stable key order: cycle_s, greens_s, offsets_s.
std::string to_json(const SignalPlan& plan);

}  // namespace collab::signalopt
