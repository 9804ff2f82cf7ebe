#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collab/dp_mechanism.hpp"
#include "collab/game_core.hpp"
#include "collab/signal_opt.hpp"
#include "collab/traffic_model.hpp"

namespace collab::sim {

// Movement-class coverage of an MP's fleet, a bitmask over directions.
enum CoverageBits : unsigned {
  kCoversOutbound = 1u,
  kCoversInbound = 2u,
  kCoversSide = 4u,
  kCoversAll = 7u,
};

struct MpSpec {
  int id = 0;
  double penetration = 0.2;
  double beta = 90.0;
  double kappa = 1.0;  // share of the delay improvement counted as welfare
  unsigned coverage = kCoversAll;
  std::vector<int> nodes;  // covered intersections; empty = all
};

bool covers(const MpSpec& mp, const signalopt::Movement& movement);

struct Scenario {
  std::string name;
  signalopt::ArterialGeometry geometry;
  std::vector<traffic::FundamentalDiagram> fds;  // per movement
  std::vector<double> demand_vph;                // true demand per movement
  std::vector<double> prior_vph;                 // leader's fallback per movement
  double prior_rel_sd = 0.5;
  std::vector<traffic::FoQCase> movement_case;
  double upstream_discharge_s = 0.0;
  std::vector<MpSpec> mps;

  double delta = 0.05;
  double t_max_s = 120.0;
  double h_max_m = 300.0;
  double rho_scale = 1.0;
  double rho_n = 1.0;

  int eps_grid = 8;
  double eps_lo = 0.1;
  double eps_hi = 0.9;
  std::vector<double> d_rel_grid;                    // multipliers on Phi_k(1)
  std::vector<std::vector<double>> leader_grid_abs;  // explicit d vectors, optional

  int samples = 64;
  std::uint64_t base_seed = 1;
  int cycles = 20;
  double jitter = 0.1;
  int threads = 0;  // 0 = hardware concurrency

  std::vector<double> datamap_qhat_vph;
  std::vector<double> datamap_q_vph;
};

// Quantities derived once per scenario: the outdated plan is the policy
// applied to the prior demands, so an all-zero participation run reproduces
// it exactly and the leader's baseline utility is zero by construction.
struct ScenarioContext {
  signalopt::PlanWithBand old_plan;
  double delay_old = 0.0;
  std::vector<double> demand_vps;
  std::vector<double> prior_vps;
  std::vector<double> capacity_vps;  // fundamental-diagram capacities
  std::vector<traffic::MovementConfig> movement_cfg;  // penetration filled per MP later
};

ScenarioContext build_context(const Scenario& scn);

struct PipelineResult {
  double delay_s = 0.0;
  double improvement_s = 0.0;  // delay_old - delay_s
  bool degenerate = false;
  signalopt::PlanWithBand plan;
  std::vector<double> q_hat_vps;
};

// One Monte Carlo realization of the full chain: simulate FoQ data per
// sharing MP, perturb, reconstruct, estimate demands, plan, evaluate against
// the true demand. Deterministic given the seed.
PipelineResult pipeline_delay(const Scenario& scn, const std::vector<int>& a,
                              const std::vector<double>& eps, std::uint64_t seed);

// Monte Carlo means over one sharing pattern; axes hold the sharers' budgets.
struct PatternSurface {
  std::uint32_t mask = 0;
  std::vector<int> axis_mps;  // MP indices owning an axis, ascending
  std::vector<double> u1;     // mean delay improvement, row-major (last axis fastest)
  std::vector<double> se;     // Monte Carlo standard errors
  std::vector<double> degenerate_rate;
};

struct UtilitySurface {
  std::vector<double> eps_axis;
  int num_mps = 0;
  int samples = 0;
  std::uint64_t base_seed = 0;
  double delay_old = 0.0;
  std::vector<PatternSurface> patterns;  // index == sharing mask

  // Multilinear interpolation over the pattern's axes; coordinates outside
  // the grid clamp to the edge.
  double u1_at(std::uint32_t mask, const std::vector<double>& eps_by_mp) const;
  double se_at(std::uint32_t mask, const std::vector<double>& eps_by_mp) const;
};

// Full surface over every sharing pattern. Ground-truth FoQ data is drawn
// once per sample index (common random numbers); the mechanism noise of cell
// c and sample s is seeded with base_seed + c * samples + s.
UtilitySurface utility_surface(const Scenario& scn);

// Per-cell view of the full-share grid with the welfare split and share
// flags (an MP's flag compares sharing at the cell against free-riding on
// the leave-one-out pattern).
struct SurfaceRow {
  std::vector<double> eps;
  double u_ma = 0.0;
  double se_ma = 0.0;
  std::vector<double> w_mp;
  std::vector<double> u_mp;
  std::vector<int> share;
};

std::vector<SurfaceRow> full_share_rows(const UtilitySurface& surface, const Scenario& scn);

// Distortion-profile coefficients: Phi_k(eps) = A_k / eps, the expected
// absolute slope distortion of MP k's mechanism at a reference simulation.
std::vector<double> phi_coefficients(const Scenario& scn);

struct RegionEntry {
  std::vector<double> d;
  std::vector<double> floors;  // resolved phi_k; entries > 1 mean infeasible
  std::string region;          // no-share | partial-share | full-share
  std::vector<int> a;
  std::vector<double> eps;
  double leader_value = 0.0;
  bool mixed = false;
  std::vector<double> mixed_probs;
};

struct GameOutcome {
  game::SneResult sne;
  std::size_t best_index = 0;
  std::vector<RegionEntry> regions;
  std::vector<double> phi_coeff;
};

// Leader enumeration over the scenario's threshold grid with follower games
// solved on the interpolated utility surface.
GameOutcome run_game(const Scenario& scn, const UtilitySurface& surface);

// Expected-delay table over (estimated, true) demand pairs for the arterial
// through family; side demands stay at their nominal values.
struct DataUtilityMap {
  std::vector<double> qhat_vph;
  std::vector<double> q_vph;
  std::vector<double> delay_s;  // row-major, qhat outer, q inner
};

DataUtilityMap data_utility_map(const Scenario& scn, const std::vector<double>& qhat_grid_vph,
                                const std::vector<double>& q_grid_vph);

// Scales demand estimates down uniformly when the implied critical-ratio sum
// would reach saturation; planning stays well posed under extreme noise.
std::vector<double> cap_to_saturation(const std::vector<double>& demand_vps,
                                      const signalopt::ArterialGeometry& geom, double max_y,
                                      bool* flagged);

}  // namespace collab::sim
