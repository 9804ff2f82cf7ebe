#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "collab/errors.hpp"

namespace collab::game {

// A follower utility handle: U_k evaluated on the information-level vector
// z in [0,1]^K. Twice differentiable in the active region is assumed but not
// required syntactically; concavity is probed by sampled second differences.
using Utility = std::function<double(const std::vector<double>&)>;

struct FollowerSpec {
  int id = 0;
  double beta = 0.0;  // privacy cost weight; the solver maximizes utility(z) - beta * z_k
  Utility utility;
  double floor = 0.0;  // minimum admissible budget phi_k in [0,1] when sharing
};

struct ActionProfile {
  std::vector<int> a;     // participation bits
  std::vector<double> z;  // z_k = a_k * eps_k; zero iff a_k == 0
};

// Payoffs of the binary upper-stage game: one entry per participation mask,
// evaluated at the unique lower-stage equilibrium of that mask.
struct ValueTable {
  int num_players = 0;
  std::vector<std::vector<double>> values;  // [mask][k]
  std::vector<std::vector<double>> z_star;  // [mask][k]

  double value(std::uint32_t mask, int k) const { return values[mask][k]; }
};

struct MixedProfile {
  std::vector<double> probs;  // independent probability of a_k = 1
  double regret = 0.0;        // max over players of best pure deviation gain
};

struct SneResult {
  std::vector<double> leader_choice;
  ActionProfile follower_profile;
  std::optional<MixedProfile> mixed;  // set when no pure NE exists for the chosen d
  double leader_value = 0.0;
};

// Strictly decreasing expected-distortion map Phi_k: (0,1] -> positive reals.
struct DistortionProfile {
  std::function<double(double)> phi;
};

struct LowerStageOptions {
  int max_iterations = 10000;
  double damping = 0.5;
  double br_tolerance = 1e-8;      // per-coordinate best-response deviation at the fixed point
  double inner_tolerance = 1e-10;  // golden-section bracket width
  std::optional<std::vector<double>> start;
  bool check_concavity = true;
  // Seeded restarts from random interior points: sampled utilities can admit
  // only asymmetric equilibria that a symmetric iteration never reaches.
  int restarts = 8;
  std::uint64_t restart_seed = 0x5eedu;
};

// Invert Phi at quality threshold d: returns phi with Phi(phi) = d, clamped to
// 0 when d exceeds the entire range of Phi. Throws InfeasibleError when the
// requirement is unattainable even at budget 1.
double quality_to_budget_floor(double d, const DistortionProfile& prof);

// Damped Jacobi best response over the active coordinates; inactive
// coordinates are exactly zero. Throws NonConvergenceError after
// max_iterations.
std::vector<double> lower_stage_equilibrium(const std::vector<FollowerSpec>& followers,
                                            const std::vector<int>& active,
                                            const LowerStageOptions& opts = {});

// Enumerates all 2^K participation masks (K <= 16) and records the
// lower-stage equilibrium payoffs.
ValueTable upper_stage_value_table(const std::vector<FollowerSpec>& followers,
                                   const LowerStageOptions& opts = {});

// All masks with no profitable unilateral flip, lexicographically ordered.
std::vector<std::vector<int>> pure_ne(const ValueTable& table);

// Independent (product) mixed equilibrium over binary actions, K <= 3.
// Guarantees regret < 1e-6 on output or throws NotFoundError.
MixedProfile mixed_ne(const ValueTable& table);

struct DifferencesResult {
  bool decreasing = true;
  double worst_violation = 0.0;  // max over (k, l, context) of lhs - rhs
};

// Decreasing-differences (submodularity) check on a complete table.
DifferencesResult decreasing_differences_check(const ValueTable& table);

// Delta_k = max_{z_k in [floor,1]} U_k(z_k, z_minus) - U_k(0, z_minus).
// z_context supplies the other coordinates; slot k is overwritten.
double collaboration_gain(const FollowerSpec& follower, int k, std::vector<double> z_context);

// First follower with Delta_k(phi_k, 0) > 0, if any: the all-zero profile is
// then not a follower equilibrium.
std::optional<int> sufficient_condition_check(const std::vector<FollowerSpec>& followers);

using LeaderValue =
    std::function<double(const std::vector<int>& a, const std::vector<double>& z)>;

// Leader enumeration over a finite grid of d-vectors. For each d the floors
// come from quality_to_budget_floor; the follower game is solved with pure NE
// preferred (tie-break: leader value, then lexicographically smallest a) and
// mixed_ne as fallback. Infeasible d's are skipped; throws InfeasibleError if
// every d is infeasible.
SneResult solve_sne(const std::vector<std::vector<double>>& leader_grid,
                    std::vector<FollowerSpec> followers,
                    const std::vector<DistortionProfile>& profiles,
                    const LeaderValue& leader_value, const LowerStageOptions& opts = {});

}  // namespace collab::game
