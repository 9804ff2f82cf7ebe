#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collab/dp_mechanism.hpp"
#include "collab/errors.hpp"

namespace collab::traffic {

// Triangular fundamental diagram Q(k) = min{v_f k, w (k_j - k)}.
struct FundamentalDiagram {
  double v_f = 15.0;  // free-flow speed, m/s
  double w = 6.0;     // backward wave speed magnitude, m/s
  double k_j = 0.15;  // jam density, veh/m

  double critical_density() const { return w * k_j / (v_f + w); }
  double capacity() const { return v_f * critical_density(); }  // veh/s
};

enum class FoQCase { kCase1, kCase2 };

struct MovementConfig {
  double demand_vps = 0.1;  // arrival flow, veh/s; must stay below capacity
  double red_s = 40.0;      // effective red during which FoQ points accrue
  int cycles = 1;
  double penetration = 1.0;  // observed fraction of the fleet, (0, 1]
  FoQCase foq_case = FoQCase::kCase1;
  double upstream_discharge_s = 0.0;  // saturation-arrival window (case 2)
  double headway_jitter = 0.0;        // uniform jitter as a fraction of the mean headway
  double link_length_m = 300.0;
};

// Queue-joining points on the time-space diagram for one movement, all cycles
// folded onto a single representative cycle. Vehicle n stops at the jam-spacing
// grid h_n = -n / k_j; its joining time follows from the free-flow approach.
dp::FoQDataset simulate_foq(const FundamentalDiagram& fd, const MovementConfig& cfg,
                            std::uint64_t seed);

struct RegressionEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  double resid_var = 0.0;
  double slope_var = 0.0;
  double intercept_var = 0.0;
  int n = 0;
};

// Through-origin fit h = psi t (case 1 sufficient statistics).
RegressionEstimate fit_case1(const dp::FoQDataset& ds);

// Known-slope fit h = w t + gamma (case 2 segment a); w is the signed slope.
RegressionEstimate fit_case2a(const dp::FoQDataset& ds, double slope_w);

// Two-parameter least squares h = psi t + gamma (case 2 segment b).
RegressionEstimate fit_case2b(const dp::FoQDataset& ds);

struct GaussianEstimate {
  double mean = 0.0;
  double variance = 0.0;
};

// Precision-weighted fusion; a zero-variance input short-circuits to itself.
GaussianEstimate fuse_estimates(const std::vector<GaussianEstimate>& estimates);

// Queue-forming shockwave kinematics: the arriving state (q/v_f, q) against
// jam (k_j, 0) gives psi = -q v_f / (v_f k_j - q); inverted here as
// q = psi v_f k_j / (psi - v_f), clamped to [0, capacity].
double slope_to_flow(double psi, const FundamentalDiagram& fd);
double flow_to_slope(double q_vps, const FundamentalDiagram& fd);
double slope_to_flow_derivative(double psi, const FundamentalDiagram& fd);

struct OwnerObservation {
  int owner_id = -1;
  dp::FoQDataset data;               // raw or synthetic points
  double extra_slope_variance = 0.0;  // mechanism-induced variance added to the fit variance
  bool degenerate = false;
  FoQCase foq_case = FoQCase::kCase1;
};

struct MovementObservations {
  int movement = 0;
  std::vector<OwnerObservation> owners;
};

struct PriorSpec {
  double flow_vps = 200.0 / 3600.0;
  double rel_sd = 0.5;
  bool enabled = true;
};

struct DemandEstimate {
  std::vector<GaussianEstimate> slope;  // per movement; mean 0 when prior-based
  std::vector<GaussianEstimate> flow;   // veh/s
  std::vector<bool> degenerate;
  std::vector<bool> from_prior;
};

// Fit each owner's data per movement, fuse the slope posteriors, convert the
// fused mean via the shockwave relation with delta-method variance. Movements
// with no usable data fall back to the prior (or throw NoDataError when the
// prior is disabled).
DemandEstimate estimate_demands(const std::vector<MovementObservations>& observations,
                                const std::vector<FundamentalDiagram>& fds,
                                const PriorSpec& prior);

// Independent Gaussian draws from the per-movement flow posterior, clamped to
// [0, capacity].
std::vector<std::vector<double>> sample_true_demand(const DemandEstimate& est,
                                                    const std::vector<double>& capacity_vps,
                                                    int n_samples, std::uint64_t seed);

// CSV exchange format: movement_id, owner_id, t_s, h_m.
void write_foq_csv(const std::string& path, const std::vector<dp::FoQDataset>& datasets);
std::vector<dp::FoQDataset> read_foq_csv(const std::string& path);

}  // namespace collab::traffic
