#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "collab/errors.hpp"

namespace collab::dp {

// Front-of-queue trajectory point: t seconds since red onset (>= 0),
// h meters upstream of the stop line (<= 0).
struct FoQPoint {
  double t = 0.0;
  double h = 0.0;
};

struct FoQDataset {
  int movement_id = 0;
  int owner_id = 0;
  std::vector<FoQPoint> points;
};

// Sufficient statistics of the FoQ regression: lam_t = sum t^2,
// lam_th = sum t*h, lam_h = sum h^2, n = count (real-valued once perturbed).
struct QueryStats {
  double lam_t = 0.0;
  double lam_th = 0.0;
  double lam_h = 0.0;
  double n = 0.0;

  bool cauchy_schwarz_ok() const { return lam_th * lam_th <= lam_t * lam_h + 1e-9; }
};

// Public weighting of the query components plus the agreed point bounds.
struct SensitivityWeights {
  double rho_t = 1.0;
  double rho_th = 1.0;
  double rho_h = 1.0;
  double rho_n = 1.0;
  double t_max = 120.0;
  double h_max = 300.0;

  // Default weighting: each component contributes unit normalized
  // sensitivity. `scale` raises the weight of the Lambda components so the
  // mechanism's noise is material at small sample sizes; `rho_n` weights the
  // count query (the noise share of a component is proportional to its rho).
  static SensitivityWeights balanced(double t_max, double h_max, double scale = 1.0,
                                     double rho_n = 1.0) {
    return {scale / (t_max * t_max), scale / (t_max * h_max), scale / (h_max * h_max), rho_n,
            t_max, h_max};
  }
};

struct PrivacyBudget {
  double eps = 0.5;
  double delta = 0.05;
};

// Per-component noise standard deviations actually added by the mechanism.
struct NoiseSds {
  double sd_t = 0.0;
  double sd_th = 0.0;
  double sd_h = 0.0;
  double sd_n = 0.0;
};

struct SlopeDistribution {
  double mean = 0.0;
  double variance = 0.0;
};

// Exact sums over the dataset. Throws OutOfBoundsError naming the first point
// outside the (t_max, h_max) box.
QueryStats query_stats(const FoQDataset& ds, double t_max, double h_max);

// Global l2 sensitivity of the weighted query under single-point removal:
// sqrt(sum over components of (Delta_l * rho_l)^2) with Delta_th = t_max*h_max,
// Delta_t = t_max^2, Delta_h = h_max^2, Delta_n = 1.
double l2_sensitivity(const SensitivityWeights& w);

// Gaussian mechanism scale: sigma = Delta_f * sqrt(2 ln(1.25/delta)) / eps.
// Requires eps, delta strictly inside (0, 1).
double gaussian_sigma(double delta_f, const PrivacyBudget& pb);

// Component shares sigma_l = sigma_f * rho_l / sqrt(sum rho^2).
NoiseSds noise_sds(const SensitivityWeights& w, const PrivacyBudget& pb);

// Adds independent zero-mean Gaussian noise per component (order: lam_t,
// lam_th, lam_h, n). Deterministic given the seed.
QueryStats perturb_stats(const QueryStats& stats, const SensitivityWeights& w,
                         const PrivacyBudget& pb, std::uint64_t seed);

// Same mechanism with the component scales supplied directly; the seed fixes
// the underlying standard normal draws, so sweeping a budget with a fixed
// seed scales one common noise realization (common random numbers).
QueryStats perturb_stats_with(const QueryStats& stats, const NoiseSds& sds, std::uint64_t seed);

// Distribution of the perturbed slope lam_th/lam_t:
// N(mean, (sd_th^2 + mean^2 sd_t^2) / reference_lam_t^2).
// Throws DegenerateStatsError when the supplied lam_t <= 0.
SlopeDistribution slope_distribution(const QueryStats& perturbed, double reference_lam_t,
                                     const NoiseSds& sds);

struct Reconstruction {
  FoQDataset data;
  bool degenerate = false;  // negative perturbed variance or count was clamped
  double slope = 0.0;       // psi-tilde used for generation
  double resid_var = 0.0;   // sigma-tilde^2 after clamping
};

// Synthetic FoQ points from perturbed statistics only: round(n-tilde) points
// (clamped to [2, 10*count_hint]) with t uniform on [0, t_red] and
// h = slope * t + N(0, resid_var), clamped to the point bounds.
Reconstruction reconstruct_foq(const QueryStats& perturbed, int count_hint, double t_red,
                               double t_max, double h_max, std::uint64_t seed);

// Trajectory-level (eps, delta) to count-level budget for fleet-size
// adjacency b: (b*eps, delta * sum_{i=0}^{b-1} e^{i*eps}). The looser bound
// with the sum running to b is available behind `statement_bound`.
std::pair<double, double> traj_to_count_budget(double eps, double delta, int b,
                                               bool statement_bound = false);

// Extended query for the two-segment case: (sum t, sum h, sum t*h, sum t^2, N).
struct QueryStats2 {
  double sum_t = 0.0;
  double sum_h = 0.0;
  double sum_th = 0.0;
  double sum_t2 = 0.0;
  double n = 0.0;
};

struct SensitivityWeights2 {
  double rho_t = 1.0;
  double rho_h = 1.0;
  double rho_th = 1.0;
  double rho_t2 = 1.0;
  double rho_n = 1.0;
  double t_max = 120.0;
  double h_max = 300.0;

  static SensitivityWeights2 balanced(double t_max, double h_max, double scale = 1.0,
                                      double rho_n = 1.0) {
    return {scale / t_max,           scale / h_max, scale / (t_max * h_max),
            scale / (t_max * t_max), rho_n,         t_max,
            h_max};
  }
};

struct NoiseSds2 {
  double sd_t = 0.0;
  double sd_h = 0.0;
  double sd_th = 0.0;
  double sd_t2 = 0.0;
  double sd_n = 0.0;
};

QueryStats2 query_stats_case2(const FoQDataset& ds, double t_max, double h_max);
double l2_sensitivity_case2(const SensitivityWeights2& w);
NoiseSds2 noise_sds_case2(const SensitivityWeights2& w, const PrivacyBudget& pb);
QueryStats2 perturb_stats_case2(const QueryStats2& stats, const SensitivityWeights2& w,
                                const PrivacyBudget& pb, std::uint64_t seed);
QueryStats2 perturb_stats_case2_with(const QueryStats2& stats, const NoiseSds2& sds,
                                     std::uint64_t seed);

// Line fit (slope, intercept) from the extended stats; synthetic points lie
// exactly on the perturbed line over [t_lo, t_hi].
Reconstruction reconstruct_foq_case2(const QueryStats2& perturbed, int count_hint, double t_lo,
                                     double t_hi, double t_max, double h_max,
                                     std::uint64_t seed);
double case2_slope_variance(const QueryStats2& perturbed, const SensitivityWeights2& w,
                            const PrivacyBudget& pb);

// Flat JSON records: {"lam_t":..,"lam_th":..,"lam_h":..,"n":..} and
// {"movement_id":..,"owner_id":..,"points":[[t,h],...]}.
std::string to_json(const QueryStats& stats);
QueryStats query_stats_from_json(const std::string& text);
std::string to_json(const FoQDataset& ds);
FoQDataset dataset_from_json(const std::string& text);

}  // namespace collab::dp
