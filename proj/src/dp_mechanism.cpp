#include "collab/dp_mechanism.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "collab/rng.hpp"

namespace collab::dp {

namespace {

void check_budget(const PrivacyBudget& pb) {
  if (!(pb.eps > 0.0 && pb.eps < 1.0)) {
    throw BudgetOutOfRangeError("eps must lie strictly in (0,1), got " + std::to_string(pb.eps));
  }
  if (!(pb.delta > 0.0 && pb.delta < 1.0)) {
    throw BudgetOutOfRangeError("delta must lie strictly in (0,1), got " +
                                std::to_string(pb.delta));
  }
}

}  // namespace

QueryStats query_stats(const FoQDataset& ds, double t_max, double h_max) {
  QueryStats s;
  for (std::size_t i = 0; i < ds.points.size(); ++i) {
    const FoQPoint& p = ds.points[i];
    if (p.t < 0.0 || p.t > t_max || p.h > 0.0 || -p.h > h_max) {
      std::ostringstream msg;
      msg << "point " << i << " (t=" << p.t << ", h=" << p.h << ") outside bounds (t_max="
          << t_max << ", h_max=" << h_max << ")";
      throw OutOfBoundsError(msg.str());
    }
    s.lam_t += p.t * p.t;
    s.lam_th += p.t * p.h;
    s.lam_h += p.h * p.h;
  }
  s.n = static_cast<double>(ds.points.size());
  return s;
}

double l2_sensitivity(const SensitivityWeights& w) {
  const double d_th = w.t_max * w.h_max * w.rho_th;
  const double d_t = w.t_max * w.t_max * w.rho_t;
  const double d_h = w.h_max * w.h_max * w.rho_h;
  const double d_n = 1.0 * w.rho_n;
  return std::sqrt(d_th * d_th + d_t * d_t + d_h * d_h + d_n * d_n);
}

double gaussian_sigma(double delta_f, const PrivacyBudget& pb) {
  check_budget(pb);
  if (!(delta_f > 0.0)) throw Error("sensitivity must be positive");
  return delta_f * std::sqrt(2.0 * std::log(1.25 / pb.delta)) / pb.eps;
}

NoiseSds noise_sds(const SensitivityWeights& w, const PrivacyBudget& pb) {
  const double sigma_f = gaussian_sigma(l2_sensitivity(w), pb);
  const double norm = std::sqrt(w.rho_t * w.rho_t + w.rho_th * w.rho_th + w.rho_h * w.rho_h +
                                w.rho_n * w.rho_n);
  return {sigma_f * w.rho_t / norm, sigma_f * w.rho_th / norm, sigma_f * w.rho_h / norm,
          sigma_f * w.rho_n / norm};
}

QueryStats perturb_stats(const QueryStats& stats, const SensitivityWeights& w,
                         const PrivacyBudget& pb, std::uint64_t seed) {
  return perturb_stats_with(stats, noise_sds(w, pb), seed);
}

QueryStats perturb_stats_with(const QueryStats& stats, const NoiseSds& sds, std::uint64_t seed) {
  Rng rng(seed);
  QueryStats out = stats;
  out.lam_t += sds.sd_t * rng.next_gauss();
  out.lam_th += sds.sd_th * rng.next_gauss();
  out.lam_h += sds.sd_h * rng.next_gauss();
  out.n += sds.sd_n * rng.next_gauss();
  return out;
}

SlopeDistribution slope_distribution(const QueryStats& perturbed, double reference_lam_t,
                                     const NoiseSds& sds) {
  if (!(perturbed.lam_t > 0.0)) {
    throw DegenerateStatsError("lam_t <= 0 after perturbation; budget too small for this count");
  }
  if (!(reference_lam_t > 0.0)) {
    throw DegenerateStatsError("reference lam_t must be positive");
  }
  SlopeDistribution d;
  d.mean = perturbed.lam_th / perturbed.lam_t;
  d.variance = (sds.sd_th * sds.sd_th + d.mean * d.mean * sds.sd_t * sds.sd_t) /
               (reference_lam_t * reference_lam_t);
  return d;
}

Reconstruction reconstruct_foq(const QueryStats& perturbed, int count_hint, double t_red,
                               double t_max, double h_max, std::uint64_t seed) {
  if (!(perturbed.lam_t > 0.0)) {
    throw DegenerateStatsError("lam_t <= 0 after perturbation; cannot reconstruct");
  }
  if (count_hint < 1) throw Error("count_hint must be >= 1");

  Reconstruction rec;
  rec.slope = perturbed.lam_th / perturbed.lam_t;

  double n_tilde = perturbed.n;
  if (n_tilde < 2.0) {
    n_tilde = 2.0;
    rec.degenerate = true;
  }
  double var = (perturbed.lam_h - perturbed.lam_th * perturbed.lam_th / perturbed.lam_t) /
               (n_tilde - 1.0);
  if (var < 0.0) {
    // Roundoff on exactly collinear stats is not a degeneracy; real negative
    // variance after perturbation is.
    const double scale = std::max(1.0, std::abs(perturbed.lam_h) / (n_tilde - 1.0));
    if (var < -1e-9 * scale) rec.degenerate = true;
    var = 0.0;
  }
  rec.resid_var = var;

  const long long rounded = std::llround(n_tilde);
  const long long hi = 10ll * count_hint;
  const long long n_pts = std::clamp(rounded, 2ll, std::max(2ll, hi));
  if (n_pts != rounded) rec.degenerate = true;

  Rng rng(seed);
  const double sd = std::sqrt(var);
  rec.data.points.reserve(static_cast<std::size_t>(n_pts));
  for (long long i = 0; i < n_pts; ++i) {
    FoQPoint p;
    p.t = std::min(t_red, t_max) * rng.next_double();
    p.h = rec.slope * p.t + sd * rng.next_gauss();
    p.h = std::clamp(p.h, -h_max, 0.0);
    rec.data.points.push_back(p);
  }
  return rec;
}

std::pair<double, double> traj_to_count_budget(double eps, double delta, int b,
                                               bool statement_bound) {
  if (b < 1) throw Error("b must be >= 1");
  const int upto = statement_bound ? b : b - 1;
  double sum = 0.0;
  for (int i = 0; i <= upto; ++i) sum += std::exp(i * eps);
  return {b * eps, delta * sum};
}

QueryStats2 query_stats_case2(const FoQDataset& ds, double t_max, double h_max) {
  QueryStats2 s;
  for (std::size_t i = 0; i < ds.points.size(); ++i) {
    const FoQPoint& p = ds.points[i];
    if (p.t < 0.0 || p.t > t_max || p.h > 0.0 || -p.h > h_max) {
      std::ostringstream msg;
      msg << "point " << i << " (t=" << p.t << ", h=" << p.h << ") outside bounds";
      throw OutOfBoundsError(msg.str());
    }
    s.sum_t += p.t;
    s.sum_h += p.h;
    s.sum_th += p.t * p.h;
    s.sum_t2 += p.t * p.t;
  }
  s.n = static_cast<double>(ds.points.size());
  return s;
}

double l2_sensitivity_case2(const SensitivityWeights2& w) {
  const double d_t = w.t_max * w.rho_t;
  const double d_h = w.h_max * w.rho_h;
  const double d_th = w.t_max * w.h_max * w.rho_th;
  const double d_t2 = w.t_max * w.t_max * w.rho_t2;
  const double d_n = 1.0 * w.rho_n;
  return std::sqrt(d_t * d_t + d_h * d_h + d_th * d_th + d_t2 * d_t2 + d_n * d_n);
}

NoiseSds2 noise_sds_case2(const SensitivityWeights2& w, const PrivacyBudget& pb) {
  const double sigma_f = gaussian_sigma(l2_sensitivity_case2(w), pb);
  const double norm =
      std::sqrt(w.rho_t * w.rho_t + w.rho_h * w.rho_h + w.rho_th * w.rho_th +
                w.rho_t2 * w.rho_t2 + w.rho_n * w.rho_n);
  return {sigma_f * w.rho_t / norm, sigma_f * w.rho_h / norm, sigma_f * w.rho_th / norm,
          sigma_f * w.rho_t2 / norm, sigma_f * w.rho_n / norm};
}

namespace {

struct Case2Line {
  double slope = 0.0;
  double intercept = 0.0;
  double det = 0.0;
};

Case2Line case2_line(const QueryStats2& s) {
  Case2Line line;
  line.det = s.n * s.sum_t2 - s.sum_t * s.sum_t;
  if (std::abs(line.det) < 1e-12) {
    throw DegenerateStatsError("singular normal equations after perturbation");
  }
  line.slope = (s.n * s.sum_th - s.sum_t * s.sum_h) / line.det;
  line.intercept = (s.sum_h - line.slope * s.sum_t) / s.n;
  return line;
}

}  // namespace

QueryStats2 perturb_stats_case2(const QueryStats2& stats, const SensitivityWeights2& w,
                                const PrivacyBudget& pb, std::uint64_t seed) {
  return perturb_stats_case2_with(stats, noise_sds_case2(w, pb), seed);
}

QueryStats2 perturb_stats_case2_with(const QueryStats2& stats, const NoiseSds2& sds,
                                     std::uint64_t seed) {
  Rng rng(seed);
  QueryStats2 out = stats;
  out.sum_t += sds.sd_t * rng.next_gauss();
  out.sum_h += sds.sd_h * rng.next_gauss();
  out.sum_th += sds.sd_th * rng.next_gauss();
  out.sum_t2 += sds.sd_t2 * rng.next_gauss();
  out.n += sds.sd_n * rng.next_gauss();
  return out;
}

Reconstruction reconstruct_foq_case2(const QueryStats2& perturbed, int count_hint, double t_lo,
                                     double t_hi, double t_max, double h_max,
                                     std::uint64_t seed) {
  if (count_hint < 1) throw Error("count_hint must be >= 1");
  const Case2Line line = case2_line(perturbed);

  Reconstruction rec;
  rec.slope = line.slope;
  double n_tilde = perturbed.n;
  if (n_tilde < 2.0) {
    n_tilde = 2.0;
    rec.degenerate = true;
  }
  const long long rounded = std::llround(n_tilde);
  const long long n_pts = std::clamp(rounded, 2ll, std::max(2ll, 10ll * count_hint));
  if (n_pts != rounded) rec.degenerate = true;

  Rng rng(seed);
  const double lo = std::clamp(t_lo, 0.0, t_max);
  const double hi = std::clamp(t_hi, lo, t_max);
  for (long long i = 0; i < n_pts; ++i) {
    FoQPoint p;
    p.t = lo + (hi - lo) * rng.next_double();
    p.h = std::clamp(line.slope * p.t + line.intercept, -h_max, 0.0);
    rec.data.points.push_back(p);
  }
  return rec;
}

double case2_slope_variance(const QueryStats2& perturbed, const SensitivityWeights2& w,
                            const PrivacyBudget& pb) {
  const NoiseSds2 sds = noise_sds_case2(w, pb);
  const double sd[5] = {sds.sd_t, sds.sd_h, sds.sd_th, sds.sd_t2, sds.sd_n};
  const QueryStats2& s = perturbed;
  const double det = s.n * s.sum_t2 - s.sum_t * s.sum_t;
  if (std::abs(det) < 1e-12) {
    throw DegenerateStatsError("singular normal equations after perturbation");
  }
  const double num = s.n * s.sum_th - s.sum_t * s.sum_h;
  // First-order propagation of the component noise through the slope formula.
  const double d_sum_t = (-s.sum_h * det + 2.0 * s.sum_t * num) / (det * det);
  const double d_sum_h = -s.sum_t / det;
  const double d_sum_th = s.n / det;
  const double d_sum_t2 = -num * s.n / (det * det);
  const double d_n = (s.sum_th * det - num * s.sum_t2) / (det * det);
  return d_sum_t * d_sum_t * sd[0] * sd[0] + d_sum_h * d_sum_h * sd[1] * sd[1] +
         d_sum_th * d_sum_th * sd[2] * sd[2] + d_sum_t2 * d_sum_t2 * sd[3] * sd[3] +
         d_n * d_n * sd[4] * sd[4];
}

std::string to_json(const QueryStats& stats) {
  nlohmann::ordered_json j;
  j["lam_t"] = stats.lam_t;
  j["lam_th"] = stats.lam_th;
  j["lam_h"] = stats.lam_h;
  j["n"] = stats.n;
  return j.dump();
}

QueryStats query_stats_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  QueryStats s;
  s.lam_t = j.at("lam_t").get<double>();
  s.lam_th = j.at("lam_th").get<double>();
  s.lam_h = j.at("lam_h").get<double>();
  s.n = j.at("n").get<double>();
  return s;
}

std::string to_json(const FoQDataset& ds) {
  nlohmann::ordered_json j;
  j["movement_id"] = ds.movement_id;
  j["owner_id"] = ds.owner_id;
  auto points = nlohmann::ordered_json::array();
  for (const FoQPoint& p : ds.points) {
    points.push_back({p.t, p.h});
  }
  j["points"] = std::move(points);
  return j.dump();
}

FoQDataset dataset_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FoQDataset ds;
  ds.movement_id = j.at("movement_id").get<int>();
  ds.owner_id = j.at("owner_id").get<int>();
  for (const auto& p : j.at("points")) {
    ds.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return ds;
}

}  // namespace collab::dp
