#include "collab/traffic_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "collab/rng.hpp"

namespace collab::traffic {

dp::FoQDataset simulate_foq(const FundamentalDiagram& fd, const MovementConfig& cfg,
                            std::uint64_t seed) {
  const double q = cfg.demand_vps;
  const double q_cap = fd.capacity();
  if (!(q > 0.0) || q >= q_cap) {
    std::ostringstream msg;
    msg << "arrival flow " << q << " veh/s not inside (0, capacity=" << q_cap << ")";
    throw OversaturatedError(msg.str());
  }
  if (!(cfg.penetration > 0.0 && cfg.penetration <= 1.0)) {
    throw Error("penetration must lie in (0, 1]");
  }

  // Queue extent at the end of red against the link.
  const double psi_demand = flow_to_slope(q, fd);
  double queue_len;
  if (cfg.foq_case == FoQCase::kCase1) {
    queue_len = -psi_demand * cfg.red_s;
  } else {
    const double t_break = fd.v_f * cfg.upstream_discharge_s / (fd.v_f + fd.w);
    const double tb = std::min(t_break, cfg.red_s);
    queue_len = fd.w * tb - psi_demand * std::max(0.0, cfg.red_s - tb);
  }
  if (queue_len > cfg.link_length_m) {
    std::ostringstream msg;
    msg << "queue " << queue_len << " m exceeds link " << cfg.link_length_m << " m";
    throw OversaturatedError(msg.str());
  }

  dp::FoQDataset out;
  const double sat_headway = 1.0 / q_cap;
  const double demand_headway = 1.0 / q;
  for (int cycle = 0; cycle < std::max(1, cfg.cycles); ++cycle) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(cycle)));
    double arrival = 0.0;  // unimpeded stop-line passage time of vehicle n
    for (int n = 0; n < 200000; ++n) {
      const double h = -static_cast<double>(n) / fd.k_j;
      const double t = std::max(0.0, arrival + h / fd.v_f);
      if (t > cfg.red_s) break;
      if (rng.next_double() < cfg.penetration) {
        out.points.push_back({t, h});
      }
      double headway = demand_headway;
      if (cfg.foq_case == FoQCase::kCase2 && arrival < cfg.upstream_discharge_s) {
        headway = sat_headway;
      }
      if (cfg.headway_jitter > 0.0) {
        headway *= 1.0 + cfg.headway_jitter * (2.0 * rng.next_double() - 1.0);
        headway = std::max(headway, 1e-6);
      }
      arrival += headway;
    }
  }
  return out;
}

RegressionEstimate fit_case1(const dp::FoQDataset& ds) {
  const std::size_t n = ds.points.size();
  if (n < 2) throw InsufficientDataError("case-1 fit needs at least two points");
  double lam_t = 0.0, lam_th = 0.0, lam_h = 0.0;
  for (const auto& p : ds.points) {
    lam_t += p.t * p.t;
    lam_th += p.t * p.h;
    lam_h += p.h * p.h;
  }
  if (!(lam_t > 0.0)) throw InsufficientDataError("case-1 fit needs nonzero times");
  RegressionEstimate est;
  est.n = static_cast<int>(n);
  est.slope = lam_th / lam_t;
  est.resid_var = std::max(0.0, (lam_h - lam_th * lam_th / lam_t) / (static_cast<double>(n) - 1.0));
  est.slope_var = est.resid_var / lam_t;
  return est;
}

RegressionEstimate fit_case2a(const dp::FoQDataset& ds, double slope_w) {
  const std::size_t n = ds.points.size();
  if (n < 2) throw InsufficientDataError("case-2a fit needs at least two points");
  double mean = 0.0;
  for (const auto& p : ds.points) mean += p.h - slope_w * p.t;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const auto& p : ds.points) {
    const double r = p.h - slope_w * p.t - mean;
    ss += r * r;
  }
  RegressionEstimate est;
  est.n = static_cast<int>(n);
  est.slope = slope_w;
  est.intercept = mean;
  est.resid_var = ss / (static_cast<double>(n) - 1.0);
  est.intercept_var = est.resid_var / static_cast<double>(n);
  return est;
}

RegressionEstimate fit_case2b(const dp::FoQDataset& ds) {
  const std::size_t n = ds.points.size();
  if (n < 3) throw InsufficientDataError("case-2b fit needs at least three points");
  double st = 0.0, sh = 0.0, sth = 0.0, st2 = 0.0;
  for (const auto& p : ds.points) {
    st += p.t;
    sh += p.h;
    sth += p.t * p.h;
    st2 += p.t * p.t;
  }
  const double nn = static_cast<double>(n);
  const double det = nn * st2 - st * st;
  if (std::abs(det) <= 1e-12 * std::max(1.0, nn * st2)) {
    throw SingularDesignError("design matrix singular: all times equal");
  }
  RegressionEstimate est;
  est.n = static_cast<int>(n);
  est.slope = (nn * sth - st * sh) / det;
  est.intercept = (sh - est.slope * st) / nn;
  double ss = 0.0;
  for (const auto& p : ds.points) {
    const double r = p.h - est.slope * p.t - est.intercept;
    ss += r * r;
  }
  est.resid_var = ss / (nn - 2.0);
  est.slope_var = est.resid_var * nn / det;
  est.intercept_var = est.resid_var * st2 / det;
  return est;
}

GaussianEstimate fuse_estimates(const std::vector<GaussianEstimate>& estimates) {
  if (estimates.empty()) throw EmptyInputError("no estimates to fuse");
  for (const auto& e : estimates) {
    if (e.variance <= 0.0) return e;
  }
  double precision = 0.0, weighted = 0.0;
  for (const auto& e : estimates) {
    precision += 1.0 / e.variance;
    weighted += e.mean / e.variance;
  }
  return {weighted / precision, 1.0 / precision};
}

double slope_to_flow(double psi, const FundamentalDiagram& fd) {
  if (psi >= 0.0 || psi < -fd.w - 1e-9) {
    std::ostringstream msg;
    msg << "slope " << psi << " outside [-w, 0) with w=" << fd.w;
    throw SlopeOutOfRangeError(msg.str());
  }
  const double q = psi * fd.v_f * fd.k_j / (psi - fd.v_f);
  return std::clamp(q, 0.0, fd.capacity());
}

double flow_to_slope(double q_vps, const FundamentalDiagram& fd) {
  if (q_vps < 0.0 || q_vps >= fd.v_f * fd.k_j) {
    throw SlopeOutOfRangeError("flow outside [0, v_f k_j)");
  }
  return -q_vps * fd.v_f / (fd.v_f * fd.k_j - q_vps);
}

double slope_to_flow_derivative(double psi, const FundamentalDiagram& fd) {
  const double d = psi - fd.v_f;
  return -fd.v_f * fd.v_f * fd.k_j / (d * d);
}

DemandEstimate estimate_demands(const std::vector<MovementObservations>& observations,
                                const std::vector<FundamentalDiagram>& fds,
                                const PriorSpec& prior) {
  if (observations.size() != fds.size()) {
    throw Error("observations and fundamental diagrams must align per movement");
  }
  DemandEstimate result;
  const std::size_t m = observations.size();
  result.slope.resize(m);
  result.flow.resize(m);
  result.degenerate.assign(m, false);
  result.from_prior.assign(m, false);

  for (std::size_t i = 0; i < m; ++i) {
    const FundamentalDiagram& fd = fds[i];
    std::vector<GaussianEstimate> owner_slopes;
    bool any_degenerate = false;
    for (const auto& owner : observations[i].owners) {
      try {
        RegressionEstimate fit;
        if (owner.foq_case == FoQCase::kCase1) {
          fit = fit_case1(owner.data);
        } else {
          fit = fit_case2b(owner.data);
        }
        const double variance = fit.slope_var + owner.extra_slope_variance;
        // A posterior wider than the admissible slope range [-w, 0] carries
        // no information about the arrival rate; treat it like no data.
        if (variance > fd.w * fd.w) {
          any_degenerate = true;
          continue;
        }
        owner_slopes.push_back({fit.slope, variance});
        any_degenerate = any_degenerate || owner.degenerate;
      } catch (const InsufficientDataError&) {
        any_degenerate = true;
      } catch (const SingularDesignError&) {
        any_degenerate = true;
      }
    }
    if (owner_slopes.empty()) {
      if (!prior.enabled) throw NoDataError("movement has no shared data and the prior is off");
      const double sd = prior.rel_sd * prior.flow_vps;
      result.from_prior[i] = true;
      result.slope[i] = {0.0, 0.0};
      result.flow[i] = {prior.flow_vps, sd * sd};
      result.degenerate[i] = any_degenerate;
      continue;
    }
    GaussianEstimate fused = fuse_estimates(owner_slopes);
    // Clamp the posterior mean into the admissible shockwave range before
    // conversion; noisy draws can land outside it.
    const double lo = -fd.w + 1e-9;
    const double hi = -1e-9;
    const double psi = std::clamp(fused.mean, lo, hi);
    const double flow = slope_to_flow(psi, fd);
    const double g = slope_to_flow_derivative(psi, fd);
    result.slope[i] = fused;
    result.flow[i] = {flow, g * g * fused.variance};
    result.degenerate[i] = any_degenerate || (psi != fused.mean);
  }
  return result;
}

std::vector<std::vector<double>> sample_true_demand(const DemandEstimate& est,
                                                    const std::vector<double>& capacity_vps,
                                                    int n_samples, std::uint64_t seed) {
  const std::size_t m = est.flow.size();
  if (capacity_vps.size() != m) throw Error("capacity vector must align per movement");
  std::vector<std::vector<double>> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(s)));
    std::vector<double> draw(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double sd = std::sqrt(std::max(0.0, est.flow[i].variance));
      draw[i] = std::clamp(est.flow[i].mean + sd * rng.next_gauss(), 0.0, capacity_vps[i]);
    }
    samples.push_back(std::move(draw));
  }
  return samples;
}

void write_foq_csv(const std::string& path, const std::vector<dp::FoQDataset>& datasets) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "movement_id,owner_id,t_s,h_m\n";
  char line[128];
  for (const auto& ds : datasets) {
    for (const auto& p : ds.points) {
      std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g\n", ds.movement_id, ds.owner_id, p.t,
                    p.h);
      out << line;
    }
  }
}

std::vector<dp::FoQDataset> read_foq_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty FoQ csv " + path);
  std::vector<dp::FoQDataset> result;
  auto find = [&result](int movement, int owner) -> dp::FoQDataset& {
    for (auto& ds : result) {
      if (ds.movement_id == movement && ds.owner_id == owner) return ds;
    }
    result.push_back({movement, owner, {}});
    return result.back();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    int vals_i[2];
    double vals_d[2];
    for (int i = 0; i < 2; ++i) {
      if (!std::getline(ss, field, ',')) throw Error("malformed FoQ csv line: " + line);
      vals_i[i] = std::stoi(field);
    }
    for (int i = 0; i < 2; ++i) {
      if (!std::getline(ss, field, ',')) throw Error("malformed FoQ csv line: " + line);
      vals_d[i] = std::stod(field);
    }
    find(vals_i[0], vals_i[1]).points.push_back({vals_d[0], vals_d[1]});
  }
  return result;
}

}  // namespace collab::traffic
