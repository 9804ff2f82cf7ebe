#include "collab/collab_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "collab/numeric.hpp"
#include "collab/rng.hpp"

namespace collab::sim {

namespace {

constexpr std::uint64_t kSimTag = 0x53494d5f54525554ull;    // ground-truth stream
constexpr std::uint64_t kNoiseTag = 0x4e4f4953455f4352ull;  // mechanism noise stream
constexpr std::uint64_t kRefTag = 0x5245465f50484931ull;    // distortion-profile reference

// Sufficient statistics of one (MP, movement) ground-truth draw. Raw points
// are dropped immediately; everything downstream is post-processing of these.
struct MovementTruth {
  dp::QueryStats stats;    // case 1
  dp::QueryStats2 stats2;  // case 2, segment b only
  int count = 0;
  bool usable = false;
  double seg_start_s = 0.0;  // synthetic time support start (case 2 break point)
};

using TruthGrid = std::vector<std::vector<MovementTruth>>;  // [mp][movement]

double case2_break_s(const Scenario& scn, const traffic::FundamentalDiagram& fd) {
  return fd.v_f * scn.upstream_discharge_s / (fd.v_f + fd.w);
}

}  // namespace

bool covers(const MpSpec& mp, const signalopt::Movement& movement) {
  bool direction_ok = false;
  switch (movement.direction) {
    case signalopt::Direction::kOutboundThrough:
      direction_ok = mp.coverage & kCoversOutbound;
      break;
    case signalopt::Direction::kInboundThrough:
      direction_ok = mp.coverage & kCoversInbound;
      break;
    case signalopt::Direction::kSide:
      direction_ok = mp.coverage & kCoversSide;
      break;
  }
  if (!direction_ok) return false;
  if (mp.nodes.empty()) return true;
  for (int node : mp.nodes) {
    if (node == movement.intersection) return true;
  }
  return false;
}

namespace {

TruthGrid simulate_truth(const Scenario& scn, const ScenarioContext& ctx,
                         std::uint64_t seed_base) {
  const std::size_t n_mps = scn.mps.size();
  const std::size_t n_mov = scn.geometry.movements.size();
  TruthGrid grid(n_mps, std::vector<MovementTruth>(n_mov));
  for (std::size_t k = 0; k < n_mps; ++k) {
    for (std::size_t m = 0; m < n_mov; ++m) {
      if (!covers(scn.mps[k], scn.geometry.movements[m])) continue;
      traffic::MovementConfig cfg = ctx.movement_cfg[m];
      cfg.penetration = scn.mps[k].penetration;
      const auto ds =
          traffic::simulate_foq(scn.fds[m], cfg, Rng::derive(seed_base, k * n_mov + m));
      MovementTruth& truth = grid[k][m];
      truth.count = static_cast<int>(ds.points.size());
      if (scn.movement_case[m] == traffic::FoQCase::kCase1) {
        if (truth.count >= 2) {
          truth.stats = dp::query_stats(ds, scn.t_max_s, scn.h_max_m);
          truth.usable = truth.stats.lam_t > 0.0;
        }
      } else {
        const double t_break = case2_break_s(scn, scn.fds[m]);
        dp::FoQDataset seg_b;
        for (const auto& p : ds.points) {
          if (p.t > t_break + 1e-9) seg_b.points.push_back(p);
        }
        truth.seg_start_s = t_break;
        truth.count = static_cast<int>(seg_b.points.size());
        if (truth.count >= 3) {
          truth.stats2 = dp::query_stats_case2(seg_b, scn.t_max_s, scn.h_max_m);
          truth.usable = true;
        }
      }
    }
  }
  return grid;
}

struct StageResult {
  double delay_s = 0.0;
  bool degenerate = false;
  signalopt::PlanWithBand plan;
  std::vector<double> q_hat_vps;
};

// DP release + estimation + planning + evaluation for one sharing pattern.
StageResult share_stage(const Scenario& scn, const ScenarioContext& ctx, std::uint32_t mask,
                        const std::vector<double>& eps_by_mp, const TruthGrid& truth,
                        std::uint64_t noise_seed) {
  const std::size_t n_mov = scn.geometry.movements.size();
  const std::size_t n_mps = scn.mps.size();
  StageResult out;

  if (mask == 0) {
    out.plan = ctx.old_plan;
    out.delay_s = ctx.delay_old;
    out.q_hat_vps = ctx.prior_vps;
    return out;
  }

  const auto weights = dp::SensitivityWeights::balanced(scn.t_max_s, scn.h_max_m, scn.rho_scale, scn.rho_n);
  const auto weights2 =
      dp::SensitivityWeights2::balanced(scn.t_max_s, scn.h_max_m, scn.rho_scale, scn.rho_n);

  std::vector<traffic::MovementObservations> observations(n_mov);
  for (std::size_t m = 0; m < n_mov; ++m) {
    observations[m].movement = static_cast<int>(m);
    for (std::size_t k = 0; k < n_mps; ++k) {
      if (!((mask >> k) & 1u)) continue;
      const MovementTruth& t = truth[k][m];
      if (!t.usable) continue;
      const dp::PrivacyBudget pb{eps_by_mp[k], scn.delta};
      const std::uint64_t flat = k * n_mov + m;
      try {
        traffic::OwnerObservation obs;
        obs.owner_id = scn.mps[k].id;
        if (scn.movement_case[m] == traffic::FoQCase::kCase1) {
          const auto noisy =
              dp::perturb_stats(t.stats, weights, pb, Rng::derive(noise_seed, 2 * flat));
          const auto sds = dp::noise_sds(weights, pb);
          // lam_t below its own noise floor: the release carries no usable
          // signal and the linearized slope variance is meaningless.
          if (noisy.lam_t < 2.0 * sds.sd_t) {
            out.degenerate = true;
            continue;
          }
          const auto rec = dp::reconstruct_foq(noisy, t.count, ctx.movement_cfg[m].red_s,
                                               scn.t_max_s, scn.h_max_m,
                                               Rng::derive(noise_seed, 2 * flat + 1));
          obs.data = rec.data;
          obs.extra_slope_variance =
              dp::slope_distribution(noisy, noisy.lam_t, sds).variance;
          obs.degenerate = rec.degenerate;
          obs.foq_case = traffic::FoQCase::kCase1;
        } else {
          const auto noisy =
              dp::perturb_stats_case2(t.stats2, weights2, pb, Rng::derive(noise_seed, 2 * flat));
          const auto rec = dp::reconstruct_foq_case2(noisy, t.count, t.seg_start_s,
                                                     ctx.movement_cfg[m].red_s, scn.t_max_s,
                                                     scn.h_max_m,
                                                     Rng::derive(noise_seed, 2 * flat + 1));
          obs.data = rec.data;
          obs.extra_slope_variance = dp::case2_slope_variance(noisy, weights2, pb);
          obs.degenerate = rec.degenerate;
          obs.foq_case = traffic::FoQCase::kCase2;
        }
        out.degenerate = out.degenerate || obs.degenerate;
        observations[m].owners.push_back(std::move(obs));
      } catch (const DegenerateStatsError&) {
        out.degenerate = true;
      }
    }
  }

  traffic::PriorSpec prior;
  prior.enabled = true;
  prior.rel_sd = scn.prior_rel_sd;
  auto est = traffic::estimate_demands(observations, scn.fds, prior);
  for (std::size_t m = 0; m < n_mov; ++m) {
    if (est.from_prior[m]) {
      const double flow = ctx.prior_vps[m];
      const double sd = scn.prior_rel_sd * flow;
      est.flow[m] = {flow, sd * sd};
    }
    out.degenerate = out.degenerate || est.degenerate[m];
  }

  out.q_hat_vps.resize(n_mov);
  for (std::size_t m = 0; m < n_mov; ++m) out.q_hat_vps[m] = est.flow[m].mean;
  bool capped = false;
  out.q_hat_vps = cap_to_saturation(out.q_hat_vps, scn.geometry, 0.98, &capped);
  out.degenerate = out.degenerate || capped;

  out.plan = signalopt::build_plan(out.q_hat_vps, scn.geometry);
  out.delay_s =
      signalopt::evaluate_delay(out.plan.plan, ctx.demand_vps, scn.geometry, out.plan.band);
  return out;
}

int thread_count(const Scenario& scn) {
  if (scn.threads > 0) return scn.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<int> mask_axes(std::uint32_t mask, int n_mps) {
  std::vector<int> axes;
  for (int k = 0; k < n_mps; ++k) {
    if ((mask >> k) & 1u) axes.push_back(k);
  }
  return axes;
}

}  // namespace

std::vector<double> cap_to_saturation(const std::vector<double>& demand_vps,
                                      const signalopt::ArterialGeometry& geom, double max_y,
                                      bool* flagged) {
  const auto sums = signalopt::critical_ratio_sums(demand_vps, geom);
  double worst = 0.0;
  for (double y : sums) worst = std::max(worst, y);
  if (worst <= max_y) {
    if (flagged) *flagged = false;
    return demand_vps;
  }
  if (flagged) *flagged = true;
  std::vector<double> scaled = demand_vps;
  const double scale = max_y / worst;
  for (double& q : scaled) q *= scale;
  return scaled;
}

ScenarioContext build_context(const Scenario& scn) {
  ScenarioContext ctx;
  const std::size_t n_mov = scn.geometry.movements.size();
  if (scn.demand_vph.size() != n_mov || scn.prior_vph.size() != n_mov ||
      scn.fds.size() != n_mov || scn.movement_case.size() != n_mov) {
    throw Error("scenario vectors must align with the movement list");
  }
  ctx.demand_vps.resize(n_mov);
  ctx.prior_vps.resize(n_mov);
  ctx.capacity_vps.resize(n_mov);
  for (std::size_t m = 0; m < n_mov; ++m) {
    ctx.demand_vps[m] = scn.demand_vph[m] / 3600.0;
    ctx.prior_vps[m] = scn.prior_vph[m] / 3600.0;
    ctx.capacity_vps[m] = scn.fds[m].capacity();
  }

  bool capped = false;
  const auto prior_capped = cap_to_saturation(ctx.prior_vps, scn.geometry, 0.98, &capped);
  ctx.old_plan = signalopt::build_plan(prior_capped, scn.geometry);
  ctx.delay_old =
      signalopt::evaluate_delay(ctx.old_plan.plan, ctx.demand_vps, scn.geometry, ctx.old_plan.band);

  ctx.movement_cfg.resize(n_mov);
  for (std::size_t m = 0; m < n_mov; ++m) {
    const auto& mv = scn.geometry.movements[m];
    traffic::MovementConfig cfg;
    cfg.demand_vps = ctx.demand_vps[m];
    const double green =
        ctx.old_plan.plan.greens_s[static_cast<std::size_t>(mv.intersection)]
                                  [static_cast<std::size_t>(mv.phase)];
    cfg.red_s = ctx.old_plan.plan.cycle_s - green;
    cfg.cycles = scn.cycles;
    cfg.headway_jitter = scn.jitter;
    cfg.foq_case = scn.movement_case[m];
    cfg.upstream_discharge_s = scn.upstream_discharge_s;
    cfg.link_length_m = scn.h_max_m;
    ctx.movement_cfg[m] = cfg;
  }
  return ctx;
}

PipelineResult pipeline_delay(const Scenario& scn, const std::vector<int>& a,
                              const std::vector<double>& eps, std::uint64_t seed) {
  if (a.size() != scn.mps.size() || eps.size() != scn.mps.size()) {
    throw Error("participation and budget vectors must have one entry per MP");
  }
  const ScenarioContext ctx = build_context(scn);
  std::uint32_t mask = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k]) mask |= 1u << k;
  }
  TruthGrid truth;
  if (mask != 0) truth = simulate_truth(scn, ctx, Rng::derive(seed ^ kSimTag, 0));

  const StageResult stage = share_stage(scn, ctx, mask, eps, truth, seed);
  PipelineResult out;
  out.delay_s = stage.delay_s;
  out.improvement_s = ctx.delay_old - stage.delay_s;
  out.degenerate = stage.degenerate;
  out.plan = stage.plan;
  out.q_hat_vps = stage.q_hat_vps;
  return out;
}

double UtilitySurface::u1_at(std::uint32_t mask, const std::vector<double>& eps_by_mp) const {
  const PatternSurface& pat = patterns[mask];
  const int dims = static_cast<int>(pat.axis_mps.size());
  if (dims == 0) return pat.u1[0];
  const int grid = static_cast<int>(eps_axis.size());

  std::vector<int> lo(static_cast<std::size_t>(dims));
  std::vector<double> frac(static_cast<std::size_t>(dims));
  for (int d = 0; d < dims; ++d) {
    const double x = eps_by_mp[static_cast<std::size_t>(pat.axis_mps[static_cast<std::size_t>(d)])];
    if (x <= eps_axis.front()) {
      lo[static_cast<std::size_t>(d)] = 0;
      frac[static_cast<std::size_t>(d)] = 0.0;
    } else if (x >= eps_axis.back()) {
      lo[static_cast<std::size_t>(d)] = grid - 2;
      frac[static_cast<std::size_t>(d)] = 1.0;
    } else {
      int i = static_cast<int>((x - eps_axis.front()) / (eps_axis[1] - eps_axis[0]));
      i = std::clamp(i, 0, grid - 2);
      while (i > 0 && x < eps_axis[static_cast<std::size_t>(i)]) --i;
      while (i < grid - 2 && x > eps_axis[static_cast<std::size_t>(i + 1)]) ++i;
      lo[static_cast<std::size_t>(d)] = i;
      frac[static_cast<std::size_t>(d)] =
          (x - eps_axis[static_cast<std::size_t>(i)]) /
          (eps_axis[static_cast<std::size_t>(i + 1)] - eps_axis[static_cast<std::size_t>(i)]);
    }
  }
  double total = 0.0;
  for (int corner = 0; corner < (1 << dims); ++corner) {
    double weight = 1.0;
    std::size_t index = 0;
    for (int d = 0; d < dims; ++d) {
      const int up = (corner >> d) & 1;
      weight *= up ? frac[static_cast<std::size_t>(d)] : 1.0 - frac[static_cast<std::size_t>(d)];
      index = index * static_cast<std::size_t>(grid) +
              static_cast<std::size_t>(lo[static_cast<std::size_t>(d)] + up);
    }
    if (weight != 0.0) total += weight * pat.u1[index];
  }
  return total;
}

double UtilitySurface::se_at(std::uint32_t mask, const std::vector<double>& eps_by_mp) const {
  const PatternSurface& pat = patterns[mask];
  if (pat.axis_mps.empty()) return pat.se[0];
  // Nearest-cell standard error; interpolating variances adds nothing here.
  const int grid = static_cast<int>(eps_axis.size());
  std::size_t index = 0;
  for (std::size_t d = 0; d < pat.axis_mps.size(); ++d) {
    const double x = eps_by_mp[static_cast<std::size_t>(pat.axis_mps[d])];
    int best = 0;
    double dist = 1e300;
    for (int i = 0; i < grid; ++i) {
      const double cur = std::abs(eps_axis[static_cast<std::size_t>(i)] - x);
      if (cur < dist) {
        dist = cur;
        best = i;
      }
    }
    index = index * static_cast<std::size_t>(grid) + static_cast<std::size_t>(best);
  }
  return pat.se[index];
}

UtilitySurface utility_surface(const Scenario& scn) {
  const ScenarioContext ctx = build_context(scn);
  const int n_mps = static_cast<int>(scn.mps.size());
  const int grid = scn.eps_grid;
  const int samples = scn.samples;

  UtilitySurface surface;
  surface.num_mps = n_mps;
  surface.samples = samples;
  surface.base_seed = scn.base_seed;
  surface.delay_old = ctx.delay_old;
  surface.eps_axis.resize(static_cast<std::size_t>(grid));
  for (int i = 0; i < grid; ++i) {
    surface.eps_axis[static_cast<std::size_t>(i)] =
        grid == 1 ? scn.eps_lo
                  : scn.eps_lo + (scn.eps_hi - scn.eps_lo) * i / static_cast<double>(grid - 1);
  }

  // Ground truth drawn once per sample index and reused across every cell
  // (common random numbers across the budget grid).
  std::vector<TruthGrid> truths(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    truths[static_cast<std::size_t>(s)] =
        simulate_truth(scn, ctx, Rng::derive(scn.base_seed ^ kSimTag, static_cast<std::uint64_t>(s)));
  }

  const std::uint32_t n_masks = 1u << n_mps;
  surface.patterns.resize(n_masks);
  struct Task {
    std::uint32_t mask;
    std::size_t cell;  // row-major within the pattern
  };
  std::vector<Task> tasks;
  for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
    PatternSurface& pat = surface.patterns[mask];
    pat.mask = mask;
    pat.axis_mps = mask_axes(mask, n_mps);
    std::size_t cells = 1;
    for (std::size_t d = 0; d < pat.axis_mps.size(); ++d) cells *= static_cast<std::size_t>(grid);
    pat.u1.assign(cells, 0.0);
    pat.se.assign(cells, 0.0);
    pat.degenerate_rate.assign(cells, 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
      if (mask != 0) tasks.push_back({mask, c});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t at = next.fetch_add(1);
      if (at >= tasks.size()) return;
      const Task& task = tasks[at];
      PatternSurface& pat = surface.patterns[task.mask];
      const int dims = static_cast<int>(pat.axis_mps.size());

      std::vector<double> eps_by_mp(static_cast<std::size_t>(n_mps), 0.0);
      std::size_t rest = task.cell;
      for (int d = dims - 1; d >= 0; --d) {
        const std::size_t coord = rest % static_cast<std::size_t>(grid);
        rest /= static_cast<std::size_t>(grid);
        eps_by_mp[static_cast<std::size_t>(pat.axis_mps[static_cast<std::size_t>(d)])] =
            surface.eps_axis[coord];
      }

      KahanSum sum, sumsq, degen;
      for (int s = 0; s < samples; ++s) {
        // Common random numbers: one noise realization per sample index,
        // shared by every cell; the budget only rescales it.
        const std::uint64_t noise_seed =
            Rng::derive(scn.base_seed ^ kNoiseTag, static_cast<std::uint64_t>(s));
        const StageResult stage =
            share_stage(scn, ctx, task.mask, eps_by_mp, truths[static_cast<std::size_t>(s)],
                        noise_seed);
        const double improvement = ctx.delay_old - stage.delay_s;
        sum.add(improvement);
        sumsq.add(improvement * improvement);
        degen.add(stage.degenerate ? 1.0 : 0.0);
      }
      const double mean = sum.value() / samples;
      const double var =
          std::max(0.0, sumsq.value() / samples - mean * mean) * samples / std::max(1, samples - 1);
      pat.u1[task.cell] = mean;
      pat.se[task.cell] = std::sqrt(var / samples);
      pat.degenerate_rate[task.cell] = degen.value() / samples;
    }
  };

  const int workers = std::min<int>(thread_count(scn), static_cast<int>(tasks.size()) + 1);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return surface;
}

std::vector<SurfaceRow> full_share_rows(const UtilitySurface& surface, const Scenario& scn) {
  const int n_mps = surface.num_mps;
  const std::uint32_t full = (1u << n_mps) - 1u;
  const PatternSurface& pat = surface.patterns[full];
  const int grid = static_cast<int>(surface.eps_axis.size());

  std::vector<SurfaceRow> rows;
  std::size_t cells = pat.u1.size();
  for (std::size_t c = 0; c < cells; ++c) {
    SurfaceRow row;
    row.eps.assign(static_cast<std::size_t>(n_mps), 0.0);
    std::size_t rest = c;
    for (int d = n_mps - 1; d >= 0; --d) {
      row.eps[static_cast<std::size_t>(d)] =
          surface.eps_axis[rest % static_cast<std::size_t>(grid)];
      rest /= static_cast<std::size_t>(grid);
    }
    row.u_ma = pat.u1[c];
    row.se_ma = pat.se[c];
    row.w_mp.resize(static_cast<std::size_t>(n_mps));
    row.u_mp.resize(static_cast<std::size_t>(n_mps));
    row.share.resize(static_cast<std::size_t>(n_mps));
    for (int k = 0; k < n_mps; ++k) {
      const MpSpec& mp = scn.mps[static_cast<std::size_t>(k)];
      row.w_mp[static_cast<std::size_t>(k)] = mp.kappa * row.u_ma;
      row.u_mp[static_cast<std::size_t>(k)] =
          row.w_mp[static_cast<std::size_t>(k)] - mp.beta * row.eps[static_cast<std::size_t>(k)];
      const double fallback =
          mp.kappa * surface.u1_at(full & ~(1u << k), row.eps);
      row.share[static_cast<std::size_t>(k)] =
          row.u_mp[static_cast<std::size_t>(k)] >= fallback - 1e-12 ? 1 : 0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> phi_coefficients(const Scenario& scn) {
  const ScenarioContext ctx = build_context(scn);
  const TruthGrid truth = simulate_truth(scn, ctx, Rng::derive(scn.base_seed, kRefTag));
  const double probe_eps = 0.5;
  const dp::PrivacyBudget pb{probe_eps, scn.delta};
  const auto weights = dp::SensitivityWeights::balanced(scn.t_max_s, scn.h_max_m, scn.rho_scale, scn.rho_n);
  const auto weights2 =
      dp::SensitivityWeights2::balanced(scn.t_max_s, scn.h_max_m, scn.rho_scale, scn.rho_n);
  const auto sds = dp::noise_sds(weights, pb);

  std::vector<double> coeff(scn.mps.size(), 0.0);
  for (std::size_t k = 0; k < scn.mps.size(); ++k) {
    double total = 0.0;
    int used = 0;
    for (std::size_t m = 0; m < scn.geometry.movements.size(); ++m) {
      const MovementTruth& t = truth[k][m];
      if (!t.usable) continue;
      double sd = 0.0;
      if (scn.movement_case[m] == traffic::FoQCase::kCase1) {
        const double psi = t.stats.lam_th / t.stats.lam_t;
        sd = std::sqrt(sds.sd_th * sds.sd_th + psi * psi * sds.sd_t * sds.sd_t) / t.stats.lam_t;
      } else {
        sd = std::sqrt(dp::case2_slope_variance(t.stats2, weights2, pb));
      }
      total += sd;
      ++used;
    }
    if (used == 0) throw Error("MP " + std::to_string(scn.mps[k].id) + " observes no movement");
    // sd scales as 1/eps, so eps * sd(eps) is the coefficient of Phi = A/eps.
    coeff[k] = std::sqrt(2.0 / 3.14159265358979323846) * probe_eps * (total / used);
  }
  return coeff;
}

GameOutcome run_game(const Scenario& scn, const UtilitySurface& surface) {
  const int n_mps = static_cast<int>(scn.mps.size());
  GameOutcome outcome;
  outcome.phi_coeff = phi_coefficients(scn);

  std::vector<std::vector<double>> grid = scn.leader_grid_abs;
  for (double rel : scn.d_rel_grid) {
    std::vector<double> d(static_cast<std::size_t>(n_mps));
    for (int k = 0; k < n_mps; ++k) {
      d[static_cast<std::size_t>(k)] = rel * outcome.phi_coeff[static_cast<std::size_t>(k)];
    }
    grid.push_back(std::move(d));
  }
  if (grid.empty()) throw Error("leader grid is empty");

  game::LowerStageOptions opts;
  opts.check_concavity = false;

  bool have_best = false;
  for (const auto& d : grid) {
    RegionEntry entry;
    entry.d = d;
    entry.floors.assign(static_cast<std::size_t>(n_mps), 2.0);
    entry.a.assign(static_cast<std::size_t>(n_mps), 0);
    entry.eps.assign(static_cast<std::size_t>(n_mps), 0.0);

    std::vector<int> feasible;
    for (int k = 0; k < n_mps; ++k) {
      const double a_k = outcome.phi_coeff[static_cast<std::size_t>(k)];
      game::DistortionProfile prof{[a_k](double e) { return a_k / e; }};
      try {
        const double floor = game::quality_to_budget_floor(d[static_cast<std::size_t>(k)], prof);
        entry.floors[static_cast<std::size_t>(k)] = floor;
        if (floor <= scn.eps_hi + 1e-12) feasible.push_back(k);
      } catch (const InfeasibleError&) {
        // MP cannot meet the requirement even at budget 1; it stays out.
      }
    }

    if (feasible.empty()) {
      entry.region = "no-share";
      entry.leader_value = 0.0;
      outcome.regions.push_back(std::move(entry));
    } else {
      std::vector<game::FollowerSpec> followers;
      for (std::size_t i = 0; i < feasible.size(); ++i) {
        const int k = feasible[i];
        const MpSpec& mp = scn.mps[static_cast<std::size_t>(k)];
        auto utility = [&surface, &scn, &feasible, k, n_mps](const std::vector<double>& z) {
          std::uint32_t mask = 0;
          std::vector<double> eps_by_mp(static_cast<std::size_t>(n_mps), 0.0);
          for (std::size_t j = 0; j < feasible.size(); ++j) {
            if (z[j] > 1e-12) {
              mask |= 1u << feasible[j];
              eps_by_mp[static_cast<std::size_t>(feasible[j])] = z[j];
            }
          }
          return scn.mps[static_cast<std::size_t>(k)].kappa * surface.u1_at(mask, eps_by_mp);
        };
        followers.push_back({mp.id, mp.beta, utility,
                             std::max(0.0, entry.floors[static_cast<std::size_t>(k)])});
      }

      const auto table = game::upper_stage_value_table(followers, opts);
      const auto nes = game::pure_ne(table);
      auto leader_value_of = [&](const std::vector<int>& a_sub,
                                 const std::vector<double>& z_sub) {
        std::uint32_t mask = 0;
        std::vector<double> eps_by_mp(static_cast<std::size_t>(n_mps), 0.0);
        for (std::size_t j = 0; j < feasible.size(); ++j) {
          if (a_sub[j]) {
            mask |= 1u << feasible[j];
            eps_by_mp[static_cast<std::size_t>(feasible[j])] = z_sub[j];
          }
        }
        return surface.u1_at(mask, eps_by_mp);
      };

      if (!nes.empty()) {
        double best_lv = -1e300;
        std::vector<int> best_a;
        std::uint32_t best_mask = 0;
        for (const auto& a_sub : nes) {
          std::uint32_t sub_mask = 0;
          for (std::size_t j = 0; j < a_sub.size(); ++j) {
            if (a_sub[j]) sub_mask |= 1u << j;
          }
          const double lv = leader_value_of(a_sub, table.z_star[sub_mask]);
          if (lv > best_lv + 1e-15) {
            best_lv = lv;
            best_a = a_sub;
            best_mask = sub_mask;
          }
        }
        entry.leader_value = best_lv;
        for (std::size_t j = 0; j < feasible.size(); ++j) {
          entry.a[static_cast<std::size_t>(feasible[j])] = best_a[j];
          entry.eps[static_cast<std::size_t>(feasible[j])] = table.z_star[best_mask][j];
        }
      } else {
        const auto mp = game::mixed_ne(table);
        entry.mixed = true;
        entry.mixed_probs.assign(static_cast<std::size_t>(n_mps), 0.0);
        const std::uint32_t combos = 1u << feasible.size();
        double lv = 0.0;
        for (std::uint32_t sub = 0; sub < combos; ++sub) {
          double weight = 1.0;
          std::vector<int> a_sub(feasible.size(), 0);
          for (std::size_t j = 0; j < feasible.size(); ++j) {
            const double p = mp.probs[j];
            const bool on = (sub >> j) & 1u;
            a_sub[j] = on ? 1 : 0;
            weight *= on ? p : 1.0 - p;
          }
          if (weight > 0.0) lv += weight * leader_value_of(a_sub, table.z_star[sub]);
        }
        entry.leader_value = lv;
        std::uint32_t mode = 0;
        for (std::size_t j = 0; j < feasible.size(); ++j) {
          entry.mixed_probs[static_cast<std::size_t>(feasible[j])] = mp.probs[j];
          if (mp.probs[j] > 0.5) {
            entry.a[static_cast<std::size_t>(feasible[j])] = 1;
            mode |= 1u << j;
          }
        }
        for (std::size_t j = 0; j < feasible.size(); ++j) {
          if (entry.a[static_cast<std::size_t>(feasible[j])]) {
            entry.eps[static_cast<std::size_t>(feasible[j])] = table.z_star[mode][j];
          }
        }
      }

      int sharers = 0;
      for (int v : entry.a) sharers += v;
      entry.region = sharers == 0 ? "no-share"
                     : sharers == n_mps ? "full-share"
                                        : "partial-share";
      outcome.regions.push_back(std::move(entry));
    }

    const RegionEntry& recorded = outcome.regions.back();
    if (!have_best || recorded.leader_value > outcome.sne.leader_value) {
      have_best = true;
      outcome.best_index = outcome.regions.size() - 1;
      outcome.sne.leader_choice = recorded.d;
      outcome.sne.leader_value = recorded.leader_value;
      outcome.sne.follower_profile = {recorded.a, recorded.eps};
      if (recorded.mixed) {
        game::MixedProfile mp;
        mp.probs = recorded.mixed_probs;
        outcome.sne.mixed = mp;
      } else {
        outcome.sne.mixed.reset();
      }
    }
  }
  return outcome;
}

DataUtilityMap data_utility_map(const Scenario& scn, const std::vector<double>& qhat_grid_vph,
                                const std::vector<double>& q_grid_vph) {
  if (qhat_grid_vph.empty() || q_grid_vph.empty()) throw Error("data-utility grids are empty");
  const ScenarioContext ctx = build_context(scn);
  const std::size_t n_mov = scn.geometry.movements.size();

  double outbound_nominal = 0.0;
  for (std::size_t m = 0; m < n_mov; ++m) {
    if (scn.geometry.movements[m].direction == signalopt::Direction::kOutboundThrough) {
      outbound_nominal = std::max(outbound_nominal, scn.demand_vph[m]);
    }
  }
  if (outbound_nominal <= 0.0) throw Error("scenario has no outbound demand");

  // The map's axes are corridor demand levels: every movement scales with the
  // outbound through demand, so relative weights stay at their nominal mix.
  auto family_vector = [&](double outbound_vph) {
    const double factor = outbound_vph / outbound_nominal;
    std::vector<double> q(n_mov);
    for (std::size_t m = 0; m < n_mov; ++m) q[m] = ctx.demand_vps[m] * factor;
    return q;
  };

  DataUtilityMap map;
  map.qhat_vph = qhat_grid_vph;
  map.q_vph = q_grid_vph;
  for (double qhat : qhat_grid_vph) {
    auto estimated = family_vector(qhat);
    bool capped = false;
    estimated = cap_to_saturation(estimated, scn.geometry, 0.98, &capped);
    const auto plan = signalopt::build_plan(estimated, scn.geometry);
    for (double q : q_grid_vph) {
      const auto actual = family_vector(q);
      map.delay_s.push_back(
          signalopt::evaluate_delay(plan.plan, actual, scn.geometry, plan.band));
    }
  }
  return map;
}

}  // namespace collab::sim
