#include "collab/game_core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "collab/numeric.hpp"
#include "collab/rng.hpp"

namespace collab::game {

namespace {

double effective_utility(const FollowerSpec& f, int k, const std::vector<double>& z) {
  return f.utility(z) - f.beta * z[k];
}

void warn_if_not_concave(const FollowerSpec& f, int k, std::size_t dim) {
  // Sampled second differences, step 1e-4, 100 random interior points.
  // Concavity is promised by the caller; violations only warn.
  Rng rng(0xC0C0ull + static_cast<std::uint64_t>(k));
  const double h = 1e-4;
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    std::vector<double> z(dim);
    for (auto& v : z) v = 0.05 + 0.9 * rng.next_double();
    std::vector<double> zp = z, zm = z;
    zp[static_cast<std::size_t>(k)] += h;
    zm[static_cast<std::size_t>(k)] -= h;
    const double d2 = effective_utility(f, k, zp) - 2.0 * effective_utility(f, k, z) +
                      effective_utility(f, k, zm);
    worst = std::max(worst, d2 / (h * h));
  }
  if (worst > 1e-6) {
    std::cerr << "[collab::game] warning: follower " << f.id
              << " utility fails sampled concavity check (second difference " << worst << ")\n";
  }
}

double best_response(const std::vector<FollowerSpec>& followers, int k, std::vector<double> z,
                     const LowerStageOptions& opts) {
  const FollowerSpec& f = followers[static_cast<std::size_t>(k)];
  auto objective = [&](double x) {
    z[static_cast<std::size_t>(k)] = x;
    return effective_utility(f, k, z);
  };
  return maximize_scalar(objective, f.floor, 1.0, opts.inner_tolerance);
}

std::vector<int> mask_to_actions(std::uint32_t mask, int k) {
  std::vector<int> a(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < k; ++i) a[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
  return a;
}

}  // namespace

double quality_to_budget_floor(double d, const DistortionProfile& prof) {
  if (!(d > 0.0)) throw InfeasibleError("quality threshold d must be positive");
  const double eps_min = 1e-12;
  const double at_one = prof.phi(1.0);
  if (d < at_one) {
    throw InfeasibleError("quality threshold below Phi(1): unattainable at maximal budget");
  }
  const double at_min = prof.phi(eps_min);
  if (d >= at_min) return 0.0;  // any budget satisfies the requirement
  double lo = eps_min;  // Phi(lo) > d
  double hi = 1.0;      // Phi(hi) <= d
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (prof.phi(mid) > d) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-14 && std::abs(prof.phi(hi) - d) < 1e-10) break;
  }
  return hi;
}

namespace {

std::optional<std::vector<double>> damped_iteration(const std::vector<FollowerSpec>& followers,
                                                    const std::vector<int>& active,
                                                    std::vector<double> z,
                                                    const LowerStageOptions& opts) {
  const std::size_t k = followers.size();
  for (int it = 0; it < opts.max_iterations; ++it) {
    std::vector<double> br = z;
    double deviation = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!active[i]) continue;
      br[i] = best_response(followers, static_cast<int>(i), z, opts);
      deviation = std::max(deviation, std::abs(br[i] - z[i]));
    }
    if (deviation < opts.br_tolerance) return z;
    for (std::size_t i = 0; i < k; ++i) {
      if (active[i]) z[i] = (1.0 - opts.damping) * z[i] + opts.damping * br[i];
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<double> lower_stage_equilibrium(const std::vector<FollowerSpec>& followers,
                                            const std::vector<int>& active,
                                            const LowerStageOptions& opts) {
  const std::size_t k = followers.size();
  if (active.size() != k) throw Error("active vector size mismatch");

  for (const FollowerSpec& f : followers) {
    if (f.floor < 0.0 || f.floor > 1.0) throw Error("follower floor must lie in [0,1]");
  }

  std::vector<double> z(k, 0.0);
  if (opts.start) {
    z = *opts.start;
    if (z.size() != k) throw Error("start vector size mismatch");
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      if (active[i]) z[i] = 0.5 * (followers[i].floor + 1.0);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!active[i]) z[i] = 0.0;
  }
  if (opts.check_concavity) {
    for (std::size_t i = 0; i < k; ++i) {
      if (active[i]) warn_if_not_concave(followers[i], static_cast<int>(i), k);
    }
  }

  if (auto fixed = damped_iteration(followers, active, z, opts)) return *fixed;

  for (int attempt = 0; attempt < opts.restarts; ++attempt) {
    Rng rng(Rng::derive(opts.restart_seed, static_cast<std::uint64_t>(attempt)));
    std::vector<double> start(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      if (!active[i]) continue;
      const double floor = followers[i].floor;
      start[i] = floor + (1.0 - floor) * rng.next_double();
    }
    if (auto fixed = damped_iteration(followers, active, start, opts)) return *fixed;
  }
  throw NonConvergenceError("lower-stage best response did not converge; the utility handle is likely not concave in the own coordinate");
}

ValueTable upper_stage_value_table(const std::vector<FollowerSpec>& followers,
                                   const LowerStageOptions& opts) {
  const int k = static_cast<int>(followers.size());
  if (k > 16) throw Error("upper stage enumeration limited to K <= 16");
  ValueTable table;
  table.num_players = k;
  const std::uint32_t count = 1u << k;
  table.values.resize(count);
  table.z_star.resize(count);
  LowerStageOptions inner = opts;
  inner.check_concavity = false;
  if (opts.check_concavity) {
    for (int i = 0; i < k; ++i) {
      warn_if_not_concave(followers[static_cast<std::size_t>(i)], i, followers.size());
    }
  }
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    const std::vector<int> active = mask_to_actions(mask, k);
    const std::vector<double> z = lower_stage_equilibrium(followers, active, inner);
    table.z_star[mask] = z;
    std::vector<double> v(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      v[static_cast<std::size_t>(i)] = effective_utility(followers[static_cast<std::size_t>(i)], i, z);
    }
    table.values[mask] = std::move(v);
  }
  return table;
}

std::vector<std::vector<int>> pure_ne(const ValueTable& table) {
  std::vector<std::vector<int>> result;
  const int k = table.num_players;
  const std::uint32_t count = 1u << k;
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    bool stable = true;
    for (int i = 0; i < k && stable; ++i) {
      const std::uint32_t flipped = mask ^ (1u << i);
      if (table.value(mask, i) < table.value(flipped, i) - 1e-12) stable = false;
    }
    if (stable) result.push_back(mask_to_actions(mask, k));
  }
  std::sort(result.begin(), result.end());
  return result;
}

DifferencesResult decreasing_differences_check(const ValueTable& table) {
  DifferencesResult res;
  const int k = table.num_players;
  if (k < 2) return res;
  const std::uint32_t count = 1u << k;
  for (int i = 0; i < k; ++i) {
    for (int l = 0; l < k; ++l) {
      if (l == i) continue;
      for (std::uint32_t ctx = 0; ctx < count; ++ctx) {
        if ((ctx >> i) & 1u) continue;
        if ((ctx >> l) & 1u) continue;
        const std::uint32_t bi = 1u << i;
        const std::uint32_t bl = 1u << l;
        const double lhs = table.value(ctx | bi | bl, i) - table.value(ctx | bi, i);
        const double rhs = table.value(ctx | bl, i) - table.value(ctx, i);
        res.worst_violation = std::max(res.worst_violation, lhs - rhs);
      }
    }
  }
  res.decreasing = res.worst_violation <= 1e-9;
  return res;
}

namespace {

// Expected payoff of player k when it plays action v and the others mix
// independently with probabilities p.
double expected_payoff(const ValueTable& t, int k, int v, const std::vector<double>& p) {
  const int n = t.num_players;
  const std::uint32_t count = 1u << n;
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    if (static_cast<int>((mask >> k) & 1u) != v) continue;
    double w = 1.0;
    for (int j = 0; j < n; ++j) {
      if (j == k) continue;
      const double pj = p[static_cast<std::size_t>(j)];
      w *= ((mask >> j) & 1u) ? pj : (1.0 - pj);
    }
    total += w * t.value(mask, k);
  }
  return total;
}

double indifference_gap(const ValueTable& t, int k, const std::vector<double>& p) {
  return expected_payoff(t, k, 1, p) - expected_payoff(t, k, 0, p);
}

double profile_regret(const ValueTable& t, const std::vector<double>& p) {
  double regret = 0.0;
  for (int k = 0; k < t.num_players; ++k) {
    const double e0 = expected_payoff(t, k, 0, p);
    const double e1 = expected_payoff(t, k, 1, p);
    const double mine = p[static_cast<std::size_t>(k)] * e1 +
                        (1.0 - p[static_cast<std::size_t>(k)]) * e0;
    regret = std::max(regret, std::max(e0, e1) - mine);
  }
  return regret;
}

// Linear coefficients of f_k(p) = a + b * p_x for fixed remaining entries.
void linear_in(const ValueTable& t, int k, int x, std::vector<double> p, double& a, double& b) {
  p[static_cast<std::size_t>(x)] = 0.0;
  a = indifference_gap(t, k, p);
  p[static_cast<std::size_t>(x)] = 1.0;
  b = indifference_gap(t, k, p) - a;
}

bool support_consistent(const ValueTable& t, const std::vector<int>& support,
                        const std::vector<double>& p) {
  for (int k = 0; k < t.num_players; ++k) {
    const double gap = indifference_gap(t, k, p);
    if (support[static_cast<std::size_t>(k)] == 0 && gap > 1e-9) return false;
    if (support[static_cast<std::size_t>(k)] == 1 && gap < -1e-9) return false;
  }
  return true;
}

std::optional<MixedProfile> try_support(const ValueTable& t, const std::vector<int>& support,
                                        int scan_points) {
  const int n = t.num_players;
  std::vector<int> mixers;
  std::vector<double> p(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) {
    if (support[static_cast<std::size_t>(k)] == 2) {
      mixers.push_back(k);
    } else {
      p[static_cast<std::size_t>(k)] = support[static_cast<std::size_t>(k)];
    }
  }
  auto finish = [&](std::vector<double> probs) -> std::optional<MixedProfile> {
    for (double v : probs) {
      if (v < -1e-9 || v > 1.0 + 1e-9) return std::nullopt;
    }
    for (auto& v : probs) v = std::clamp(v, 0.0, 1.0);
    if (!support_consistent(t, support, probs)) return std::nullopt;
    MixedProfile mp;
    mp.probs = probs;
    mp.regret = profile_regret(t, probs);
    return mp;
  };

  if (mixers.size() == 1) {
    const int k = mixers[0];
    if (std::abs(indifference_gap(t, k, p)) > 1e-9) return std::nullopt;
    p[static_cast<std::size_t>(k)] = 0.5;
    return finish(p);
  }
  if (mixers.size() == 2) {
    const int i = mixers[0];
    const int j = mixers[1];
    double ai, bi, aj, bj;
    linear_in(t, i, j, p, ai, bi);  // f_i = ai + bi * p_j
    linear_in(t, j, i, p, aj, bj);  // f_j = aj + bj * p_i
    double pj, pi;
    if (std::abs(bi) < 1e-14) {
      if (std::abs(ai) > 1e-9) return std::nullopt;
      pj = 0.5;
    } else {
      pj = -ai / bi;
    }
    if (std::abs(bj) < 1e-14) {
      if (std::abs(aj) > 1e-9) return std::nullopt;
      pi = 0.5;
    } else {
      pi = -aj / bj;
    }
    p[static_cast<std::size_t>(i)] = pi;
    p[static_cast<std::size_t>(j)] = pj;
    return finish(p);
  }
  // Fully mixed, three players: scan one probability, solve the other two in
  // closed form from the bilinear indifference conditions, bisect the residual
  // of the remaining condition. With (u, v) the cyclic successors of the
  // scanned player s: f_v gives p_u, f_s gives p_v, and f_u is the residual
  // (each gap f_k is independent of p_k and linear in each other coordinate).
  for (int rot = 0; rot < 3; ++rot) {
    const int scan = mixers[static_cast<std::size_t>(rot)];
    const int u = mixers[static_cast<std::size_t>((rot + 1) % 3)];
    const int v = mixers[static_cast<std::size_t>((rot + 2) % 3)];
    auto solve_linear = [&](int player, int unknown, std::vector<double> q, double& out) -> bool {
      q[static_cast<std::size_t>(unknown)] = 0.0;
      const double c0 = indifference_gap(t, player, q);
      q[static_cast<std::size_t>(unknown)] = 1.0;
      const double c1 = indifference_gap(t, player, q) - c0;
      if (std::abs(c1) < 1e-14) {
        if (std::abs(c0) > 1e-9) return false;
        out = 0.5;
        return true;
      }
      out = -c0 / c1;
      return out >= -1e-9 && out <= 1.0 + 1e-9;
    };
    auto solve_given = [&](double ps, std::vector<double>& out) -> bool {
      std::vector<double> q = p;
      q[static_cast<std::size_t>(scan)] = ps;
      double pu = 0.0;
      if (!solve_linear(v, u, q, pu)) return false;
      q[static_cast<std::size_t>(u)] = std::clamp(pu, 0.0, 1.0);
      double pv = 0.0;
      if (!solve_linear(scan, v, q, pv)) return false;
      q[static_cast<std::size_t>(v)] = std::clamp(pv, 0.0, 1.0);
      out = q;
      return true;
    };
    auto residual = [&](const std::vector<double>& q) { return indifference_gap(t, u, q); };
    double prev_r = 0.0;
    bool prev_ok = false;
    double prev_s = 0.0;
    for (int s = 0; s <= scan_points; ++s) {
      const double ps = static_cast<double>(s) / scan_points;
      std::vector<double> q;
      if (!solve_given(ps, q)) {
        prev_ok = false;
        continue;
      }
      const double r = residual(q);
      if (std::abs(r) < 1e-12) {
        auto mp = finish(q);
        if (mp) return mp;
      }
      if (prev_ok && ((prev_r < 0.0 && r > 0.0) || (prev_r > 0.0 && r < 0.0))) {
        double lo = prev_s, hi = ps, rlo = prev_r;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          std::vector<double> qm;
          if (!solve_given(mid, qm)) break;
          const double rm = residual(qm);
          if ((rlo < 0.0) == (rm < 0.0)) {
            lo = mid;
            rlo = rm;
          } else {
            hi = mid;
          }
          if (hi - lo < 1e-15) break;
        }
        std::vector<double> qf;
        if (solve_given(0.5 * (lo + hi), qf)) {
          auto mp = finish(qf);
          if (mp) return mp;
        }
      }
      prev_ok = true;
      prev_r = r;
      prev_s = ps;
    }
  }
  return std::nullopt;
}

}  // namespace

MixedProfile mixed_ne(const ValueTable& table) {
  const int n = table.num_players;
  if (n < 1 || n > 3) throw Error("mixed_ne supports 1 <= K <= 3");

  const auto pure = pure_ne(table);
  if (!pure.empty()) {
    MixedProfile mp;
    mp.probs.assign(pure.front().begin(), pure.front().end());
    mp.regret = profile_regret(table, mp.probs);
    return mp;
  }

  // Support enumeration: 0 = pure 0, 1 = pure 1, 2 = mixed. All-pure profiles
  // were covered above.
  for (int scan_points : {2000, 20000}) {
    std::optional<MixedProfile> best;
    std::vector<int> support(static_cast<std::size_t>(n), 0);
    int combos = 1;
    for (int i = 0; i < n; ++i) combos *= 3;
    for (int code = 0; code < combos; ++code) {
      int c = code;
      int mixed_count = 0;
      for (int i = 0; i < n; ++i) {
        support[static_cast<std::size_t>(i)] = c % 3;
        if (support[static_cast<std::size_t>(i)] == 2) ++mixed_count;
        c /= 3;
      }
      if (mixed_count == 0) continue;
      auto mp = try_support(table, support, scan_points);
      if (mp && (!best || mp->regret < best->regret)) best = mp;
    }
    if (best && best->regret < 1e-6) return *best;
  }
  throw NotFoundError("mixed equilibrium refinement failed at finest grid");
}

double collaboration_gain(const FollowerSpec& follower, int k, std::vector<double> z_context) {
  if (static_cast<std::size_t>(k) >= z_context.size()) throw Error("index out of range");
  auto value_at = [&](double x) {
    z_context[static_cast<std::size_t>(k)] = x;
    return effective_utility(follower, k, z_context);
  };
  const double base = value_at(0.0);
  const double arg = maximize_scalar(value_at, follower.floor, 1.0, 1e-9);
  return value_at(arg) - base;
}

std::optional<int> sufficient_condition_check(const std::vector<FollowerSpec>& followers) {
  const std::size_t k = followers.size();
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> zeros(k, 0.0);
    if (collaboration_gain(followers[i], static_cast<int>(i), zeros) > 0.0) {
      return static_cast<int>(i);
    }
  }
  return std::nullopt;
}

SneResult solve_sne(const std::vector<std::vector<double>>& leader_grid,
                    std::vector<FollowerSpec> followers,
                    const std::vector<DistortionProfile>& profiles,
                    const LeaderValue& leader_value, const LowerStageOptions& opts) {
  if (leader_grid.empty()) throw Error("leader grid is empty");
  const std::size_t k = followers.size();
  if (profiles.size() != 1 && profiles.size() != k) {
    throw Error("profiles must have size 1 (shared) or K");
  }

  std::optional<SneResult> best;
  for (const auto& d : leader_grid) {
    if (d.size() != k) throw Error("leader grid vector size mismatch");
    bool usable = true;
    for (std::size_t i = 0; i < k; ++i) {
      const DistortionProfile& prof = profiles.size() == 1 ? profiles[0] : profiles[i];
      try {
        followers[i].floor = quality_to_budget_floor(d[i], prof);
      } catch (const InfeasibleError&) {
        usable = false;
        break;
      }
    }
    if (!usable) continue;
    const ValueTable table = upper_stage_value_table(followers, opts);
    const auto nes = pure_ne(table);
    SneResult candidate;
    candidate.leader_choice = d;
    if (!nes.empty()) {
      double best_lv = -std::numeric_limits<double>::infinity();
      std::vector<int> best_a;
      for (const auto& a : nes) {
        std::uint32_t mask = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (a[i]) mask |= 1u << i;
        }
        const double lv = leader_value(a, table.z_star[mask]);
        if (lv > best_lv + 1e-15) {
          best_lv = lv;
          best_a = a;
        }
      }
      std::uint32_t mask = 0;
      for (std::size_t i = 0; i < best_a.size(); ++i) {
        if (best_a[i]) mask |= 1u << i;
      }
      candidate.follower_profile = {best_a, table.z_star[mask]};
      candidate.leader_value = best_lv;
    } else {
      const MixedProfile mp = mixed_ne(table);
      const std::uint32_t count = 1u << k;
      double lv = 0.0;
      for (std::uint32_t mask = 0; mask < count; ++mask) {
        double w = 1.0;
        for (std::size_t i = 0; i < k; ++i) {
          w *= ((mask >> i) & 1u) ? mp.probs[i] : (1.0 - mp.probs[i]);
        }
        if (w <= 0.0) continue;
        std::vector<int> a(k, 0);
        for (std::size_t i = 0; i < k; ++i) a[i] = (mask >> i) & 1u;
        lv += w * leader_value(a, table.z_star[mask]);
      }
      std::vector<int> a(k, 0);
      std::uint32_t mode = 0;
      for (std::size_t i = 0; i < k; ++i) {
        a[i] = mp.probs[i] > 0.5 ? 1 : 0;
        if (a[i]) mode |= 1u << i;
      }
      candidate.follower_profile = {a, table.z_star[mode]};
      candidate.mixed = mp;
      candidate.leader_value = lv;
    }
    if (!best || candidate.leader_value > best->leader_value) best = candidate;
  }
  if (!best) throw InfeasibleError("every leader grid point is infeasible");
  return *best;
}

}  // namespace collab::game
