#pragma once

// Test-only reduced-form optimum for the band problem, independent of the
// simplex route used by the implementation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "collab/signal_opt.hpp"

namespace collab::testing {

// Independent optimum: the equality chain pins sigma_i = s + c_i, so for each
// loop-integer choice the problem reduces to a one-dimensional scan over s
// with a closed-form split of the remaining band budget.
inline double band_oracle(const signalopt::ArterialGeometry& geom,
                          const signalopt::BandWeights& weights,
                   const std::vector<double>& red_out, const std::vector<double>& red_in,
                   double cycle_s, double step) {
  const int count = geom.count();
  const double w1 = std::pow(std::max(weights.out_ratio, 1e-9), weights.alpha);
  const double w2 = std::pow(std::max(weights.in_ratio, 1e-9), weights.alpha);
  double cap_out = 1e9, cap_in = 1e9;
  for (int i = 0; i < count; ++i) {
    cap_out = std::min(cap_out, 1.0 - red_out[static_cast<std::size_t>(i)]);
    cap_in = std::min(cap_in, 1.0 - red_in[static_cast<std::size_t>(i)]);
  }
  const int pairs = count - 1;
  std::vector<double> rhs_base(static_cast<std::size_t>(std::max(0, pairs)));
  std::vector<int> m_hi(static_cast<std::size_t>(std::max(0, pairs)));
  for (int i = 0; i < pairs; ++i) {
    const double t_sum = (geom.travel_out_s[static_cast<std::size_t>(i)] +
                          geom.travel_in_s[static_cast<std::size_t>(i)]) /
                         cycle_s;
    rhs_base[static_cast<std::size_t>(i)] =
        -0.5 * (red_out[static_cast<std::size_t>(i)] + red_in[static_cast<std::size_t>(i)]) +
        0.5 * (red_out[static_cast<std::size_t>(i + 1)] + red_in[static_cast<std::size_t>(i + 1)]) +
        geom.intersections[static_cast<std::size_t>(i)].adv_in_cycles +
        geom.intersections[static_cast<std::size_t>(i + 1)].adv_out_cycles - t_sum -
        geom.intersections[static_cast<std::size_t>(i)].delta_ref_cycles +
        geom.intersections[static_cast<std::size_t>(i + 1)].delta_ref_cycles;
    m_hi[static_cast<std::size_t>(i)] = static_cast<int>(std::ceil(t_sum + 2.0)) + 2;
  }

  double best = -1.0;
  std::vector<int> m(static_cast<std::size_t>(std::max(0, pairs)));
  for (auto& v : m) v = -m_hi[0];
  if (pairs == 0) {
    double b = std::max(0.0, cap_out);
    double bb = std::max(0.0, cap_in);
    return w1 * b + w2 * bb;
  }
  for (int i = 0; i < pairs; ++i) m[static_cast<std::size_t>(i)] = -m_hi[static_cast<std::size_t>(i)];
  while (true) {
    std::vector<double> c(static_cast<std::size_t>(count), 0.0);
    for (int i = 0; i < pairs; ++i) {
      c[static_cast<std::size_t>(i + 1)] =
          c[static_cast<std::size_t>(i)] -
          (rhs_base[static_cast<std::size_t>(i)] + static_cast<double>(m[static_cast<std::size_t>(i)]));
    }
    double s_lo = 0.0, s_hi = 1e9;
    for (int i = 0; i < count; ++i) {
      s_lo = std::max(s_lo, -c[static_cast<std::size_t>(i)]);
      s_hi = std::min(s_hi, (1.0 - red_out[static_cast<std::size_t>(i)]) +
                                (1.0 - red_in[static_cast<std::size_t>(i)]) -
                                c[static_cast<std::size_t>(i)]);
    }
    for (double s = s_lo; s <= s_hi + 1e-12; s += step) {
      double budget = 1e9;
      for (int i = 0; i < count; ++i) {
        budget = std::min(budget, (1.0 - red_out[static_cast<std::size_t>(i)]) +
                                      (1.0 - red_in[static_cast<std::size_t>(i)]) -
                                      (s + c[static_cast<std::size_t>(i)]));
      }
      if (budget < 0.0) continue;
      double b, bb;
      if (w1 >= w2) {
        b = std::min(cap_out, budget);
        bb = std::min(cap_in, budget - b);
      } else {
        bb = std::min(cap_in, budget);
        b = std::min(cap_out, budget - bb);
      }
      best = std::max(best, w1 * std::max(0.0, b) + w2 * std::max(0.0, bb));
    }
    int pos = 0;
    while (pos < pairs) {
      if (++m[static_cast<std::size_t>(pos)] <= m_hi[static_cast<std::size_t>(pos)]) break;
      m[static_cast<std::size_t>(pos)] = -m_hi[static_cast<std::size_t>(pos)];
      ++pos;
    }
    if (pos == pairs) break;
  }
  return best;
}

}  // namespace collab::testing
