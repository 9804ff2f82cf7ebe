#pragma once

#include <cmath>
#include <functional>

namespace collab {

// Compensated summation so that parallel cell aggregation stays
// order-independent and reruns are bit-identical.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = sum_ + y;
    c_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

// Maximize f on [lo, hi]: coarse scan to bracket the best sample, golden
// section refinement to width `tol`, endpoints always checked. Derivative
// free and deterministic, which is all the utility handles guarantee.
inline double maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                              double tol, int coarse = 64) {
  if (!(hi > lo)) return lo;
  double best_x = lo;
  double best_f = f(lo);
  const double step = (hi - lo) / coarse;
  for (int i = 1; i <= coarse; ++i) {
    const double x = (i == coarse) ? hi : lo + i * step;
    const double v = f(x);
    if (v > best_f) {
      best_f = v;
      best_x = x;
    }
  }
  double a = std::max(lo, best_x - step);
  double b = std::min(hi, best_x + step);
  const double inv_phi = 0.6180339887498948482;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > tol) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  const double mid = 0.5 * (a + b);
  const double fm = f(mid);
  if (fm >= best_f) return mid;
  return best_x;
}

}  // namespace collab
