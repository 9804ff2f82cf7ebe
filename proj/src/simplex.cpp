#include "collab/simplex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace collab::lp {

namespace {

constexpr double kTol = 1e-9;

struct Tableau {
  int rows = 0;  // constraints
  int cols = 0;  // structural + slack + artificial
  std::vector<std::vector<double>> a;  // rows x cols
  std::vector<double> b;               // rhs, kept nonnegative
  std::vector<int> basis;              // basic column per row

  void pivot(int row, int col) {
    const double p = a[row][col];
    for (int j = 0; j < cols; ++j) a[row][j] /= p;
    b[row] /= p;
    for (int i = 0; i < rows; ++i) {
      if (i == row) continue;
      const double f = a[i][col];
      if (f == 0.0) continue;
      for (int j = 0; j < cols; ++j) a[i][j] -= f * a[row][j];
      b[i] -= f * b[row];
    }
    basis[row] = col;
  }
};

// Price out: reduced costs for minimizing cost'x given the current basis.
// Bland's rule: entering column is the lowest index with negative reduced
// cost, leaving row is the min-ratio row with the lowest basis index.
bool simplex_min(Tableau& t, const std::vector<double>& cost) {
  for (int iter = 0; iter < 20000; ++iter) {
    std::vector<double> y(t.rows);
    for (int i = 0; i < t.rows; ++i) y[i] = cost[static_cast<std::size_t>(t.basis[i])];

    int entering = -1;
    for (int j = 0; j < t.cols; ++j) {
      double reduced = cost[static_cast<std::size_t>(j)];
      for (int i = 0; i < t.rows; ++i) reduced -= y[i] * t.a[i][j];
      if (reduced < -kTol) {
        entering = j;
        break;
      }
    }
    if (entering < 0) return true;  // optimal

    int leaving = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < t.rows; ++i) {
      if (t.a[i][entering] > kTol) {
        const double ratio = t.b[i] / t.a[i][entering];
        if (ratio < best_ratio - kTol ||
            (ratio < best_ratio + kTol &&
             (leaving < 0 || t.basis[i] < t.basis[leaving]))) {
          best_ratio = ratio;
          leaving = i;
        }
      }
    }
    if (leaving < 0) return false;  // unbounded
    t.pivot(leaving, entering);
  }
  throw std::runtime_error("simplex iteration limit");
}

}  // namespace

Solution maximize(const std::vector<double>& objective, const std::vector<Constraint>& constraints) {
  const int n = static_cast<int>(objective.size());
  const int m = static_cast<int>(constraints.size());

  int n_slack = 0;
  for (const auto& c : constraints) {
    if (c.rel != Relation::kEq) ++n_slack;
  }

  Tableau t;
  t.rows = m;
  t.cols = n + n_slack + m;  // one artificial per row keeps the logic simple
  t.a.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(t.cols), 0.0));
  t.b.assign(static_cast<std::size_t>(m), 0.0);
  t.basis.assign(static_cast<std::size_t>(m), -1);

  int slack_at = n;
  const int art_at = n + n_slack;
  for (int i = 0; i < m; ++i) {
    const Constraint& c = constraints[static_cast<std::size_t>(i)];
    double sign = 1.0;
    if (c.rhs < 0.0) sign = -1.0;
    for (int j = 0; j < n && j < static_cast<int>(c.coeffs.size()); ++j) {
      t.a[i][j] = sign * c.coeffs[static_cast<std::size_t>(j)];
    }
    t.b[i] = sign * c.rhs;
    Relation rel = c.rel;
    if (sign < 0.0) {
      if (rel == Relation::kLe) {
        rel = Relation::kGe;
      } else if (rel == Relation::kGe) {
        rel = Relation::kLe;
      }
    }
    if (rel == Relation::kLe) {
      t.a[i][slack_at] = 1.0;
      ++slack_at;
    } else if (rel == Relation::kGe) {
      t.a[i][slack_at] = -1.0;
      ++slack_at;
    }
    t.a[i][art_at + i] = 1.0;
    t.basis[i] = art_at + i;
  }

  // Phase 1: minimize the artificial sum.
  std::vector<double> phase1(static_cast<std::size_t>(t.cols), 0.0);
  for (int i = 0; i < m; ++i) phase1[static_cast<std::size_t>(art_at + i)] = 1.0;
  if (!simplex_min(t, phase1)) return {};
  double infeas = 0.0;
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] >= art_at) infeas += t.b[i];
  }
  if (infeas > 1e-7) return {};

  // Drive lingering artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] < art_at) continue;
    int col = -1;
    for (int j = 0; j < art_at; ++j) {
      if (std::abs(t.a[i][j]) > kTol) {
        col = j;
        break;
      }
    }
    if (col >= 0) t.pivot(i, col);
  }

  // Phase 2: minimize -objective over structural + slack columns; artificial
  // columns are frozen out with a prohibitive cost.
  std::vector<double> phase2(static_cast<std::size_t>(t.cols), 0.0);
  for (int j = 0; j < n; ++j) phase2[static_cast<std::size_t>(j)] = -objective[static_cast<std::size_t>(j)];
  for (int i = 0; i < m; ++i) phase2[static_cast<std::size_t>(art_at + i)] = 1e30;
  if (!simplex_min(t, phase2)) return {};  // unbounded

  Solution sol;
  sol.feasible = true;
  sol.x.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] < n) sol.x[static_cast<std::size_t>(t.basis[i])] = t.b[i];
  }
  for (int j = 0; j < n; ++j) sol.objective += objective[static_cast<std::size_t>(j)] * sol.x[static_cast<std::size_t>(j)];
  return sol;
}

}  // namespace collab::lp
