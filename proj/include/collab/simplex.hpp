#pragma once

#include <vector>

namespace collab::lp {

enum class Relation { kLe, kEq, kGe };

struct Constraint {
  std::vector<double> coeffs;
  Relation rel = Relation::kLe;
  double rhs = 0.0;
};

struct Solution {
  bool feasible = false;
  std::vector<double> x;
  double objective = 0.0;
};

// Maximize c'x subject to the constraints and x >= 0. Two-phase dense simplex
// with Bland's rule; sized for the small subproblems the band optimizer emits.
Solution maximize(const std::vector<double>& objective, const std::vector<Constraint>& constraints);

}  // namespace collab::lp
