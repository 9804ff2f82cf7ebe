#include "collab/counterexample.hpp"

#include <cmath>

namespace collab::game {

std::vector<FollowerSpec> no_pure_ne_counterexample() {
  const double b = 1.0099;
  const double c1 = 0.161, c2 = 0.1545, c3 = 0.1102;
  const double g12 = 1.0622, g13 = 0.0979;
  const double g21 = 0.0521, g23 = 0.5048;
  const double g31 = 0.9145, g32 = 0.2694;

  auto common = [b](const std::vector<double>& z) {
    return std::log(z[0] + z[1] + z[2] + b);
  };
  std::vector<FollowerSpec> followers(3);
  followers[0] = {1, 0.0,
                  [=](const std::vector<double>& z) {
                    return common(z) - c1 * z[0] - g12 * z[0] * z[1] - g13 * z[0] * z[2];
                  },
                  1.0};
  followers[1] = {2, 0.0,
                  [=](const std::vector<double>& z) {
                    return common(z) - c2 * z[1] - g21 * z[1] * z[0] - g23 * z[1] * z[2];
                  },
                  1.0};
  followers[2] = {3, 0.0,
                  [=](const std::vector<double>& z) {
                    return common(z) - c3 * z[2] - g31 * z[2] * z[0] - g32 * z[2] * z[1];
                  },
                  1.0};
  return followers;
}

}  // namespace collab::game
