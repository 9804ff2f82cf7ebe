#pragma once

#include <stdexcept>
#include <string>

namespace collab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Quality requirement unattainable even at maximal budget, or no feasible
// leader choice / band geometry.
struct InfeasibleError : Error {
  using Error::Error;
};

// Best-response iteration failed to settle; signals a utility handle that
// violates the concavity assumption.
struct NonConvergenceError : Error {
  using Error::Error;
};

// Mixed equilibrium search exhausted its refinement schedule.
struct NotFoundError : Error {
  using Error::Error;
};

// An FoQ point lies outside the agreed (t_max, h_max) box.
struct OutOfBoundsError : Error {
  using Error::Error;
};

// Privacy budget outside the open interval (0, 1).
struct BudgetOutOfRangeError : Error {
  using Error::Error;
};

// Perturbed statistics unusable (e.g. lam_t <= 0 after noise).
struct DegenerateStatsError : Error {
  using Error::Error;
};

// Queue exceeds the link, or a critical-ratio sum reaches 1.
struct OversaturatedError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct SingularDesignError : Error {
  using Error::Error;
};

struct EmptyInputError : Error {
  using Error::Error;
};

struct SlopeOutOfRangeError : Error {
  using Error::Error;
};

struct NoDataError : Error {
  using Error::Error;
};

struct InfeasibleMinGreenError : Error {
  using Error::Error;
};

// Scenario/config file problems; the message names the offending key.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace collab
