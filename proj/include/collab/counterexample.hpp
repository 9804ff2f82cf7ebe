#pragma once

#include <vector>

#include "collab/game_core.hpp"

namespace collab::game {

// Three-player binary participation game whose payoffs have decreasing
// differences yet admit no pure equilibrium. Floors are pinned at 1 so the
// lower stage is forced to z = a and the table is exactly the closed-form
// payoff matrix.
std::vector<FollowerSpec> no_pure_ne_counterexample();

}  // namespace collab::game
