#pragma once

#include <string>

#include "collab/collab_sim.hpp"

namespace collab::sim {

// Parse the sectioned key = value scenario format (sections: network, demand,
// mps, game, dp, mc, datamap; see docs/schema.md). Throws ConfigError naming
// the offending section or key.
Scenario parse_scenario_text(const std::string& text);
Scenario load_scenario(const std::string& path);

}  // namespace collab::sim
