#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collab/collab_sim.hpp"

namespace collab::sim {

// Surface artifacts. CSV columns: eps_1..eps_K, u_ma, w_mp_k.., u_mp_k..,
// share_k.., se_ma over the full-share grid; JSON additionally carries every
// sharing pattern so the in-memory surface round-trips.
void export_surface_csv(const UtilitySurface& surface, const Scenario& scn,
                        const std::string& path);
void export_surface_json(const UtilitySurface& surface, const Scenario& scn,
                         const std::string& path);
UtilitySurface surface_from_json_text(const std::string& text);
UtilitySurface surface_from_json(const std::string& path);
void export_surface_svg(const UtilitySurface& surface, const Scenario& scn,
                        const std::string& path);

void export_map_csv(const DataUtilityMap& map, const std::string& path);
void export_map_json(const DataUtilityMap& map, const std::string& path);

void export_game_json(const GameOutcome& outcome, const Scenario& scn, const std::string& path);

// 64-bit FNV-1a content hash, hex-encoded.
std::string fnv1a_hex(const std::string& content);
std::string file_hash(const std::string& path);

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
  std::string scenario_path;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  std::string command;
  std::vector<std::string> outputs;
  double duration_ms = 0.0;
  std::vector<double> phi_coeff;  // populated by game runs
};

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace collab::sim
