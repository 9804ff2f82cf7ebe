#include "collab/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace collab::sim {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw Error("write to " + path + " failed");
}

// Five-stop ramp from cold to warm; good enough for a static heatmap.
std::string ramp_color(double t) {
  static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140},
                                     {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0);
  const double at = t * 4.0;
  const int lo = std::min(3, static_cast<int>(at));
  const double f = at - lo;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(stops[lo][0] + f * (stops[lo + 1][0] - stops[lo][0])),
                static_cast<int>(stops[lo][1] + f * (stops[lo + 1][1] - stops[lo][1])),
                static_cast<int>(stops[lo][2] + f * (stops[lo + 1][2] - stops[lo][2])));
  return buf;
}

}  // namespace

std::string fnv1a_hex(const std::string& content) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : content) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return fnv1a_hex(buffer.str());
}

void export_surface_csv(const UtilitySurface& surface, const Scenario& scn,
                        const std::string& path) {
  const auto rows = full_share_rows(surface, scn);
  const int k = surface.num_mps;
  std::ostringstream out;
  for (int i = 0; i < k; ++i) out << "eps_" << (i + 1) << ",";
  out << "u_ma";
  for (int i = 0; i < k; ++i) out << ",w_mp_" << (i + 1);
  for (int i = 0; i < k; ++i) out << ",u_mp_" << (i + 1);
  for (int i = 0; i < k; ++i) out << ",share_" << (i + 1);
  out << ",se_ma\n";
  for (const auto& row : rows) {
    for (int i = 0; i < k; ++i) out << fmt(row.eps[static_cast<std::size_t>(i)]) << ",";
    out << fmt(row.u_ma);
    for (int i = 0; i < k; ++i) out << "," << fmt(row.w_mp[static_cast<std::size_t>(i)]);
    for (int i = 0; i < k; ++i) out << "," << fmt(row.u_mp[static_cast<std::size_t>(i)]);
    for (int i = 0; i < k; ++i) out << "," << row.share[static_cast<std::size_t>(i)];
    out << "," << fmt(row.se_ma) << "\n";
  }
  write_file(path, out.str());
}

void export_surface_json(const UtilitySurface& surface, const Scenario& scn,
                         const std::string& path) {
  nlohmann::ordered_json j;
  j["eps_axis"] = surface.eps_axis;
  j["num_mps"] = surface.num_mps;
  j["samples"] = surface.samples;
  j["base_seed"] = surface.base_seed;
  j["delay_old_s"] = surface.delay_old;

  auto patterns = nlohmann::ordered_json::array();
  for (const auto& pat : surface.patterns) {
    nlohmann::ordered_json p;
    p["mask"] = pat.mask;
    p["axis_mps"] = pat.axis_mps;
    p["u1"] = pat.u1;
    p["se"] = pat.se;
    p["degenerate_rate"] = pat.degenerate_rate;
    patterns.push_back(std::move(p));
  }
  j["patterns"] = std::move(patterns);

  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : full_share_rows(surface, scn)) {
    nlohmann::ordered_json r;
    r["eps"] = row.eps;
    r["u_ma"] = row.u_ma;
    r["w_mp"] = row.w_mp;
    r["u_mp"] = row.u_mp;
    r["share"] = row.share;
    r["se_ma"] = row.se_ma;
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  write_file(path, j.dump(2) + "\n");
}

UtilitySurface surface_from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  UtilitySurface surface;
  surface.eps_axis = j.at("eps_axis").get<std::vector<double>>();
  surface.num_mps = j.at("num_mps").get<int>();
  surface.samples = j.at("samples").get<int>();
  surface.base_seed = j.at("base_seed").get<std::uint64_t>();
  surface.delay_old = j.at("delay_old_s").get<double>();
  for (const auto& p : j.at("patterns")) {
    PatternSurface pat;
    pat.mask = p.at("mask").get<std::uint32_t>();
    pat.axis_mps = p.at("axis_mps").get<std::vector<int>>();
    pat.u1 = p.at("u1").get<std::vector<double>>();
    pat.se = p.at("se").get<std::vector<double>>();
    pat.degenerate_rate = p.at("degenerate_rate").get<std::vector<double>>();
    surface.patterns.push_back(std::move(pat));
  }
  return surface;
}

UtilitySurface surface_from_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return surface_from_json_text(buffer.str());
}

void export_surface_svg(const UtilitySurface& surface, const Scenario& scn,
                        const std::string& path) {
  const int grid = static_cast<int>(surface.eps_axis.size());
  const std::uint32_t full = (1u << surface.num_mps) - 1u;
  const PatternSurface& pat = surface.patterns[full];

  // Render the first two axes; higher axes (K > 2) are pinned to their last
  // grid value, a one-MP surface becomes a single row.
  const int nx = grid;
  const int ny = surface.num_mps >= 2 ? grid : 1;
  auto value_at = [&](int ix, int iy) {
    std::size_t index = 0;
    const int dims = static_cast<int>(pat.axis_mps.size());
    for (int d = 0; d < dims; ++d) {
      int coord = grid - 1;
      if (d == 0) coord = ix;
      if (d == 1) coord = iy;
      index = index * static_cast<std::size_t>(grid) + static_cast<std::size_t>(coord);
    }
    return pat.u1[index];
  };

  double lo = 1e300, hi = -1e300;
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) {
      lo = std::min(lo, value_at(x, y));
      hi = std::max(hi, value_at(x, y));
    }
  }
  if (hi <= lo) hi = lo + 1.0;

  const int cell = 48;
  const int margin_left = 70, margin_bottom = 50, margin_top = 40, margin_right = 90;
  const int width = margin_left + nx * cell + margin_right;
  const int height = margin_top + ny * cell + margin_bottom;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << margin_left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">"
      << "Leader utility (delay improvement, s/veh)</text>\n";

  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) {
      const double v = value_at(x, y);
      const double t = (v - lo) / (hi - lo);
      const int px = margin_left + x * cell;
      const int py = margin_top + (ny - 1 - y) * cell;
      svg << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cell << "\" height=\""
          << cell << "\" fill=\"" << ramp_color(t) << "\"><title>" << fmt(v)
          << "</title></rect>\n";
    }
  }

  for (int x = 0; x < nx; ++x) {
    svg << "<text x=\"" << margin_left + x * cell + cell / 2 << "\" y=\""
        << margin_top + ny * cell + 18
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">"
        << fmt(surface.eps_axis[static_cast<std::size_t>(x)]) << "</text>\n";
  }
  svg << "<text x=\"" << margin_left + nx * cell / 2 << "\" y=\""
      << margin_top + ny * cell + 38
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">eps_1</text>\n";
  if (ny > 1) {
    for (int y = 0; y < ny; ++y) {
      svg << "<text x=\"" << margin_left - 8 << "\" y=\""
          << margin_top + (ny - 1 - y) * cell + cell / 2 + 4
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
          << fmt(surface.eps_axis[static_cast<std::size_t>(y)]) << "</text>\n";
    }
    svg << "<text x=\"16\" y=\"" << margin_top + ny * cell / 2
        << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
        << margin_top + ny * cell / 2 << ")\" text-anchor=\"middle\">eps_2</text>\n";
  }

  // Colorbar.
  const int bar_x = margin_left + nx * cell + 24;
  const int bar_h = ny * cell;
  for (int i = 0; i < bar_h; ++i) {
    const double t = 1.0 - static_cast<double>(i) / std::max(1, bar_h - 1);
    svg << "<rect x=\"" << bar_x << "\" y=\"" << margin_top + i
        << "\" width=\"16\" height=\"1.5\" fill=\"" << ramp_color(t) << "\"/>\n";
  }
  svg << "<text x=\"" << bar_x + 22 << "\" y=\"" << margin_top + 10
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(hi) << "</text>\n";
  svg << "<text x=\"" << bar_x + 22 << "\" y=\"" << margin_top + bar_h
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(lo) << "</text>\n";
  svg << "</svg>\n";
  (void)scn;
  write_file(path, svg.str());
}

void export_map_csv(const DataUtilityMap& map, const std::string& path) {
  std::ostringstream out;
  out << "qhat_vph,q_vph,delay_s\n";
  std::size_t at = 0;
  for (double qhat : map.qhat_vph) {
    for (double q : map.q_vph) {
      out << fmt(qhat) << "," << fmt(q) << "," << fmt(map.delay_s[at++]) << "\n";
    }
  }
  write_file(path, out.str());
}

void export_map_json(const DataUtilityMap& map, const std::string& path) {
  nlohmann::ordered_json j;
  j["qhat_vph"] = map.qhat_vph;
  j["q_vph"] = map.q_vph;
  j["delay_s"] = map.delay_s;
  write_file(path, j.dump(2) + "\n");
}

void export_game_json(const GameOutcome& outcome, const Scenario& scn, const std::string& path) {
  nlohmann::ordered_json j;
  j["phi_coeff"] = outcome.phi_coeff;
  j["leader_choice_d"] = outcome.sne.leader_choice;
  j["leader_value_s"] = outcome.sne.leader_value;
  j["participation"] = outcome.sne.follower_profile.a;
  j["eps"] = outcome.sne.follower_profile.z;
  j["mixed"] = outcome.sne.mixed.has_value();
  if (outcome.sne.mixed) {
    j["mixed_probs"] = outcome.sne.mixed->probs;
    j["mixed_regret"] = outcome.sne.mixed->regret;
  }
  j["best_index"] = outcome.best_index;

  auto regions = nlohmann::ordered_json::array();
  for (const auto& entry : outcome.regions) {
    nlohmann::ordered_json r;
    r["d"] = entry.d;
    r["floors"] = entry.floors;
    r["region"] = entry.region;
    r["a"] = entry.a;
    r["eps"] = entry.eps;
    r["leader_value_s"] = entry.leader_value;
    r["mixed"] = entry.mixed;
    if (entry.mixed) r["mixed_probs"] = entry.mixed_probs;
    regions.push_back(std::move(r));
  }
  j["regions"] = std::move(regions);
  (void)scn;
  write_file(path, j.dump(2) + "\n");
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["scenario_path"] = manifest.scenario_path;
  j["scenario_hash"] = manifest.scenario_hash;
  j["seed"] = manifest.seed;
  j["command"] = manifest.command;
  j["outputs"] = manifest.outputs;
  j["duration_ms"] = manifest.duration_ms;
  if (!manifest.phi_coeff.empty()) j["phi_coeff"] = manifest.phi_coeff;
  write_file(path, j.dump(2) + "\n");
}

}  // namespace collab::sim
