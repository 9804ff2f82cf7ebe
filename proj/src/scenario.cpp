#include "collab/scenario.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace collab::sim {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

class Config {
 public:
  explicit Config(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto comment = line.find_first_of("#;");
      if (comment != std::string::npos) line = line.substr(0, comment);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
        }
        section = trim(line.substr(1, line.size() - 2));
        sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      if (section.empty()) throw ConfigError("key '" + key + "' appears before any section");
      values_[section + "." + key] = trim(line.substr(eq + 1));
    }
  }

  bool has_section(const std::string& name) const { return sections_.count(name) > 0; }
  void require_section(const std::string& name) const {
    if (!has_section(name)) throw ConfigError("missing required section '" + name + "'");
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  int get_int(const std::string& key) const {
    const double v = get_double(key);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ConfigError("key '" + key + "' must be an integer");
    return i;
  }
  int get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    try {
      return std::stoull(get_string(key));
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' must be a nonnegative integer");
    }
  }

  std::vector<double> get_list(const std::string& key) const {
    const std::string raw = get_string(key);
    std::vector<double> out;
    std::istringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(to_double(key, item));
    }
    if (out.empty()) throw ConfigError("key '" + key + "' must hold at least one value");
    return out;
  }
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const {
    return has(key) ? get_list(key) : fallback;
  }

 private:
  static double to_double(const std::string& key, const std::string& value) {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' has a non-numeric value '" + value + "'");
    }
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, int> sections_;
};

std::vector<double> broadcast(const std::vector<double>& values, std::size_t n,
                              const std::string& key) {
  if (values.size() == n) return values;
  if (values.size() == 1) return std::vector<double>(n, values[0]);
  throw ConfigError("key '" + key + "' needs 1 or " + std::to_string(n) + " values, got " +
                    std::to_string(values.size()));
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
  const Config cfg(text);
  for (const char* name : {"network", "demand", "mps"}) cfg.require_section(name);

  Scenario scn;

  // [network]
  const int intersections = cfg.get_int("network.intersections");
  if (intersections < 1) throw ConfigError("network.intersections must be >= 1");
  const auto lost = broadcast(cfg.get_list("network.lost_time_s", {12.0}),
                              static_cast<std::size_t>(intersections), "network.lost_time_s");
  const double cruise = cfg.get_double("network.cruise_speed_mps", 12.0);
  if (cruise <= 0.0) throw ConfigError("network.cruise_speed_mps must be positive");
  const double art_cap = cfg.get_double("network.arterial_capacity_vph", 3800.0) / 3600.0;
  const double in_cap =
      cfg.get_double("network.inbound_capacity_vph", art_cap * 3600.0) / 3600.0;
  const double side_cap = cfg.get_double("network.side_capacity_vph", 1700.0) / 3600.0;

  scn.geometry.cycle_min_s = cfg.get_double("network.cycle_min_s", 40.0);
  scn.geometry.cycle_max_s = cfg.get_double("network.cycle_max_s", 180.0);
  scn.geometry.min_green_s = cfg.get_double("network.min_green_s", 5.0);
  scn.geometry.band_alpha = cfg.get_double("network.band_alpha", 1.0);

  const int side_movements = cfg.get_int("network.side_movements", 1);
  if (side_movements < 1) throw ConfigError("network.side_movements must be >= 1");
  for (int i = 0; i < intersections; ++i) {
    signalopt::Intersection node;
    node.lost_time_s = lost[static_cast<std::size_t>(i)];
    node.num_phases = 2;
    scn.geometry.intersections.push_back(node);
    scn.geometry.movements.push_back({i, 0, signalopt::Direction::kOutboundThrough, art_cap});
    scn.geometry.movements.push_back({i, 0, signalopt::Direction::kInboundThrough, in_cap});
    for (int s = 0; s < side_movements; ++s) {
      scn.geometry.movements.push_back({i, 1, signalopt::Direction::kSide, side_cap});
    }
  }

  if (intersections > 1) {
    const auto segments = cfg.get_list("network.segments_m");
    std::vector<double> internode;
    if (segments.size() == static_cast<std::size_t>(intersections - 1)) {
      internode = segments;
    } else if (segments.size() == static_cast<std::size_t>(intersections + 1)) {
      // First and last entries are the approach legs outside the arterial.
      internode.assign(segments.begin() + 1, segments.end() - 1);
    } else {
      throw ConfigError("network.segments_m needs I-1 internode segments (or I+1 with legs)");
    }
    for (double len : internode) {
      scn.geometry.travel_out_s.push_back(len / cruise);
      scn.geometry.travel_in_s.push_back(len / cruise);
    }
  }

  // [demand]
  const double outbound = cfg.get_double("demand.outbound_vph");
  const double inbound = cfg.get_double("demand.inbound_vph");
  const double side = cfg.get_double("demand.side_vph");
  const double prior = cfg.get_double("demand.prior_vph", 200.0);
  scn.prior_rel_sd = cfg.get_double("demand.prior_rel_sd", 0.5);

  const double vf = cfg.get_double("demand.fd_vf_mps", 15.0);
  const double wave = cfg.get_double("demand.fd_w_mps", 6.0);
  const double kj_art = cfg.get_double("demand.fd_kj_art_vpm", 0.30);
  const double kj_side = cfg.get_double("demand.fd_kj_side_vpm", 0.15);
  const int foq_case = cfg.get_int("demand.foq_case", 1);
  if (foq_case != 1 && foq_case != 2) throw ConfigError("demand.foq_case must be 1 or 2");
  scn.upstream_discharge_s = cfg.get_double("demand.upstream_discharge_s", 0.0);

  const auto movement_case = foq_case == 1 ? traffic::FoQCase::kCase1 : traffic::FoQCase::kCase2;
  for (const auto& mv : scn.geometry.movements) {
    const bool is_side = mv.direction == signalopt::Direction::kSide;
    scn.demand_vph.push_back(is_side ? side
                             : mv.direction == signalopt::Direction::kOutboundThrough ? outbound
                                                                                      : inbound);
    scn.prior_vph.push_back(prior);
    scn.fds.push_back({vf, wave, is_side ? kj_side : kj_art});
    scn.movement_case.push_back(movement_case);
  }

  // [mps]
  const int mp_count = cfg.get_int("mps.count");
  if (mp_count < 1) throw ConfigError("mps.count must be >= 1");
  const auto pen = broadcast(cfg.get_list("mps.penetration", {0.2}),
                             static_cast<std::size_t>(mp_count), "mps.penetration");
  const auto beta = broadcast(cfg.get_list("mps.beta", {90.0}), static_cast<std::size_t>(mp_count),
                              "mps.beta");
  const auto kappa = broadcast(cfg.get_list("mps.kappa", {1.0}),
                               static_cast<std::size_t>(mp_count), "mps.kappa");
  std::vector<unsigned> coverage(static_cast<std::size_t>(mp_count), kCoversAll);
  if (cfg.has("mps.coverage")) {
    std::istringstream ss(cfg.get_string("mps.coverage"));
    std::string item;
    std::size_t at = 0;
    while (std::getline(ss, item, ',')) {
      if (at >= coverage.size()) throw ConfigError("key 'mps.coverage' lists too many entries");
      unsigned bits = 0;
      std::istringstream parts(item);
      std::string token;
      while (std::getline(parts, token, '+')) {
        token = trim(token);
        if (token == "outbound") {
          bits |= kCoversOutbound;
        } else if (token == "inbound") {
          bits |= kCoversInbound;
        } else if (token == "side") {
          bits |= kCoversSide;
        } else if (token == "all") {
          bits |= kCoversAll;
        } else if (!token.empty()) {
          throw ConfigError("key 'mps.coverage' has unknown class '" + token + "'");
        }
      }
      if (bits == 0) throw ConfigError("key 'mps.coverage' has an empty entry");
      coverage[at++] = bits;
    }
    if (at != coverage.size()) throw ConfigError("key 'mps.coverage' needs one entry per MP");
  }
  std::vector<std::vector<int>> nodes(static_cast<std::size_t>(mp_count));
  if (cfg.has("mps.coverage_nodes")) {
    std::istringstream ss(cfg.get_string("mps.coverage_nodes"));
    std::string item;
    std::size_t at = 0;
    while (std::getline(ss, item, ',')) {
      if (at >= nodes.size()) throw ConfigError("key 'mps.coverage_nodes' lists too many entries");
      item = trim(item);
      if (item == "all") {
        ++at;
        continue;
      }
      const auto dash = item.find('-');
      try {
        int lo, hi;
        if (dash == std::string::npos) {
          lo = hi = std::stoi(item);
        } else {
          lo = std::stoi(item.substr(0, dash));
          hi = std::stoi(item.substr(dash + 1));
        }
        if (lo < 1 || hi > intersections || lo > hi) {
          throw ConfigError("key 'mps.coverage_nodes' range '" + item + "' outside 1.." +
                            std::to_string(intersections));
        }
        for (int n = lo; n <= hi; ++n) nodes[at].push_back(n - 1);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception&) {
        throw ConfigError("key 'mps.coverage_nodes' has a malformed range '" + item + "'");
      }
      ++at;
    }
    if (at != nodes.size()) throw ConfigError("key 'mps.coverage_nodes' needs one entry per MP");
  }
  for (int k = 0; k < mp_count; ++k) {
    scn.mps.push_back({k + 1, pen[static_cast<std::size_t>(k)], beta[static_cast<std::size_t>(k)],
                       kappa[static_cast<std::size_t>(k)], coverage[static_cast<std::size_t>(k)],
                       nodes[static_cast<std::size_t>(k)]});
  }

  // [game]
  scn.eps_grid = cfg.get_int("game.eps_grid", 8);
  if (scn.eps_grid < 2) throw ConfigError("game.eps_grid must be >= 2");
  scn.eps_lo = cfg.get_double("game.eps_lo", 0.1);
  scn.eps_hi = cfg.get_double("game.eps_hi", 0.9);
  if (!(scn.eps_lo > 0.0 && scn.eps_hi < 1.0 && scn.eps_lo < scn.eps_hi)) {
    throw ConfigError("game.eps_lo/eps_hi must satisfy 0 < lo < hi < 1");
  }
  scn.d_rel_grid = cfg.get_list("game.d_rel_grid", {1.02, 3.0, 10.0});
  if (cfg.has("game.d_abs")) {
    const auto flat = cfg.get_list("game.d_abs");
    if (flat.size() % static_cast<std::size_t>(mp_count) != 0) {
      throw ConfigError("key 'game.d_abs' must list K thresholds per grid point");
    }
    for (std::size_t at = 0; at < flat.size(); at += static_cast<std::size_t>(mp_count)) {
      scn.leader_grid_abs.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(at),
                                       flat.begin() + static_cast<std::ptrdiff_t>(at) +
                                           mp_count);
    }
    scn.d_rel_grid.clear();
  }

  // [dp]
  scn.delta = cfg.get_double("dp.delta", 0.05);
  if (!(scn.delta > 0.0 && scn.delta < 1.0)) throw ConfigError("dp.delta must lie in (0,1)");
  scn.t_max_s = cfg.get_double("dp.t_max_s", 120.0);
  scn.h_max_m = cfg.get_double("dp.h_max_m", 300.0);
  scn.rho_scale = cfg.get_double("dp.rho_scale", 1.0);
  if (scn.rho_scale <= 0.0) throw ConfigError("dp.rho_scale must be positive");
  scn.rho_n = cfg.get_double("dp.rho_n", 1.0);
  if (scn.rho_n <= 0.0) throw ConfigError("dp.rho_n must be positive");

  // [mc]
  scn.samples = cfg.get_int("mc.samples", 64);
  if (scn.samples < 1) throw ConfigError("mc.samples must be >= 1");
  scn.base_seed = cfg.get_u64("mc.seed", 1);
  scn.cycles = cfg.get_int("mc.cycles", 20);
  scn.jitter = cfg.get_double("mc.jitter", 0.1);
  scn.threads = cfg.get_int("mc.threads", 0);

  // [datamap]
  scn.datamap_qhat_vph = cfg.get_list("datamap.qhat_vph", {});
  scn.datamap_q_vph = cfg.get_list("datamap.q_vph", {});
  if (scn.datamap_qhat_vph.empty()) {
    for (double f : {0.5, 0.7, 0.85, 1.0, 1.15, 1.3}) scn.datamap_qhat_vph.push_back(f * outbound);
  }
  if (scn.datamap_q_vph.empty()) scn.datamap_q_vph = scn.datamap_qhat_vph;

  return scn;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Scenario scn = parse_scenario_text(buffer.str());
  scn.name = path;
  return scn;
}

}  // namespace collab::sim
