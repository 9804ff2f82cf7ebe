#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "collab/collab_sim.hpp"
#include "collab/counterexample.hpp"
#include "collab/dp_mechanism.hpp"
#include "collab/export.hpp"
#include "collab/game_core.hpp"
#include "collab/scenario.hpp"
#include "collab/signal_opt.hpp"

namespace {

using namespace collab;

constexpr int kExitConfig = 2;
constexpr int kExitCompute = 3;

struct CommonOptions {
  std::string scenario_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  std::optional<int> grid;
  std::optional<int> threads;
};

sim::Scenario load_with_overrides(const CommonOptions& opts) {
  sim::Scenario scn = sim::load_scenario(opts.scenario_path);
  if (opts.seed) scn.base_seed = *opts.seed;
  if (opts.samples) scn.samples = *opts.samples;
  if (opts.grid) scn.eps_grid = *opts.grid;
  if (opts.threads) scn.threads = *opts.threads;
  return scn;
}

class ManifestWriter {
 public:
  ManifestWriter(const CommonOptions& opts, const std::string& command)
      : start_(std::chrono::steady_clock::now()) {
    manifest_.scenario_path = opts.scenario_path;
    manifest_.scenario_hash = sim::file_hash(opts.scenario_path);
    manifest_.command = command;
  }

  void set_seed(std::uint64_t seed) { manifest_.seed = seed; }
  void set_phi(const std::vector<double>& coeff) { manifest_.phi_coeff = coeff; }
  void add_output(const std::string& path) { manifest_.outputs.push_back(path); }

  void write(const std::string& path) {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    manifest_.duration_ms =
        std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count() / 1000.0;
    sim::write_manifest(manifest_, path);
  }

 private:
  sim::RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

int cmd_surface(const CommonOptions& opts) {
  const sim::Scenario scn = load_with_overrides(opts);
  ensure_out_dir(opts.out_dir);
  ManifestWriter manifest(opts, "surface");
  manifest.set_seed(scn.base_seed);

  const auto surface = sim::utility_surface(scn);
  const std::string csv = join_path(opts.out_dir, "surface.csv");
  const std::string json = join_path(opts.out_dir, "surface.json");
  const std::string svg = join_path(opts.out_dir, "surface.svg");
  sim::export_surface_csv(surface, scn, csv);
  sim::export_surface_json(surface, scn, json);
  sim::export_surface_svg(surface, scn, svg);
  manifest.add_output(csv);
  manifest.add_output(json);
  manifest.add_output(svg);
  manifest.write(join_path(opts.out_dir, "manifest.json"));
  std::printf("surface: %zu patterns, %d x %d grid, baseline delay %.4f s/veh\n",
              surface.patterns.size(), scn.eps_grid, scn.eps_grid, surface.delay_old);
  std::printf("wrote %s, %s, %s\n", csv.c_str(), json.c_str(), svg.c_str());
  return 0;
}

int cmd_equilibrium(const CommonOptions& opts) {
  const sim::Scenario scn = load_with_overrides(opts);
  ensure_out_dir(opts.out_dir);
  ManifestWriter manifest(opts, "equilibrium");
  manifest.set_seed(scn.base_seed);

  const auto surface = sim::utility_surface(scn);
  const auto game = sim::run_game(scn, surface);
  manifest.set_phi(game.phi_coeff);

  const std::string json = join_path(opts.out_dir, "equilibrium.json");
  sim::export_game_json(game, scn, json);
  manifest.add_output(json);
  manifest.write(join_path(opts.out_dir, "manifest.json"));

  std::printf("regions:\n");
  for (const auto& entry : game.regions) {
    std::printf("  d = (");
    for (std::size_t i = 0; i < entry.d.size(); ++i) {
      std::printf("%s%.6g", i ? ", " : "", entry.d[i]);
    }
    std::printf(")  %-13s leader value %.4f\n", entry.region.c_str(), entry.leader_value);
  }
  std::printf("equilibrium: leader value %.4f s/veh, participation (", game.sne.leader_value);
  for (std::size_t i = 0; i < game.sne.follower_profile.a.size(); ++i) {
    std::printf("%s%d", i ? ", " : "", game.sne.follower_profile.a[i]);
  }
  std::printf("), budgets (");
  for (std::size_t i = 0; i < game.sne.follower_profile.z.size(); ++i) {
    std::printf("%s%.4f", i ? ", " : "", game.sne.follower_profile.z[i]);
  }
  std::printf(")\nwrote %s\n", json.c_str());
  return 0;
}

int cmd_counterexample() {
  const auto followers = game::no_pure_ne_counterexample();
  const auto table = game::upper_stage_value_table(followers);
  std::printf("x1 x2 x3        U1       U2       U3\n");
  for (std::uint32_t mask = 0; mask < 8; ++mask) {
    std::printf(" %u  %u  %u  %8.4f %8.4f %8.4f\n", mask & 1u, (mask >> 1) & 1u, (mask >> 2) & 1u,
                table.value(mask, 0), table.value(mask, 1), table.value(mask, 2));
  }
  const auto pure = game::pure_ne(table);
  std::printf("pure NE set: %s\n", pure.empty() ? "empty" : "nonempty");
  const auto diff = game::decreasing_differences_check(table);
  std::printf("decreasing differences: %s (worst violation %.3g)\n",
              diff.decreasing ? "true" : "false", diff.worst_violation);
  const auto mixed = game::mixed_ne(table);
  std::printf("mixed NE probabilities: (%.6f, %.6f, %.6f), regret %.3g\n", mixed.probs[0],
              mixed.probs[1], mixed.probs[2], mixed.regret);
  return 0;
}

int cmd_dp(double eps, double delta, int b, double t_max, double h_max, double rho_scale,
           double rho_n) {
  const auto weights = dp::SensitivityWeights::balanced(t_max, h_max, rho_scale, rho_n);
  const double delta_f = dp::l2_sensitivity(weights);
  const double sigma = dp::gaussian_sigma(delta_f, {eps, delta});
  const auto sds = dp::noise_sds(weights, {eps, delta});
  const auto count_budget = dp::traj_to_count_budget(eps, delta, b);
  std::printf("query sensitivity Delta_f = %.6g\n", delta_f);
  std::printf("mechanism sigma_f = %.6g\n", sigma);
  std::printf("component noise sd: lam_t %.6g, lam_th %.6g, lam_h %.6g, n %.6g\n", sds.sd_t,
              sds.sd_th, sds.sd_h, sds.sd_n);
  std::printf("trajectory-level budget: (%.6g, %.6g)\n", eps, delta);
  std::printf("count-level budget at b=%d: (%.6g, %.6g)\n", b, count_budget.first,
              count_budget.second);
  return 0;
}

int cmd_maxband(const CommonOptions& opts) {
  const sim::Scenario scn = load_with_overrides(opts);
  const auto ctx = sim::build_context(scn);
  const auto pb = signalopt::build_plan(ctx.demand_vps, scn.geometry);
  std::printf("cycle %.2f s\n", pb.plan.cycle_s);
  if (!pb.band.feasible) {
    std::printf("zero-band fallback: no loop-integer combination admits a band\n");
  }
  std::printf("outbound bandwidth b = %.6f cycles, inbound b = %.6f cycles, objective %.6f\n",
              pb.band.b_out, pb.band.b_in, pb.band.objective);
  for (int i = 0; i < scn.geometry.count(); ++i) {
    std::printf("  node %d: zeta %.6f, zeta_in %.6f, offset %.2f s\n", i + 1,
                pb.band.zeta_out[static_cast<std::size_t>(i)],
                pb.band.zeta_in[static_cast<std::size_t>(i)],
                pb.plan.offsets_s[static_cast<std::size_t>(i)]);
  }
  for (std::size_t i = 0; i < pb.band.loop_m.size(); ++i) {
    std::printf("  loop integer M_%zu = %d\n", i + 1, pb.band.loop_m[i]);
  }
  return 0;
}

int cmd_datamap(const CommonOptions& opts) {
  const sim::Scenario scn = load_with_overrides(opts);
  ensure_out_dir(opts.out_dir);
  ManifestWriter manifest(opts, "datamap");
  manifest.set_seed(scn.base_seed);

  const auto map = sim::data_utility_map(scn, scn.datamap_qhat_vph, scn.datamap_q_vph);
  const std::string csv = join_path(opts.out_dir, "datamap.csv");
  const std::string json = join_path(opts.out_dir, "datamap.json");
  sim::export_map_csv(map, csv);
  sim::export_map_json(map, json);
  manifest.add_output(csv);
  manifest.add_output(json);
  manifest.write(join_path(opts.out_dir, "manifest.json"));
  std::printf("datamap: %zu x %zu grid\nwrote %s, %s\n", map.qhat_vph.size(), map.q_vph.size(),
              csv.c_str(), json.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving data-collaboration simulator for arterial signal retiming"};
  app.require_subcommand(1);

  CommonOptions surface_opts, equilibrium_opts, maxband_opts, datamap_opts;

  auto add_common = [](CLI::App* cmd, CommonOptions& opts, bool needs_out) {
    cmd->add_option("scenario", opts.scenario_path, "scenario file")->required();
    if (needs_out) {
      cmd->add_option("--out", opts.out_dir, "output directory")->required();
    }
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&opts](const std::uint64_t& v) { opts.seed = v; }, "base seed override");
    cmd->add_option_function<int>(
        "--samples", [&opts](const int& v) { opts.samples = v; }, "Monte Carlo samples override");
    cmd->add_option_function<int>(
        "--grid", [&opts](const int& v) { opts.grid = v; }, "budget grid points override");
    cmd->add_option_function<int>(
        "--threads", [&opts](const int& v) { opts.threads = v; }, "worker threads (0 = cores)");
  };

  CLI::App* surface = app.add_subcommand("surface", "Monte Carlo utility surface over budgets");
  add_common(surface, surface_opts, true);

  CLI::App* equilibrium =
      app.add_subcommand("equilibrium", "leader-follower equilibrium and region table");
  add_common(equilibrium, equilibrium_opts, true);

  CLI::App* counterexample = app.add_subcommand(
      "counterexample", "three-player table with decreasing differences and no pure equilibrium");

  double dp_eps = 0.5, dp_delta = 0.05, dp_tmax = 120.0, dp_hmax = 300.0, dp_rho = 1.0,
         dp_rho_n = 1.0;
  int dp_b = 1;
  CLI::App* dpc = app.add_subcommand("dp", "mechanism sensitivity, sigma, budget conversion");
  dpc->add_option("--eps", dp_eps, "privacy budget epsilon")->required();
  dpc->add_option("--delta", dp_delta, "privacy parameter delta");
  dpc->add_option("--b", dp_b, "count-level adjacency size");
  dpc->add_option("--t-max", dp_tmax, "time bound, s");
  dpc->add_option("--h-max", dp_hmax, "position bound, m");
  dpc->add_option("--rho-scale", dp_rho, "weight scale on the Lambda components");
  dpc->add_option("--rho-n", dp_rho_n, "weight on the count component");

  CLI::App* maxband = app.add_subcommand("maxband", "band optimization at the true demands");
  add_common(maxband, maxband_opts, false);

  CLI::App* datamap = app.add_subcommand("datamap", "expected delay over (estimated, true) demand");
  add_common(datamap, datamap_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (surface->parsed()) return cmd_surface(surface_opts);
    if (equilibrium->parsed()) return cmd_equilibrium(equilibrium_opts);
    if (counterexample->parsed()) return cmd_counterexample();
    if (dpc->parsed()) return cmd_dp(dp_eps, dp_delta, dp_b, dp_tmax, dp_hmax, dp_rho, dp_rho_n);
    if (maxband->parsed()) return cmd_maxband(maxband_opts);
    if (datamap->parsed()) return cmd_datamap(datamap_opts);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const BudgetOutOfRangeError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitCompute;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitCompute;
  }
  return 0;
}
