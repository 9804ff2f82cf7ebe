#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
  const std::string log = (fs::temp_directory_path() / "collab_cli_test_out.txt").string();
  const std::string cmd = std::string(CLI_BIN) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(log);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  result.output = buffer.str();
  return result;
}

std::string data(const std::string& name) { return std::string(TEST_DATA_DIR) + "/" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("surface command emits four files and is seed-deterministic") {
  const auto dir_a = fresh_dir("cli_surface_a");
  const auto dir_b = fresh_dir("cli_surface_b");

  const auto a = run_cli("surface " + data("tiny_2mp.ini") + " --out " + dir_a.string() +
                         " --seed 7");
  REQUIRE(a.exit_code == 0);
  for (const char* name : {"surface.csv", "surface.json", "surface.svg", "manifest.json"}) {
    CHECK(fs::exists(dir_a / name));
  }

  const auto b = run_cli("surface " + data("tiny_2mp.ini") + " --out " + dir_b.string() +
                         " --seed 7");
  REQUIRE(b.exit_code == 0);
  CHECK(slurp((dir_a / "surface.csv").string()) == slurp((dir_b / "surface.csv").string()));
  CHECK(slurp((dir_a / "surface.json").string()) == slurp((dir_b / "surface.json").string()));
  CHECK(slurp((dir_a / "surface.svg").string()) == slurp((dir_b / "surface.svg").string()));

  const auto c = run_cli("surface " + data("tiny_2mp.ini") + " --out " + dir_b.string() +
                         " --seed 8");
  REQUIRE(c.exit_code == 0);
  CHECK(slurp((dir_a / "surface.csv").string()) != slurp((dir_b / "surface.csv").string()));

  // Manifest carries the scenario hash; the hash moves with the content.
  const auto manifest = nlohmann::json::parse(slurp((dir_a / "manifest.json").string()));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 7);
  CHECK(manifest.at("scenario_hash").get<std::string>().size() == 16);
  CHECK(manifest.at("outputs").size() == 3);
}

TEST_CASE("missing section exits 2 and names the section") {
  const auto dir = fresh_dir("cli_badcfg");
  const auto run =
      run_cli("surface " + data("bad_missing_mps.ini") + " --out " + dir.string());
  CHECK(run.exit_code == 2);
  CHECK(run.output.find("mps") != std::string::npos);

  const auto bad_grid =
      run_cli("equilibrium " + data("bad_grid.ini") + " --out " + dir.string());
  CHECK(bad_grid.exit_code == 2);
  CHECK(bad_grid.output.find("eps_grid") != std::string::npos);

  CHECK(run_cli("surface no_such_file.ini --out " + dir.string()).exit_code == 2);

  // Valid config, infeasible physics: computation errors exit 3.
  const auto compute =
      run_cli("surface " + data("bad_compute.ini") + " --out " + dir.string());
  CHECK(compute.exit_code == 3);
  CHECK(compute.output.find("queue") != std::string::npos);
}

TEST_CASE("equilibrium command: regions, strict-only grid, determinism") {
  const auto dir = fresh_dir("cli_eq");
  const auto run = run_cli("equilibrium " + data("tiny_2mp.ini") + " --out " + dir.string() +
                           " --seed 11");
  REQUIRE(run.exit_code == 0);
  const auto game = nlohmann::json::parse(slurp((dir / "equilibrium.json").string()));
  bool has_full = false, has_none = false;
  for (const auto& region : game.at("regions")) {
    const std::string tag = region.at("region").get<std::string>();
    if (tag == "full-share") has_full = true;
    if (tag == "no-share") has_none = true;
  }
  CHECK(has_full);
  CHECK(has_none);

  const auto dir_b = fresh_dir("cli_eq_b");
  const auto again = run_cli("equilibrium " + data("tiny_2mp.ini") + " --out " + dir_b.string() +
                             " --seed 11");
  REQUIRE(again.exit_code == 0);
  CHECK(slurp((dir / "equilibrium.json").string()) ==
        slurp((dir_b / "equilibrium.json").string()));

  const auto strict = run_cli("equilibrium " + data("strict_only.ini") + " --out " +
                              fresh_dir("cli_eq_strict").string());
  REQUIRE(strict.exit_code == 0);
  CHECK(strict.output.find("no-share") != std::string::npos);
  CHECK(strict.output.find("leader value 0.0000") != std::string::npos);
}

TEST_CASE("counterexample command prints the table and verdicts") {
  const auto run = run_cli("counterexample");
  REQUIRE(run.exit_code == 0);
  CHECK(run.output.find("pure NE set: empty") != std::string::npos);
  CHECK(run.output.find("decreasing differences: true") != std::string::npos);
  CHECK(run.output.find("mixed NE probabilities") != std::string::npos);

  // Row (0,0,1) payoffs within the two-decimal rounding of the reference.
  std::istringstream lines(run.output);
  std::string line;
  bool found = false;
  while (std::getline(lines, line)) {
    int x1, x2, x3;
    double u1, u2, u3;
    if (std::sscanf(line.c_str(), " %d %d %d %lf %lf %lf", &x1, &x2, &x3, &u1, &u2, &u3) == 6) {
      if (x1 == 0 && x2 == 0 && x3 == 1) {
        found = true;
        CHECK(std::abs(u1 - 0.70) <= 0.005);
        CHECK(std::abs(u2 - 0.70) <= 0.005);
        CHECK(std::abs(u3 - 0.59) <= 0.005);
      }
    }
  }
  CHECK(found);
}

TEST_CASE("dp command conversions and budget domain") {
  const auto run = run_cli("dp --eps 0.5 --delta 0.01 --b 2");
  REQUIRE(run.exit_code == 0);
  CHECK(run.output.find("count-level budget at b=2: (1, 0.0264872)") != std::string::npos);

  const auto identity = run_cli("dp --eps 0.3 --delta 0.02 --b 1");
  REQUIRE(identity.exit_code == 0);
  CHECK(identity.output.find("count-level budget at b=1: (0.3, 0.02)") != std::string::npos);

  CHECK(run_cli("dp --eps 1.5").exit_code == 2);
  CHECK(run_cli("dp --eps 0.5 --delta 1.5").exit_code == 2);
}

TEST_CASE("maxband command: single node band, infeasible geometry flag") {
  const auto single = run_cli("maxband " + data("single_node.ini"));
  REQUIRE(single.exit_code == 0);
  // One intersection: b = 1 - r with r implied by the printed solution; the
  // zeta values collapse to zero.
  CHECK(single.output.find("zeta 0.000000") != std::string::npos);
  double b = 0.0;
  REQUIRE(std::sscanf(single.output.c_str() + single.output.find("outbound bandwidth"),
                      "outbound bandwidth b = %lf", &b) == 1);
  CHECK(b > 0.0);
  CHECK(b < 1.0);

  const auto infeasible = run_cli("maxband " + data("infeasible_band.ini"));
  REQUIRE(infeasible.exit_code == 0);
  CHECK(infeasible.output.find("zero-band fallback") != std::string::npos);
}

TEST_CASE("manifest hash tracks the scenario content") {
  const auto dir_a = fresh_dir("cli_hash_a");
  const auto dir_b = fresh_dir("cli_hash_b");
  REQUIRE(run_cli("datamap " + data("tiny_2mp.ini") + " --out " + dir_a.string()).exit_code == 0);
  REQUIRE(run_cli("datamap " + data("tiny_2mp.ini") + " --out " + dir_b.string()).exit_code == 0);
  const auto ma = nlohmann::json::parse(slurp((dir_a / "manifest.json").string()));
  const auto mb = nlohmann::json::parse(slurp((dir_b / "manifest.json").string()));
  CHECK(ma.at("scenario_hash") == mb.at("scenario_hash"));

  // A byte-level change to the scenario moves the hash.
  const fs::path edited = dir_a / "edited.ini";
  std::ofstream out(edited, std::ios::binary);
  out << slurp(data("tiny_2mp.ini")) << "\n# trailing note\n";
  out.close();
  const auto dir_c = fresh_dir("cli_hash_c");
  REQUIRE(run_cli("datamap " + edited.string() + " --out " + dir_c.string()).exit_code == 0);
  const auto mc = nlohmann::json::parse(slurp((dir_c / "manifest.json").string()));
  CHECK(ma.at("scenario_hash") != mc.at("scenario_hash"));
}

TEST_CASE("datamap command deterministic") {
  const auto dir_a = fresh_dir("cli_map_a");
  const auto dir_b = fresh_dir("cli_map_b");
  REQUIRE(run_cli("datamap " + data("tiny_2mp.ini") + " --out " + dir_a.string() + " --seed 5")
              .exit_code == 0);
  REQUIRE(run_cli("datamap " + data("tiny_2mp.ini") + " --out " + dir_b.string() + " --seed 5")
              .exit_code == 0);
  CHECK(slurp((dir_a / "datamap.csv").string()) == slurp((dir_b / "datamap.csv").string()));
  CHECK(slurp((dir_a / "datamap.json").string()) == slurp((dir_b / "datamap.json").string()));
}
