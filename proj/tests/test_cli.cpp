#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "discfb/io.hpp"

using namespace discfb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("discfb_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DISCFB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string solve_config(const fs::path& out, int max_iters = 200) {
  io::json j = {{"model", {{"kind", "planar2d"}, {"epsilon", 0.1}}},
                {"p", 0.0},
                {"grid", {{"n_r", 25}, {"n_theta", 48}, {"r_min", 1.0 / 64.0}}},
                {"boundary", {{"kind", "discrete_profile"}}},
                {"tolerances", {{"max_iters", max_iters}}},
                {"output", {{"dir", out.string()}, {"prefix", "run"}}}};
  if (max_iters == 1) j["tolerances"]["residual_tol"] = 1e-14;
  return j.dump(2);
}

}  // namespace

TEST(Cli, ProfileWritesArcLength) {
  const fs::path dir = scratch("profile");
  ASSERT_EQ(run_cli("profile --p 0 --epsilon 0.1 --method closed --out " + dir.string()), 0);
  const io::json j = io::parse_json(io::read_text(dir / "profile.json"), "profile.json");
  EXPECT_NEAR(j.at("alpha").get<double>(), 3.2155225956360494, 1e-14);
  ASSERT_EQ(run_cli("profile --p 0.5 --epsilon 0.2 --method ode --prefix ode --out " + dir.string()), 0);
  const io::json o = io::parse_json(io::read_text(dir / "ode.json"), "ode.json");
  EXPECT_NEAR(o.at("alpha").get<double>(), 3.358503816725428, 1e-9);
  EXPECT_EQ(run_cli("profile --p 0.5 --method closed --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("profile --p 1.5 --method ode --out " + dir.string()), 1);
}

TEST(Cli, ScanFindsSingleHit) {
  const fs::path dir = scratch("scan");
  ASSERT_EQ(run_cli("scan --out " + dir.string()), 0);
  const io::json j = io::parse_json(io::read_text(dir / "rigidity.json"), "rigidity.json");
  ASSERT_EQ(j.at("hits").size(), 1u);
  EXPECT_EQ(j.at("hits")[0].get<double>(), 0.0);
}

TEST(Cli, UsageErrors) {
  const fs::path dir = scratch("usage");
  EXPECT_NE(run_cli(""), 0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("solve " + (dir / "missing.json").string()), 1);
  io::write_text(dir / "mal.json", "{\n  \"p\": 0.0,\n");
  EXPECT_EQ(run_cli("solve " + (dir / "mal.json").string()), 1);
  io::write_text(dir / "typo.json", R"({"p": 0.0, "grdi": {}})");
  EXPECT_EQ(run_cli("solve " + (dir / "typo.json").string()), 1);
  EXPECT_EQ(run_cli("analyze " + (dir / "nothing.csv").string() + " -a growth"), 1);
}

TEST(Cli, SolveIsDeterministicAndAnalyzable) {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  io::write_text(a / "cfg.json", solve_config(a));
  io::write_text(b / "cfg.json", solve_config(b));
  ASSERT_EQ(run_cli("solve " + (a / "cfg.json").string()), 0);
  ASSERT_EQ(run_cli("--threads 1 solve " + (b / "cfg.json").string()), 0);
  EXPECT_EQ(io::read_text(a / "run.csv"), io::read_text(b / "run.csv"));
  EXPECT_EQ(io::read_text(a / "run.free_boundary.csv"), io::read_text(b / "run.free_boundary.csv"));
  const io::json rep = io::parse_json(io::read_text(a / "run.report.json"), "report");
  EXPECT_EQ(rep.at("status").get<std::string>(), "converged");

  for (const char* an : {"growth", "blowup", "spruck"}) {
    ASSERT_EQ(run_cli("analyze " + (a / "run.csv").string() + " -a " + an), 0) << an;
    EXPECT_TRUE(fs::exists(a / (std::string("run.") + an + ".json"))) << an;
    EXPECT_TRUE(fs::exists(a / (std::string("run.") + an + ".csv"))) << an;
  }
  const io::json growth = io::parse_json(io::read_text(a / "run.growth.json"), "growth");
  EXPECT_NEAR(growth.at("fitted_beta").get<double>(), 2.0, 1e-6);
  const io::json spruck = io::parse_json(io::read_text(a / "run.spruck.json"), "spruck");
  EXPECT_LT(spruck.at("total_functional").get<double>(), 1e-10);
  EXPECT_EQ(run_cli("analyze " + (a / "run.csv").string() + " -a nonsense"), 1);
}

TEST(Cli, NonConvergenceExitsWithTwo) {
  const fs::path dir = scratch("fail");
  io::json j = io::json::parse(solve_config(dir, 1));
  j["boundary"]["kind"] = "homogeneous_profile";
  io::write_text(dir / "cfg.json", j.dump());
  EXPECT_EQ(run_cli("solve " + (dir / "cfg.json").string()), 2);
  const io::json rep = io::parse_json(io::read_text(dir / "run.report.json"), "report");
  EXPECT_EQ(rep.at("status").get<std::string>(), "failed");
  EXPECT_FALSE(rep.at("iteration_log").empty());
}
