#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#ifndef STEERODE_CLI_PATH
#error "STEERODE_CLI_PATH must point at the command line binary"
#endif

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(STEERODE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(raw != -1);
  return WEXITSTATUS(raw);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "steerode_cli_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("no arguments prints usage and exits nonzero") {
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
}

TEST_CASE("invalid configuration is a usage error, not a crash") {
  // Window wider than the integration interval.
  CHECK(run_cli("stiff --b 0.2 --dt 0.125 --epochs 1") == 1);
  // Misspelled key.
  CHECK(run_cli("stiff --hiden 5 --epochs 1") == 1);
}

TEST_CASE("gradient check subcommand passes and stamps its artifact") {
  const fs::path dir = fresh_dir("gradcheck");
  CHECK(run_cli("gradcheck --outdir " + dir.string()) == 0);
  const std::string csv = slurp(dir / "gradcheck.csv");
  CHECK(csv.rfind("# artifact_version", 0) == 0);
  CHECK(csv.find("case,max_rel_err,threshold,pass") != std::string::npos);
}

TEST_CASE("same seed and config give byte-identical artifacts anywhere") {
  const fs::path a = fresh_dir("stiff_a");
  const fs::path b = fresh_dir("stiff_b");
  const std::string base =
      "stiff --hidden 8 --n_train 16 --epochs 2 --seed 7 --outdir ";
  REQUIRE(run_cli(base + a.string()) == 0);
  REQUIRE(run_cli(base + b.string()) == 0);
  for (const char* leaf :
       {"stiff_run.csv", "stiff_history.csv", "stiff_trajectory.csv"}) {
    CHECK(slurp(a / leaf) == slurp(b / leaf));
  }
}

TEST_CASE("contraction and flow subcommands run end to end") {
  const fs::path pd = fresh_dir("picard");
  CHECK(run_cli("picard --trials 100 --n 10000 --outdir " + pd.string()) == 0);
  CHECK(fs::exists(pd / "contraction.csv"));
  CHECK(fs::exists(pd / "triangular.csv"));

  const fs::path cd = fresh_dir("cnf");
  CHECK(run_cli("cnf1d --hidden 4 --layers 1 --n_train 32 --batch 8 "
                "--epochs 2 --eval_points 101 --rtol 1e-3 --atol 1e-5 "
                "--outdir " +
                cd.string()) == 0);
  CHECK(fs::exists(cd / "cnf_history.csv"));
  CHECK(fs::exists(cd / "cnf_trajectories.csv"));
  CHECK(fs::exists(cd / "cnf_density.svg"));
}
