#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "acceptance.hpp"
#include "runio.hpp"

namespace fs = std::filesystem;
using namespace critshe;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("critshe_runio_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CRITSHE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += (c == '\n');
  return n;
}

}  // namespace

TEST_CASE("real formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 4.9e-324, 1.0}) {
    CHECK(std::strtod(cli::format_real(v).c_str(), nullptr) == v);
  }
}

TEST_CASE("csv table") {
  cli::CsvTable t({"a", "b"});
  t.add_row(std::vector<double>{1.0, 0.5});
  t.add_row(std::vector<std::string>{"x", "y"});
  CHECK(t.rows() == 2);
  CHECK(t.str() == "a,b\n1,0.5\nx,y\n");
}

TEST_CASE("atomic write replaces content and leaves no temporaries") {
  const fs::path dir = scratch("atomic");
  cli::write_atomic(dir / "out.txt", "first");
  cli::write_atomic(dir / "out.txt", "second");
  CHECK(slurp(dir / "out.txt") == "second");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
}

TEST_CASE("configuration loading") {
  const fs::path dir = scratch("config");
  {
    std::ofstream(dir / "run.toml") << "eps = 0.1\nseed = 7\n[x0]\nconstant = 2.0\n";
    std::ofstream(dir / "run.json") << R"({"eps": 0.1, "seed": 7, "x0": {"constant": 2.0}})";
  }
  const cli::Json toml = cli::load_config(dir / "run.toml");
  const cli::Json json = cli::load_config(dir / "run.json");
  CHECK(toml["eps"].get<double>() == 0.1);
  CHECK(toml["seed"].get<long long>() == 7);
  CHECK(toml["x0"]["constant"].get<double>() == 2.0);
  CHECK(toml == json);
  std::ofstream(dir / "bad.toml") << "eps = = 1\n";
  CHECK_THROWS(cli::load_config(dir / "bad.toml"));
}

TEST_CASE("suite names") {
  CHECK(verify::parse_suite("analytic") == verify::Suite::analytic);
  CHECK(verify::parse_suite("duality") == verify::Suite::duality);
  CHECK(verify::parse_suite("all") == verify::Suite::all);
  CHECK_THROWS_AS(verify::parse_suite("everything"), std::invalid_argument);
  CHECK(verify::criteria().size() == 12);
}

TEST_CASE("command line exit codes and outputs") {
  const fs::path dir = scratch("cli");
  const fs::path log = dir / "log.txt";

  REQUIRE(run_cli("kernels --beta 1.0 --out-dir " + (dir / "k1").string(), log) == 0);
  const std::string first = slurp(dir / "k1" / "s_beta.csv");
  CHECK(count_lines(first) == 51);
  CHECK(fs::exists(dir / "k1" / "manifest.json"));
  REQUIRE(run_cli("kernels --beta 1.0 --out-dir " + (dir / "k2").string(), log) == 0);
  CHECK(slurp(dir / "k2" / "s_beta.csv") == first);

  CHECK(run_cli("kernels --beta 0 --out-dir " + (dir / "k3").string(), log) == 1);
  CHECK(run_cli("kernels --beta 1 --tau-grid nonsense --out-dir " + (dir / "k4").string(), log) == 1);
  CHECK(run_cli("frobnicate", log) == 1);

  CHECK(run_cli("simulate --eps 0.2 --T 0.04 --dt 0.5 --out-dir " + (dir / "s").string(), log) == 2);
  CHECK(slurp(log).find("dt") != std::string::npos);

  REQUIRE(run_cli("duality --n 1 --eps 0.2 --t 0.1 --paths 500 --seed 3 --out-dir " + (dir / "d").string(), log) == 0);
  CHECK(fs::exists(dir / "d" / "duality.csv"));
  CHECK(run_cli("duality --n 7 --eps 0.2 --t 0.1 --out-dir " + (dir / "d2").string(), log) == 1);
}
