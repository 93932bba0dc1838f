#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "acceptance.hpp"
#include "critshe/dbg.hpp"
#include "critshe/duality_mc.hpp"
#include "critshe/mollifier.hpp"
#include "critshe/she_sim.hpp"
#include "runio.hpp"

namespace fs = std::filesystem;
using namespace critshe;
using critshe::cli::CsvTable;
using critshe::cli::Json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kPass = 0, kUsage = 1, kGate = 2, kAcceptance = 3 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// "log:a:b:n" or "lin:a:b:n".
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 4 || (parts[0] != "log" && parts[0] != "lin")) {
    throw UsageError("grid must look like log:a:b:n or lin:a:b:n, got '" + spec + "'");
  }
  double a, b;
  long n;
  try {
    a = std::stod(parts[1]);
    b = std::stod(parts[2]);
    n = std::stol(parts[3]);
  } catch (const std::exception&) {
    throw UsageError("cannot read numbers in grid '" + spec + "'");
  }
  if (n < 1 || !(b >= a)) throw UsageError("grid needs n >= 1 and b >= a");
  if (parts[0] == "log" && !(a > 0.0)) throw UsageError("log grid needs a > 0");
  std::vector<double> out;
  for (long i = 0; i < n; ++i) {
    const double u = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    out.push_back(parts[0] == "log" ? std::exp(std::log(a) + u * (std::log(b) - std::log(a))) : a + u * (b - a));
  }
  return out;
}

InitialData initial_data_from(const Json& j) {
  if (j.is_number()) return InitialData::constant(j.get<double>());
  if (j.contains("constant")) return InitialData::constant(j.at("constant").get<double>());
  if (j.contains("bumps")) {
    std::vector<GaussianBump> bumps;
    for (const auto& b : j.at("bumps")) {
      GaussianBump g;
      g.weight = b.value("weight", 1.0);
      g.variance = b.value("variance", 1.0);
      if (b.contains("center")) g.center = {b.at("center").at(0).get<double>(), b.at("center").at(1).get<double>()};
      bumps.push_back(g);
    }
    return InitialData::mixture(bumps);
  }
  throw UsageError("x0 must be a number, {constant = c} or {bumps = [...]}");
}

std::shared_ptr<const PhiKernel> phi_for(const std::string& name) {
  if (name == "reference") return reference_phi();
  return std::make_shared<const PhiKernel>(build_phi(mollifier_by_name(name)));
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void finish(cli::RunManifest m, const fs::path& dir, const Timer& timer) {
  m.version = kVersion;
  m.wall_seconds = timer.seconds();
  cli::write_manifest(dir / "manifest.json", m);
}

// ---------------------------------------------------------------------------

struct KernelsArgs {
  double beta = 0.0;
  std::string tau_grid = "log:1e-3:10:50";
  std::string x_grid = "lin:0:2:21";
  double t = 0.5;
  double g_variance = 0.5;
  std::string out = "critshe-out/kernels";
};

int cmd_kernels(const KernelsArgs& a, const std::string& command) {
  if (!(a.beta > 0.0)) throw UsageError("--beta must be positive");
  if (!(a.t > 0.0) || !(a.g_variance > 0.0)) throw UsageError("--t and --g-variance must be positive");
  const Timer timer;
  const fs::path dir(a.out);
  const SBetaKernel kernel(a.beta);
  CsvTable s_table({"tau", "s_beta"});
  for (double tau : parse_grid(a.tau_grid)) s_table.add_row(std::vector<double>{tau, kernel(tau)});
  const InitialData g = InitialData::mixture({{1.0, {0.0, 0.0}, a.g_variance}});
  CsvTable m_table({"x", "t", "m_g"}), k_table({"x", "t", "K1"});
  for (double x : parse_grid(a.x_grid)) {
    m_table.add_row(std::vector<double>{x, a.t, m_g(kernel, g, {x, 0.0}, a.t)});
    k_table.add_row(std::vector<double>{x, a.t, K1(kernel, g, {x, 0.0}, a.t)});
  }
  cli::write_atomic(dir / "s_beta.csv", s_table.str());
  cli::write_atomic(dir / "m_g.csv", m_table.str());
  cli::write_atomic(dir / "K1.csv", k_table.str());
  cli::RunManifest m;
  m.command = command;
  m.config = {{"beta", a.beta}, {"tau_grid", a.tau_grid}, {"x_grid", a.x_grid}, {"t", a.t}, {"g_variance", a.g_variance}};
  m.outputs = {"s_beta.csv", "m_g.csv", "K1.csv"};
  finish(m, dir, timer);
  std::cout << "wrote " << s_table.rows() << " rows to " << (dir / "s_beta.csv").string() << "\n";
  return kPass;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<double> eps, lambda, T, box, dt;
  std::optional<int> grid_n, replicas;
  std::optional<unsigned long long> seed;
  std::string out = "critshe-out/simulate";
  bool dump_field = false;
};

int cmd_simulate(const SimulateArgs& a, const std::string& command) {
  Json file = Json::object();
  if (!a.config.empty()) file = cli::load_config(a.config);
  auto pick = [&](const std::optional<double>& flag, const char* key, double fallback) {
    return flag ? *flag : file.value(key, fallback);
  };
  const double eps = pick(a.eps, "eps", 0.1);
  const double lambda = pick(a.lambda, "lambda", 0.0);
  const double T = pick(a.T, "T", 0.25);
  const double box = pick(a.box, "box_size", 6.4);
  const int grid_n = a.grid_n ? *a.grid_n : file.value("grid_n", 256);
  const int replicas = a.replicas ? *a.replicas : file.value("n_replicas", 8);
  const unsigned long long seed = a.seed ? *a.seed : file.value("seed", 1ULL);
  const Timer timer;
  SimConfig cfg = make_sim_config(eps, lambda, T, grid_n, box, replicas, seed,
                                  phi_for(file.value("mollifier", std::string("reference"))));
  cfg.dt = pick(a.dt, "dt", eps * eps / 10.0);
  if (file.contains("x0")) cfg.x0 = initial_data_from(file.at("x0"));
  cfg.validate();
  const auto runs = simulate(cfg);
  std::vector<FieldSnapshot> finals;
  double worst_negative = 0.0, mean_field = 0.0;
  for (const auto& r : runs) {
    finals.push_back(r.back());
    worst_negative = std::max(worst_negative, r.back().negative_fraction);
    double acc = 0.0;
    for (double v : r.back().values) acc += v;
    mean_field += acc / r.back().values.size() / runs.size();
  }
  if (worst_negative > 0.01) {
    std::cerr << "warning: " << 100.0 * worst_negative
              << "% of cells are negative in some replica; consider a smaller dt\n";
  }
  CsvTable est({"name", "mean", "stderr", "n"});
  if (finals.size() >= 2) {
    const Estimate m2 = moment2_estimator(finals, {0.0, 0.0}, {0.0, 0.0}, true);
    est.add_row(std::vector<std::string>{"moment2_spatial", cli::format_real(m2.mean), cli::format_real(m2.std_err),
                                         std::to_string(m2.n_samples)});
  }
  est.add_row(std::vector<std::string>{"mean_field", cli::format_real(mean_field), "", std::to_string(finals.size())});
  est.add_row(std::vector<std::string>{"max_negative_fraction", cli::format_real(worst_negative), "",
                                       std::to_string(finals.size())});
  const fs::path dir(a.out);
  cli::write_atomic(dir / "estimates.csv", est.str());
  cli::RunManifest m;
  m.command = command;
  m.config = {{"eps", eps},          {"lambda", lambda}, {"T", T},       {"grid_n", grid_n}, {"box_size", box},
              {"dt", cfg.dt},        {"n_replicas", replicas},           {"coupling", cfg.params.coupling},
              {"beta", cfg.params.beta}};
  m.seed = seed;
  m.outputs = {"estimates.csv"};
  if (a.dump_field) {
    CsvTable field({"x_index", "y_index", "value"});
    const auto& s = finals.front();
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.n; ++j) field.add_row(std::vector<double>{double(i), double(j), s.at(i, j)});
    }
    cli::write_atomic(dir / "field_replica0.csv", field.str());
    m.outputs.push_back("field_replica0.csv");
  }
  finish(m, dir, timer);
  std::cout << est.str();
  return kPass;
}

// ---------------------------------------------------------------------------

struct DualityArgs {
  int n = 2;
  double eps = 0.1, lambda = 0.0, t = 0.25, spacing = 0.0;
  long long paths = 100000;
  unsigned long long seed = 1;
  std::optional<double> substep;
  std::string out = "critshe-out/duality";
};

int cmd_duality(const DualityArgs& a, const std::string& command) {
  if (a.n < 1 || a.n > 4) throw UsageError("--n must be between 1 and 4");
  const Timer timer;
  PathConfig cfg = make_path_config(a.eps, a.lambda, a.t, a.paths, a.seed);
  if (a.substep) cfg.substep = *a.substep;
  MomentRequest req;
  req.t = a.t;
  for (int i = 0; i < a.n; ++i) req.points.push_back({i * a.spacing, 0.0});
  const Estimate e = n_point_moment(req, cfg);
  CsvTable out({"estimate", "stderr", "n", "N", "eps", "lambda", "t", "substep", "spacing", "seed"});
  out.add_row(std::vector<std::string>{cli::format_real(e.mean), cli::format_real(e.std_err),
                                       std::to_string(e.n_samples), std::to_string(a.n), cli::format_real(a.eps),
                                       cli::format_real(a.lambda), cli::format_real(a.t),
                                       cli::format_real(cfg.substep), cli::format_real(a.spacing),
                                       std::to_string(a.seed)});
  const fs::path dir(a.out);
  cli::write_atomic(dir / "duality.csv", out.str());
  cli::RunManifest m;
  m.command = command;
  m.config = {{"N", a.n}, {"eps", a.eps}, {"lambda", a.lambda}, {"t", a.t}, {"paths", a.paths},
              {"substep", cfg.substep}, {"spacing", a.spacing}};
  m.seed = a.seed;
  m.outputs = {"duality.csv"};
  finish(m, dir, timer);
  std::cout << out.str();
  return kPass;
}

// ---------------------------------------------------------------------------

int cmd_verify(const std::string& suite_name, const std::string& out_dir, const std::string& command) {
  const verify::Suite suite = verify::parse_suite(suite_name);
  const Timer timer;
  const auto results = verify::run_suite(suite, [](const verify::CriterionResult& r) {
    std::cout << verify::format_line(r) << std::endl;
  });
  CsvTable table({"id", "passed", "seconds", "detail"});
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    std::string detail = r.detail;
    for (char& c : detail) {
      if (c == ',') c = ';';
    }
    table.add_row(std::vector<std::string>{r.id, r.passed ? "1" : "0", cli::format_real(r.seconds), detail});
  }
  const fs::path dir(out_dir);
  cli::write_atomic(dir / "verify.csv", table.str());
  cli::RunManifest m;
  m.command = command;
  m.config = {{"suite", suite_name}};
  m.outputs = {"verify.csv"};
  finish(m, dir, timer);
  return all ? kPass : kAcceptance;
}

int cmd_report(const std::string& dir) {
  const fs::path csv = fs::path(dir) / "verify.csv";
  std::ifstream in(csv);
  if (!in) throw UsageError("no verify.csv in " + dir + "; run `critshe verify --out-dir " + dir + "` first");
  std::string line;
  std::getline(in, line);
  int pass = 0, fail = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, passed, seconds, detail;
    std::getline(ss, id, ',');
    std::getline(ss, passed, ',');
    std::getline(ss, seconds, ',');
    std::getline(ss, detail);
    const bool ok = passed == "1";
    (ok ? pass : fail)++;
    std::printf("%-4s %s %8.1f s  %s\n", id.c_str(), ok ? "PASS" : "FAIL", std::stod(seconds), detail.c_str());
  }
  std::printf("%d passed, %d failed\n", pass, fail);
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream mf(manifest);
    const Json j = Json::parse(mf);
    std::printf("run: %s (version %s, %.1f s)\n", j.value("command", std::string()).c_str(),
                j.value("version", std::string()).c_str(), j.value("wall_seconds", 0.0));
  }
  return fail == 0 ? kPass : kAcceptance;
}

std::string joined(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for the critical two-dimensional stochastic heat equation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  KernelsArgs ka;
  auto* kernels = app.add_subcommand("kernels", "tabulate s_beta, m_g and K1");
  kernels->add_option("--beta", ka.beta, "kernel parameter beta > 0")->required();
  kernels->add_option("--tau-grid", ka.tau_grid, "log:a:b:n or lin:a:b:n");
  kernels->add_option("--x-grid", ka.x_grid, "grid of |x| for m_g and K1");
  kernels->add_option("--t", ka.t, "time for m_g and K1");
  kernels->add_option("--g-variance", ka.g_variance, "variance of the Gaussian initial profile");
  kernels->add_option("--out-dir", ka.out, "output directory");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "run the lattice simulator");
  sim->add_option("--config", sa.config, "TOML or JSON configuration");
  sim->add_option("--eps", sa.eps);
  sim->add_option("--lambda", sa.lambda);
  sim->add_option("--T", sa.T);
  sim->add_option("--box", sa.box);
  sim->add_option("--dt", sa.dt);
  sim->add_option("--grid-n", sa.grid_n);
  sim->add_option("--replicas", sa.replicas);
  sim->add_option("--seed", sa.seed);
  sim->add_option("--out-dir", sa.out);
  sim->add_flag("--dump-field", sa.dump_field, "write replica 0's final field");

  DualityArgs da;
  auto* dual = app.add_subcommand("duality", "Feynman-Kac estimate of an N-point moment");
  dual->add_option("--n", da.n, "number of points (1-4)");
  dual->add_option("--eps", da.eps);
  dual->add_option("--lambda", da.lambda);
  dual->add_option("--t", da.t);
  dual->add_option("--paths", da.paths);
  dual->add_option("--seed", da.seed);
  dual->add_option("--substep", da.substep);
  dual->add_option("--spacing", da.spacing, "points sit at (i * spacing, 0)");
  dual->add_option("--out-dir", da.out);

  std::string suite = "all", verify_out = "critshe-out/verify";
  auto* ver = app.add_subcommand("verify", "run the acceptance suite");
  ver->add_option("--suite", suite, "analytic, duality or all");
  ver->add_option("--out-dir", verify_out);

  std::string report_dir = "critshe-out/verify";
  auto* rep = app.add_subcommand("report", "summarise a verify run");
  rep->add_option("--dir", report_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }
  const std::string command = joined(argc, argv);
  try {
    if (*kernels) return cmd_kernels(ka, command);
    if (*sim) return cmd_simulate(sa, command);
    if (*dual) return cmd_duality(da, command);
    if (*ver) return cmd_verify(suite, verify_out, command);
    if (*rep) return cmd_report(report_dir);
  } catch (const GateViolation& e) {
    std::cerr << "gate violation: " << e.what() << "\n";
    return kGate;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
