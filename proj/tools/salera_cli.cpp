// salera: training runs, hyperparameter grids and verification checks.
//
//   salera train --config run.cfg [--seed N] [--out DIR] [--set key=value ...]
//   salera grid --spec grid.cfg --seeds 5 --jobs 4 [--out DIR]
//   salera verify moments|zeta|gradcheck
//   salera analyze-zeta --cconst 0.01 --out curve.csv

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

#include "salera/analysis.hpp"
#include "salera/harness.hpp"

namespace {

int cmd_train(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& out,
              const std::vector<std::string>& overrides) {
  salera::RunConfig cfg = salera::load_run_config(config);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw salera::ParameterError("--set expects key=value, got '" + kv + "'");
    salera::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
  const auto m = salera::run_training(cfg);
  std::cout << salera::summary_line(m.summary);
  return 0;
}

int cmd_grid(const std::string& spec_path, std::size_t seeds, unsigned jobs, const std::string& out) {
  const auto spec = salera::load_grid_spec(spec_path);
  const auto g = salera::run_grid(spec, seeds, jobs, out);
  salera::write_grid_cells_csv(std::cout, g);
  for (const auto& b : g.best)
    std::cout << "best model=" << b.model << " optimizer=" << b.optimizer << " epoch=" << b.epoch_mark
              << " cell=" << b.cell << " mean=" << b.mean << " std=" << b.std << '\n';
  for (const auto& r : g.failure_rates)
    std::cout << "failed optimizer=" << r.optimizer << " runs=" << r.runs << " failed=" << r.failed
              << " rate=" << r.rate() << '\n';
  return 0;
}

int cmd_verify(const std::string& kind, std::uint64_t reps, unsigned threads) {
  std::vector<salera::Check> checks;
  if (kind == "moments")
    checks = salera::verify_moments(reps, 2024, threads);
  else if (kind == "zeta")
    checks = salera::verify_zeta();
  else
    checks = salera::verify_gradcheck();
  const bool ok = salera::print_checks(std::cout, checks);
  std::size_t passed = 0;
  for (const auto& c : checks) passed += c.pass;
  std::cout << "verify " << kind << ' ' << passed << '/' << checks.size() << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? 0 : 1;
}

int cmd_analyze_zeta(double c, const std::string& out) {
  const auto curve = salera::argmin_J(c, salera::zeta_grid());
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  salera::write_cost_csv(f, curve);
  std::cout << "C=" << c << " zeta_star=" << curve.zeta_star << " J_star=" << curve.cost_star << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agnostic learning-rate adaptation with catastrophe recovery: experiments and checks"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run one training configuration");
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  train->add_option("--config", config, "key=value run configuration")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Run seed (overrides the file)");
  train->add_option("--out", out, "Output directory for CSV files and summary");
  train->add_option("--set", overrides, "Extra key=value override, repeatable");

  auto* grid = app.add_subcommand("grid", "Run a hyperparameter grid over seeds");
  std::string spec;
  std::size_t seeds = 5;
  unsigned jobs = 1;
  grid->add_option("--spec", spec, "Grid specification file")->required()->check(CLI::ExistingFile);
  grid->add_option("--seeds", seeds, "Seeds per cell")->check(CLI::PositiveNumber);
  grid->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  grid->add_option("--out", out, "Output directory");

  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  std::string kind;
  std::uint64_t reps = 10000;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  verify->add_option("kind", kind, "moments | zeta | gradcheck")
      ->required()
      ->check(CLI::IsMember({"moments", "zeta", "gradcheck"}));
  verify->add_option("--reps", reps, "Monte Carlo replicas (moments)")->check(CLI::Range(100, 100000000));
  verify->add_option("--threads", threads, "Monte Carlo threads (moments)")->check(CLI::PositiveNumber);

  auto* zeta = app.add_subcommand("analyze-zeta", "Write the cost curve J(zeta) as CSV");
  double cconst = 0.01;
  zeta->add_option("--cconst", cconst, "Cost ratio constant C")->required()->check(CLI::PositiveNumber);
  zeta->add_option("--out", out, "CSV output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, seed, out, overrides);
    if (*grid) return cmd_grid(spec, seeds, jobs, out);
    if (*verify) return cmd_verify(kind, reps, threads);
    if (*zeta) return cmd_analyze_zeta(cconst, out);
  } catch (const std::exception& e) {
    std::cerr << "salera: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
