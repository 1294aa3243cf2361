#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rrpcp/harness.hpp"
#include "rrpcp/io.hpp"
#include "rrpcp/testing/validate.hpp"

namespace {

int cmd_generate(const std::string& config, const std::string& out, const std::string& format,
                 long long seed) {
  auto cfg = rrpcp::io::load_run_config(config);
  if (seed >= 0) cfg.scenario.seed = static_cast<std::uint64_t>(seed);
  auto seq = rrpcp::model::generate_sequence(cfg.scenario);
  if (format == "csv")
    rrpcp::io::write_dataset_csv(out, seq);
  else if (format == "bin")
    rrpcp::io::write_dataset_binary(out, seq);
  else
    throw std::invalid_argument("unknown format: " + format);
  std::cout << "wrote " << seq.frames.size() << " frames to " << out << "\n";
  return 0;
}

int cmd_run(const std::string& config, const std::vector<std::string>& methods,
            const std::string& out, long long seed) {
  auto cfg = rrpcp::io::load_run_config(config);
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& s : methods) cfg.methods.push_back(rrpcp::harness::method_from_name(s));
  }
  std::uint64_t trial_seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : cfg.scenario.seed;
  auto metrics = rrpcp::harness::run_single(cfg, trial_seed);
  rrpcp::io::write_run_csv(out, metrics);
  for (const auto& [method, run] : metrics.methods) {
    double sum = 0.0;
    int used = 0;
    for (const auto& f : run.frames)
      if (!std::isnan(f.percentage_error)) {
        sum += f.percentage_error;
        ++used;
      }
    std::cout << rrpcp::harness::method_name(method) << ": " << run.frames.size() << " frames, "
              << "mean error " << (used ? sum / used : 0.0) << " over " << used
              << " foreground frames\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_mc(const std::string& config, int trials, const std::string& out, long long seed) {
  auto cfg = rrpcp::io::load_run_config(config);
  if (trials > 0) cfg.trials = trials;
  if (seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed);
  auto mc = rrpcp::harness::run_monte_carlo(cfg);
  rrpcp::io::write_mc_csv(out, mc);
  std::cout << "averaged " << cfg.trials << " trials, wrote " << out << "\n";
  return 0;
}

int cmd_validate(long long seed) {
  auto results =
      rrpcp::testing::validate_all(seed >= 0 ? static_cast<std::uint64_t>(seed) : 20250810ULL);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

int cmd_noise_curve(double f, double theta, int dt_max, int trials, const std::string& out,
                    long long seed) {
  auto rows = rrpcp::harness::noise_curve(f, theta, dt_max, trials,
                                          seed >= 0 ? static_cast<std::uint64_t>(seed) : 7ULL);
  if (out.empty()) {
    rrpcp::harness::write_noise_curve_csv(std::cout, rows);
  } else {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    rrpcp::harness::write_noise_curve_csv(os, rows);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rrpcp: streaming low-rank + sparse decomposition workbench"};
  app.require_subcommand(1);

  std::string config, out, format = "csv";
  std::vector<std::string> methods;
  long long seed = -1;
  int trials = -1;
  double f = 0.9, theta = 0.4;
  int dt_max = 30, nc_trials = 20000;

  auto* gen = app.add_subcommand("generate", "generate a dataset and dump it to disk");
  gen->add_option("--config", config, "scenario or run config (JSON)")->required();
  gen->add_option("--out", out, "output path")->required();
  gen->add_option("--format", format, "csv or bin")->capture_default_str();
  gen->add_option("--seed", seed, "override the scenario seed");

  auto* run = app.add_subcommand("run", "single run, per-frame metrics CSV");
  run->add_option("--config", config, "run config (JSON)")->required();
  run->add_option("--method", methods, "methods to run (nc, basic, pj, modcs)")->delimiter(',');
  run->add_option("--out", out, "output CSV path")->required();
  run->add_option("--seed", seed, "trial seed (default: scenario seed)");

  auto* mc = app.add_subcommand("mc", "Monte Carlo averaging across trials");
  mc->add_option("--config", config, "run config (JSON)")->required();
  mc->add_option("--trials", trials, "number of trials (default: config)");
  mc->add_option("--out", out, "output CSV path")->required();
  mc->add_option("--seed", seed, "master seed (default: config)");

  auto* val = app.add_subcommand("validate", "solver-vs-oracle and invariant suites");
  val->add_option("--seed", seed, "suite seed");

  auto* nc = app.add_subcommand("noise-curve", "analytic vs empirical residual energies");
  nc->add_option("--f", f, "AR coefficient")->capture_default_str();
  nc->add_option("--theta", theta, "initial-variance fraction")->capture_default_str();
  nc->add_option("--dt-max", dt_max, "frames after the change")->capture_default_str();
  nc->add_option("--trials", nc_trials, "Monte Carlo trials")->capture_default_str();
  nc->add_option("--out", out, "output CSV path (default: stdout)");
  nc->add_option("--seed", seed, "Monte Carlo seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(config, out, format, seed);
    if (run->parsed()) return cmd_run(config, methods, out, seed);
    if (mc->parsed()) return cmd_mc(config, trials, out, seed);
    if (val->parsed()) return cmd_validate(seed);
    if (nc->parsed()) return cmd_noise_curve(f, theta, dt_max, nc_trials, out, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
