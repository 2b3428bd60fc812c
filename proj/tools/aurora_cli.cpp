#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "aurora/commands.hpp"

namespace {

// Runs `fn` against stdout or a file, depending on whether --output was given.
template <class Fn>
int with_output(const std::string& path, Fn&& fn) {
  if (path.empty()) return fn(std::cout);
  std::ostringstream buffer;
  const int code = fn(buffer);
  if (code != aurora::cli::kExitOk) return code;
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write '" << path << "'\n";
    return aurora::cli::kExitFailure;
  }
  out << buffer.str();
  return aurora::cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = aurora::cli;
  CLI::App app{"Empirical Bayes means from replicated measurements"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t threads = 1;
  app.add_option("--seed", seed, "Seed for simulation and kNN jitter")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // estimate
  auto* estimate = app.add_subcommand("estimate", "Per-unit estimates from a replicate CSV");
  cli::EstimateArgs est;
  std::string est_output, methods_csv, js_center = "grand_mean";
  bool no_positive_part = false;
  estimate->add_option("--input", est.input, "CSV, one row per unit, one column per replicate")->required();
  estimate->add_option("--output", est_output, "Output CSV (default: stdout)");
  estimate->add_option("--methods", methods_csv, "Comma-separated: " + aurora::method_list())->required();
  estimate->add_option("--k-max", est.options.k_max, "Largest k for aurora-knn")->capture_default_str();
  estimate->add_option("--sigma2", est.options.sigma2, "Noise variance per replicate (js)");
  estimate->add_option("--trim", est.options.trim, "Per-tail trim fraction (trimmed)")->capture_default_str();
  estimate->add_option("--js-center", js_center, "zero | grand_mean")->capture_default_str();
  estimate->add_flag("--no-positive-part", no_positive_part, "Do not clamp the js factor at 0");
  estimate->add_option("--knn-jitter", est.options.knn_jitter, "Random tie-break coordinate U[0, eps]");
  estimate->add_flag("--allow-b2", est.csv.allow_b2, "Accept two replicates per unit");
  estimate->add_flag("--has-header", est.csv.has_header, "First line is a header");
  estimate->add_flag("--id-column", est.csv.id_column, "First column holds unit ids");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo risk of estimators on a scenario");
  cli::SimulateArgs sim;
  std::string sim_output, resolved;
  simulate->add_option("--config", sim.config_path, "Scenario JSON")->required();
  simulate->add_option("--output", sim_output, "Report file (default: stdout)");
  simulate->add_option("--format", sim.format, "csv | json")->capture_default_str();
  simulate->add_option("--resolved-config", resolved,
                       "Where to echo the config with defaults (default: <output>.config.json)");

  // weights
  auto* weights = app.add_subcommand("weights", "Auroral coefficients per held-out replicate");
  cli::WeightsArgs wts;
  std::string wts_output;
  weights->add_option("--input", wts.input, "Replicate CSV")->required();
  weights->add_option("--output", wts_output, "Output CSV (default: stdout)");
  weights->add_flag("--has-header", wts.csv.has_header, "First line is a header");
  weights->add_flag("--id-column", wts.csv.id_column, "First column holds unit ids");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Closed-form benchmarks");
  cli::OracleArgs orc;
  std::size_t n_units = 0;
  oracle->add_option("family", orc.family, "normal-normal | van-trees | lstat")->required();
  oracle->add_option("--A", orc.A, "Prior variance");
  oracle->add_option("--sigma2", orc.sigma2, "Noise variance");
  oracle->add_option("--m0", orc.m0, "Prior mean");
  oracle->add_option("--K", orc.K, "Replicates per unit");
  oracle->add_option("--n", n_units, "Units (adds single-holdout risks)");
  oracle->add_option("--If", orc.I_f, "Fisher information of the noise");
  oracle->add_option("--Ig", orc.I_g, "Fisher information of the prior");
  oracle->add_option("--lstat-family", orc.lstat_family, "gaussian | logistic")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  if (*estimate) {
    std::stringstream ss(methods_csv);
    for (std::string m; std::getline(ss, m, ',');)
      if (!m.empty()) est.methods.push_back(m);
    if (js_center == "zero")
      est.options.js_center = aurora::JsCenter::zero;
    else if (js_center != "grand_mean") {
      std::cerr << "error: --js-center must be zero or grand_mean\n";
      return cli::kExitUsage;
    }
    est.options.js_positive_part = !no_positive_part;
    est.options.seed = seed;
    est.options.threads = threads;
    return with_output(est_output, [&](std::ostream& out) { return cli::cmd_estimate(est, out, std::cerr); });
  }
  if (*simulate) {
    if (app.get_option("--seed")->count() > 0) sim.seed = seed;
    if (app.get_option("--threads")->count() > 0) sim.threads = threads;
    if (!resolved.empty())
      sim.resolved_config_path = resolved;
    else if (!sim_output.empty())
      sim.resolved_config_path = sim_output + ".config.json";
    return with_output(sim_output, [&](std::ostream& out) { return cli::cmd_simulate(sim, out, std::cerr); });
  }
  if (*weights) {
    wts.threads = threads;
    return with_output(wts_output, [&](std::ostream& out) { return cli::cmd_weights(wts, out, std::cerr); });
  }
  if (oracle->count("--n") > 0) orc.n = n_units;
  return cli::cmd_oracle(orc, std::cout, std::cerr);
}
