#pragma once

// Batch commands behind the `aurora` executable. Each returns the process
// exit code: 0 success, 1 runtime failure, 2 usage error. Diagnostics go to
// `err`, never to `out`.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "aurora/error.hpp"
#include "aurora/estimators.hpp"
#include "aurora/io.hpp"
#include "aurora/oracles.hpp"
#include "aurora/simlab.hpp"

namespace aurora::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct EstimateArgs {
  std::string input;
  std::vector<std::string> methods;
  MethodOptions options;
  CsvOptions csv;
};

inline int cmd_estimate(const EstimateArgs& args, std::ostream& out, std::ostream& err) {
  if (args.methods.empty()) {
    err << "error: no methods given; valid methods: " << method_list() << '\n';
    return kExitUsage;
  }
  for (const auto& m : args.methods)
    if (!is_method(m)) {
      err << "error: unknown method '" << m << "'; valid methods: " << method_list() << '\n';
      return kExitUsage;
    }
  std::optional<LoadedReplicates> loaded;
  try {
    loaded = read_replicates_csv(args.input, args.csv);
  } catch (const Error& e) {
    err << "error: " << args.input << ": " << e.what() << '\n';
    return kExitFailure;
  }
  std::vector<EstimateVector> columns;
  for (const auto& m : args.methods) {
    try {
      if (m == "auroral" && loaded->data.n() <= loaded->data.B())
        err << "warning: auroral with n=" << loaded->data.n() << " <= B=" << loaded->data.B()
            << " interpolates the held-out replicate\n";
      columns.push_back(run_method(m, loaded->data, args.options));
    } catch (const Error& e) {
      err << "error: method " << m << " failed: " << e.what() << '\n';
      return kExitFailure;
    }
  }
  write_estimates_csv(out, loaded->unit_ids, args.methods, columns);
  return kExitOk;
}

struct SimulateArgs {
  std::string config_path;
  std::string format = "csv";  // csv | json
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> resolved_config_path;  // sidecar with defaults filled
};

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  if (args.format != "csv" && args.format != "json") {
    err << "error: --format must be csv or json\n";
    return kExitUsage;
  }
  ScenarioConfig config;
  try {
    std::ifstream in(args.config_path);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open '" + args.config_path + "'");
    config = parse_config(in);
    if (args.seed) config.seed = *args.seed;
    if (args.threads) config.options.threads = *args.threads;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  if (args.resolved_config_path) {
    std::ofstream side(*args.resolved_config_path);
    if (!side) {
      err << "error: cannot write '" << *args.resolved_config_path << "'\n";
      return kExitFailure;
    }
    side << config_to_json(config).dump(2) << '\n';
  }
  RiskReport report;
  try {
    report = run_scenario(config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  if (config.reps == 1) err << "note: reps=1, standard errors reported as 0\n";
  if (args.format == "json")
    out << report_to_json(report).dump(2) << '\n';
  else
    write_report_csv(out, report);
  return kExitOk;
}

struct WeightsArgs {
  std::string input;
  CsvOptions csv;
  std::size_t threads = 1;
};

/// Auroral coefficients per held-out replicate plus their average: one row per
/// term (intercept, X(1)..X(B-1)).
inline int cmd_weights(const WeightsArgs& args, std::ostream& out, std::ostream& err) {
  try {
    CsvOptions csv = args.csv;
    csv.allow_b2 = false;
    const auto loaded = read_replicates_csv(args.input, csv);
    const auto result = auroral(loaded.data, args.threads);
    const std::size_t B = loaded.data.B();
    out << "term";
    for (std::size_t j = 1; j <= B; ++j) out << ",j" << j;
    out << ",average\n";
    out << "intercept";
    for (const auto& c : result.weights.per_j) out << ',' << format_double(c.intercept);
    out << ',' << format_double(result.weights.averaged.intercept) << '\n';
    for (std::size_t t = 0; t + 1 < B; ++t) {
      const auto idx = static_cast<Eigen::Index>(t);
      out << "X(" << t + 1 << ')';
      for (const auto& c : result.weights.per_j) out << ',' << format_double(c.slopes[idx]);
      out << ',' << format_double(result.weights.averaged.slopes[idx]) << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct OracleArgs {
  std::string family;  // normal-normal | van-trees | lstat
  double A = std::nan("");
  double sigma2 = std::nan("");
  double m0 = 0.0;
  std::size_t K = 0;
  std::optional<std::size_t> n;
  double I_f = std::nan("");
  double I_g = std::nan("");
  std::string lstat_family = "gaussian";
};

inline int cmd_oracle(const OracleArgs& args, std::ostream& out, std::ostream& err) {
  auto line = [&](const std::string& key, double v) { out << key << ',' << format_double(v) << '\n'; };
  try {
    if (args.family == "normal-normal") {
      if (std::isnan(args.A) || std::isnan(args.sigma2) || args.K == 0) {
        err << "error: normal-normal needs --A, --sigma2 and --K\n";
        return kExitUsage;
      }
      const NormalNormalSpec spec{args.A, args.sigma2, args.m0, args.K};
      const auto r = nn_oracle_risks(spec);
      out << "quantity,value\n";
      line("bayes_K", r.bayes_K);
      line("bayes_Km1", r.bayes_Km1);
      line("avg_oracle", r.avg_oracle);
      line("jackknife_correction", r.jackknife_correction);
      if (args.n) {
        const auto s = nn_single_holdout_risks(spec, *args.n);
        line("auroral_single_holdout", s.auroral_exact);
        line("ccl_single_holdout", s.ccl_exact);
      }
    } else if (args.family == "van-trees") {
      if (std::isnan(args.I_f) || std::isnan(args.I_g) || args.K == 0) {
        err << "error: van-trees needs --If, --Ig and --K\n";
        return kExitUsage;
      }
      out << "quantity,value\n";
      line("van_trees_bound", van_trees_bound(args.I_f, args.I_g, args.K));
    } else if (args.family == "lstat") {
      LStatWeights::Family fam;
      if (args.lstat_family == "gaussian")
        fam = LStatWeights::Family::gaussian;
      else if (args.lstat_family == "logistic")
        fam = LStatWeights::Family::logistic;
      else {
        err << "error: --lstat-family must be gaussian or logistic\n";
        return kExitUsage;
      }
      if (args.K == 0) {
        err << "error: lstat needs --K\n";
        return kExitUsage;
      }
      const auto w = lstat_weights(fam, args.K);
      out << "term,weight\n";
      out << "intercept," << format_double(w.intercept) << '\n';
      for (Eigen::Index j = 0; j < w.slopes.size(); ++j)
        out << "X(" << j + 1 << ")," << format_double(w.slopes[j]) << '\n';
    } else {
      err << "error: unknown oracle family '" << args.family << "'; valid: normal-normal, van-trees, lstat\n";
      return kExitUsage;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace aurora::cli
