#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "aurora/error.hpp"
#include "aurora/estimators.hpp"
#include "aurora/oracles.hpp"
#include "aurora/parallel.hpp"
#include "aurora/replicate.hpp"

namespace aurora {

// ---------------------------------------------------------------------------
// Scenario specification

namespace prior {
struct Normal { double mean = 0.0; double var = 1.0; };
/// Equal mass on -sqrt(3A/2), 0, +sqrt(3A/2); variance A.
struct ThreePoint { double var = 1.0; };
struct Uniform { double low = 0.0; double high = 1.0; };
struct Point { double value = 0.0; };
}  // namespace prior

using PriorSpec = std::variant<prior::Normal, prior::ThreePoint, prior::Uniform, prior::Point>;

namespace likelihood {
struct Normal { double var = 1.0; };
struct Laplace { double var = 1.0; };
struct Rectangular { double var = 1.0; };
/// Pareto with tail index alpha and mean mu.
struct Pareto { double alpha = 3.0; };
enum class Base { normal, rectangular };
enum class MeanLink { independent, equal_to_var };
/// Unit-level variance sbar2_i ~ U[var_low, var_high]; replicate variance
/// sbar2_i * B, so the unit mean has variance sbar2_i.
struct Hetero {
  Base base = Base::normal;
  double var_low = 0.1;
  double var_high = 1.0;
  MeanLink mean_link = MeanLink::independent;
};
}  // namespace likelihood

using LikelihoodSpec =
    std::variant<likelihood::Normal, likelihood::Laplace, likelihood::Rectangular, likelihood::Pareto,
                 likelihood::Hetero>;

struct ScenarioConfig {
  std::size_t n = 1000;
  std::size_t B = 10;
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  PriorSpec prior = prior::Normal{};
  LikelihoodSpec likelihood = likelihood::Normal{};
  std::vector<std::string> methods;
  MethodOptions options;
  bool allow_b2 = true;
};

inline const char* kOracleMethod = "oracle-bayes";

inline void validate_config(const ScenarioConfig& c) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (c.n < 1) bad("n: must be at least 1");
  if (c.B < (c.allow_b2 ? 2u : 3u)) bad("B: too few replicates");
  if (c.reps < 1) bad("reps: must be at least 1");
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, prior::Normal>) {
          if (!(p.var >= 0.0)) bad("prior.var: must be non-negative");
        } else if constexpr (std::is_same_v<T, prior::ThreePoint>) {
          if (!(p.var >= 0.0)) bad("prior.var: must be non-negative");
        } else if constexpr (std::is_same_v<T, prior::Uniform>) {
          if (!(p.low <= p.high)) bad("prior: low must not exceed high");
        }
      },
      c.prior);
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, likelihood::Pareto>) {
          if (!(l.alpha > 1.0)) bad("likelihood.alpha: must exceed 1");
        } else if constexpr (std::is_same_v<T, likelihood::Hetero>) {
          if (!(l.var_low > 0.0 && l.var_low <= l.var_high)) bad("likelihood: need 0 < var_low <= var_high");
        } else {
          if (!(l.var > 0.0)) bad("likelihood.var: must be positive");
        }
      },
      c.likelihood);
  for (const auto& m : c.methods)
    if (!is_method(m) && m != kOracleMethod)
      throw Error(ErrorCode::InvalidConfig, "methods: unknown '" + m + "'; valid: " + method_list() + ", " +
                                                kOracleMethod);
}

// ---------------------------------------------------------------------------
// Sampling

/// Generator for one (seed, rep, unit) triple. Streams are derived, never
/// split sequentially, so results do not depend on evaluation order.
inline std::mt19937_64 unit_stream(std::uint64_t seed, std::uint64_t rep, std::uint64_t unit) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32),
                    static_cast<std::uint32_t>(unit), static_cast<std::uint32_t>(unit >> 32)};
  return std::mt19937_64(seq);
}

namespace detail {

// Uniform on (0, 1).
inline double open_uniform(std::mt19937_64& rng) {
  for (;;) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

inline double standard_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  return nd(rng);
}

inline double draw_prior(const PriorSpec& spec, std::mt19937_64& rng) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, prior::Normal>) {
          return p.mean + std::sqrt(p.var) * standard_normal(rng);
        } else if constexpr (std::is_same_v<T, prior::ThreePoint>) {
          const double atom = std::sqrt(1.5 * p.var);
          const auto pick = static_cast<int>(std::floor(3.0 * open_uniform(rng)));
          return pick == 0 ? -atom : (pick == 1 ? 0.0 : atom);
        } else if constexpr (std::is_same_v<T, prior::Uniform>) {
          return p.low + (p.high - p.low) * open_uniform(rng);
        } else {
          return p.value;
        }
      },
      spec);
}

inline double draw_normal(double mu, double var, std::mt19937_64& rng) {
  return mu + std::sqrt(var) * standard_normal(rng);
}

inline double draw_rectangular(double mu, double var, std::mt19937_64& rng) {
  return mu + std::sqrt(3.0 * var) * (2.0 * open_uniform(rng) - 1.0);
}

inline double draw_laplace(double mu, double var, std::mt19937_64& rng) {
  const double b = std::sqrt(var / 2.0);
  const double u = open_uniform(rng);
  return u < 0.5 ? mu + b * std::log(2.0 * u) : mu - b * std::log(2.0 * (1.0 - u));
}

inline double draw_pareto(double mu, double alpha, std::mt19937_64& rng) {
  const double xm = mu * (alpha - 1.0) / alpha;
  return xm * std::pow(open_uniform(rng), -1.0 / alpha);
}

}  // namespace detail

struct Scenario {
  Vector truth;
  ReplicateMatrix data;
};

/// Draws the truths and the n x B replicate matrix for one Monte Carlo rep.
inline Scenario sample_scenario(const ScenarioConfig& config, std::size_t rep_index) {
  validate_config(config);
  const std::size_t n = config.n, B = config.B;
  Vector truth(static_cast<Eigen::Index>(n));
  RowMatrix Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(B));
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = unit_stream(config.seed, rep_index, i);
    double* row = Z.data() + i * B;
    double mu = 0.0;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, likelihood::Hetero>) {
            const double sbar2 = l.var_low + (l.var_high - l.var_low) * detail::open_uniform(rng);
            mu = l.mean_link == likelihood::MeanLink::equal_to_var ? sbar2 : detail::draw_prior(config.prior, rng);
            const double var = sbar2 * static_cast<double>(B);
            for (std::size_t j = 0; j < B; ++j)
              row[j] = l.base == likelihood::Base::normal ? detail::draw_normal(mu, var, rng)
                                                          : detail::draw_rectangular(mu, var, rng);
          } else {
            mu = detail::draw_prior(config.prior, rng);
            for (std::size_t j = 0; j < B; ++j) {
              if constexpr (std::is_same_v<T, likelihood::Normal>)
                row[j] = detail::draw_normal(mu, l.var, rng);
              else if constexpr (std::is_same_v<T, likelihood::Laplace>)
                row[j] = detail::draw_laplace(mu, l.var, rng);
              else if constexpr (std::is_same_v<T, likelihood::Rectangular>)
                row[j] = detail::draw_rectangular(mu, l.var, rng);
              else {
                if (!(mu > 0.0))
                  throw Error(ErrorCode::InvalidConfig, "pareto likelihood needs a positive mean, prior drew " +
                                                            std::to_string(mu));
                row[j] = detail::draw_pareto(mu, l.alpha, rng);
              }
            }
          }
        },
        config.likelihood);
    truth[static_cast<Eigen::Index>(i)] = mu;
  }
  return {std::move(truth), ReplicateMatrix(std::move(Z), 2)};
}

inline double mse(const EstimateVector& estimates, const Vector& truth) {
  if (estimates.size() != truth.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(estimates.size()) + " estimates for " +
                                               std::to_string(truth.size()) + " truths");
  if (truth.size() == 0) throw Error(ErrorCode::LengthMismatch, "empty vectors");
  double s = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double d = estimates[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

struct MethodRisk {
  std::string method;
  double mse = 0.0;
  double se = 0.0;  // sd of per-rep MSEs / sqrt(reps); 0 when reps == 1
  std::size_t reps = 0;
  std::vector<double> per_rep;
};

struct RiskReport {
  std::vector<MethodRisk> methods;

  const MethodRisk& at(const std::string& name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    throw Error(ErrorCode::UnknownMethod, "report has no method '" + name + "'");
  }
};

using Estimator = std::function<EstimateVector(const ReplicateMatrix&)>;

struct NamedEstimator {
  std::string name;
  Estimator run;
};

/// Bayes rule for the configured prior/likelihood, when it has a closed form
/// (Normal or discrete prior with homoskedastic Normal replicates).
inline Estimator oracle_bayes_estimator(const ScenarioConfig& config) {
  const auto* lik = std::get_if<likelihood::Normal>(&config.likelihood);
  if (!lik) throw Error(ErrorCode::InvalidConfig, "oracle-bayes needs a normal likelihood");
  const double s2 = lik->var;
  if (const auto* p = std::get_if<prior::Normal>(&config.prior)) {
    NormalNormalSpec spec{p->var, s2, p->mean, config.B};
    return [spec](const ReplicateMatrix& d) {
      EstimateVector out(static_cast<Eigen::Index>(d.n()));
      for (std::size_t i = 0; i < d.n(); ++i) out[static_cast<Eigen::Index>(i)] = nn_posterior_mean(spec, d.row(i));
      return out;
    };
  }
  std::vector<double> atoms, probs;
  if (const auto* p = std::get_if<prior::ThreePoint>(&config.prior)) {
    const double a = std::sqrt(1.5 * p->var);
    atoms = {-a, 0.0, a};
    probs = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  } else if (const auto* p = std::get_if<prior::Point>(&config.prior)) {
    atoms = {p->value};
    probs = {1.0};
  } else {
    throw Error(ErrorCode::InvalidConfig, "oracle-bayes needs a normal, three_point or point prior");
  }
  return [atoms, probs, s2](const ReplicateMatrix& d) {
    EstimateVector out(static_cast<Eigen::Index>(d.n()));
    for (std::size_t i = 0; i < d.n(); ++i)
      out[static_cast<Eigen::Index>(i)] = discrete_posterior_mean(atoms, probs, s2, d.row(i));
    return out;
  };
}

inline std::vector<NamedEstimator> resolve_methods(const ScenarioConfig& config) {
  std::vector<NamedEstimator> out;
  for (const auto& name : config.methods) {
    if (name == kOracleMethod) {
      out.push_back({name, oracle_bayes_estimator(config)});
      continue;
    }
    MethodOptions opt = config.options;
    if (name == "js" && std::isnan(opt.sigma2)) {
      if (const auto* l = std::get_if<likelihood::Normal>(&config.likelihood))
        opt.sigma2 = l->var;
      else
        throw Error(ErrorCode::InvalidConfig, "options.sigma2: required for js with this likelihood");
    }
    if (!is_method(name)) throw Error(ErrorCode::UnknownMethod, "methods: unknown '" + name + "'");
    out.push_back({name, [name, opt](const ReplicateMatrix& d) { return run_method(name, d, opt); }});
  }
  return out;
}

/// Runs every estimator on the same sampled data for each rep. Reps run on
/// `threads` workers; results are reduced in rep order.
inline RiskReport run_scenario(const ScenarioConfig& config, const std::vector<NamedEstimator>& methods,
                               std::size_t threads) {
  validate_config(config);
  const std::size_t reps = config.reps, m = methods.size();
  std::vector<double> table(reps * m);
  parallel_for(reps, threads, [&](std::size_t r) {
    const Scenario sc = sample_scenario(config, r);
    for (std::size_t k = 0; k < m; ++k) {
      try {
        table[r * m + k] = mse(methods[k].run(sc.data), sc.truth);
      } catch (const Error& e) {
        rethrow_with_context(e, "method " + methods[k].name + ", rep " + std::to_string(r));
      }
    }
  });
  RiskReport report;
  for (std::size_t k = 0; k < m; ++k) {
    MethodRisk risk;
    risk.method = methods[k].name;
    risk.reps = reps;
    risk.per_rep.resize(reps);
    double sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      risk.per_rep[r] = table[r * m + k];
      sum += risk.per_rep[r];
    }
    risk.mse = sum / static_cast<double>(reps);
    if (reps > 1) {
      double ss = 0.0;
      for (double v : risk.per_rep) ss += (v - risk.mse) * (v - risk.mse);
      risk.se = std::sqrt(ss / static_cast<double>(reps - 1)) / std::sqrt(static_cast<double>(reps));
    }
    report.methods.push_back(std::move(risk));
  }
  return report;
}

inline RiskReport run_scenario(const ScenarioConfig& config) {
  // Parallelism lives at the rep level; estimators run single-threaded inside.
  ScenarioConfig inner = config;
  const std::size_t threads = config.options.threads;
  inner.options.threads = 1;
  return run_scenario(inner, resolve_methods(inner), threads);
}

}  // namespace aurora
