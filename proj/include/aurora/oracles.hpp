#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "aurora/error.hpp"
#include "aurora/replicate.hpp"

namespace aurora {

/// Normal prior N(m0, A) with Normal(mu, sigma2) replicates, K per unit.
struct NormalNormalSpec {
  double A = 1.0;
  double sigma2 = 1.0;
  double m0 = 0.0;
  std::size_t K = 1;

  void validate() const {
    if (!(A >= 0.0) || !(sigma2 > 0.0))
      throw Error(ErrorCode::InvalidArgument, "need A >= 0 and sigma2 > 0");
    if (K < 1) throw Error(ErrorCode::KTooSmall, "K must be at least 1");
  }
};

inline double nn_posterior_mean(const NormalNormalSpec& spec, std::span<const double> row) {
  spec.validate();
  double zbar = 0.0;
  for (double z : row) zbar += z;
  zbar /= static_cast<double>(row.size());
  const double shrink = spec.A / (spec.A + spec.sigma2 / static_cast<double>(row.size()));
  return spec.m0 + shrink * (zbar - spec.m0);
}

/// Bayes risk with K replicates, with K-1 replicates, the risk of the
/// (K-1)-replicate Bayes rule averaged over holdouts, and the jackknife gap
/// E Var[m* | mu] / K between the last two.
struct OracleRiskSet {
  double bayes_K = 0.0;
  double bayes_Km1 = 0.0;
  double avg_oracle = 0.0;
  double jackknife_correction = 0.0;
};

inline OracleRiskSet nn_oracle_risks(const NormalNormalSpec& spec) {
  spec.validate();
  if (spec.K < 2) throw Error(ErrorCode::KTooSmall, "oracle risks need K >= 2");
  const double A = spec.A, s2 = spec.sigma2, K = static_cast<double>(spec.K);
  OracleRiskSet r;
  r.bayes_K = A * s2 / (A * K + s2);
  r.bayes_Km1 = A * s2 / (A * (K - 1.0) + s2);
  const double gap = A * s2 / ((A * K + s2) * (A * (K - 1.0) + s2));
  r.avg_oracle = r.bayes_K + gap * gap * (A + s2 / K);
  const double lambda = A / (A + s2 / (K - 1.0));
  r.jackknife_correction = lambda * lambda * s2 / (K - 1.0) / K;
  return r;
}

/// Exact risks of Auroral and CC-L using a single held-out replicate.
struct SingleHoldoutRisks {
  double auroral_exact = 0.0;
  double ccl_exact = 0.0;
};

inline SingleHoldoutRisks nn_single_holdout_risks(const NormalNormalSpec& spec, std::size_t n) {
  spec.validate();
  if (spec.K < 2) throw Error(ErrorCode::KTooSmall, "single-holdout risks need K >= 2");
  if (n <= spec.K) throw Error(ErrorCode::InvalidArgument, "need n > K");
  const double A = spec.A, s2 = spec.sigma2, K = static_cast<double>(spec.K);
  const double base = A * s2 / (A * (K - 1.0) + s2);
  const double excess = s2 - A * s2 / (s2 + A * (K - 1.0));
  return {base + K / static_cast<double>(n) * excess, base + 2.0 / static_cast<double>(n) * excess};
}

/// Posterior mean of mu under a discrete prior and Normal(mu, sigma2)
/// replicates, evaluated in log space.
inline double discrete_posterior_mean(std::span<const double> atoms, std::span<const double> probs,
                                      double sigma2, std::span<const double> row) {
  if (atoms.empty() || atoms.size() != probs.size())
    throw Error(ErrorCode::InvalidArgument, "atoms and probs must be non-empty and of equal length");
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "probabilities must sum to 1");

  std::vector<double> logw(atoms.size(), -std::numeric_limits<double>::infinity());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    if (probs[a] == 0.0) continue;
    double ss = 0.0;
    for (double z : row) ss += (z - atoms[a]) * (z - atoms[a]);
    logw[a] = std::log(probs[a]) - ss / (2.0 * sigma2);
    best = std::max(best, logw[a]);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const double w = std::exp(logw[a] - best);
    num += atoms[a] * w;
    den += w;
  }
  // The maximizing atom contributes weight exactly 1.
  return num / den;
}

/// Efficient L-statistic weights for K - 1 order statistics: slope j is
/// h(j/K)/(K-1) with h(u) = -l''(F^{-1}(u)) / I(f).
struct LStatWeights {
  enum class Family { gaussian, logistic };
  Family family = Family::gaussian;
  std::size_t K = 2;
  Vector slopes;
  double intercept = 0.0;
};

inline double lstat_h(LStatWeights::Family family, double u) {
  return family == LStatWeights::Family::gaussian ? 1.0 : 6.0 * u * (1.0 - u);
}

inline LStatWeights lstat_weights(LStatWeights::Family family, std::size_t K) {
  if (K < 2) throw Error(ErrorCode::KTooSmall, "L-statistic weights need K >= 2");
  LStatWeights w;
  w.family = family;
  w.K = K;
  w.slopes.resize(static_cast<Eigen::Index>(K - 1));
  const double Kd = static_cast<double>(K);
  for (std::size_t j = 1; j < K; ++j)
    w.slopes[static_cast<Eigen::Index>(j - 1)] =
        lstat_h(family, static_cast<double>(j) / Kd) / (Kd - 1.0);
  return w;
}

/// Lower bound on the K-replicate Bayes risk for a location family with
/// Fisher information I_f and a prior with information I_g.
inline double van_trees_bound(double I_f, double I_g, std::size_t K) {
  if (!(I_f > 0.0) || !(I_g >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "need I_f > 0 and I_g >= 0");
  if (K < 1) throw Error(ErrorCode::KTooSmall, "K must be at least 1");
  return 1.0 / (static_cast<double>(K) * I_f + I_g);
}

}  // namespace aurora
