#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "aurora/error.hpp"
#include "aurora/knn.hpp"
#include "aurora/ols.hpp"
#include "aurora/replicate.hpp"

namespace aurora {

// ---------------------------------------------------------------------------
// Auroral: the driver with least squares on the order statistics.

struct Coefficients {
  double intercept = 0.0;
  Vector slopes;
};

/// Per-held-out-replicate OLS coefficients and their componentwise mean.
struct AuroraWeights {
  std::vector<Coefficients> per_j;
  Coefficients averaged;
};

struct AuroralResult {
  EstimateVector estimates;
  AuroraWeights weights;
  bool interpolating = false;  // n <= B: the fit has no residual degrees of freedom
};

inline AuroralResult auroral(const ReplicateMatrix& data, std::size_t threads = 1) {
  const std::size_t B = data.B();
  AuroralResult result;
  result.weights.per_j.resize(B);
  result.interpolating = data.n() <= B;
  auto factory = [&](const SplitView& view) {
    LinearFit fit = ols_fit(view.ordered_features, view.response);
    result.weights.per_j[view.held_out_index] = {fit.intercept, fit.slopes};
    return ols_predict(fit, view.ordered_features);
  };
  result.estimates = aurora_estimate(data, factory, threads);

  auto& avg = result.weights.averaged;
  avg.intercept = 0.0;
  avg.slopes = Vector::Zero(static_cast<Eigen::Index>(B - 1));
  for (const auto& c : result.weights.per_j) {
    avg.intercept += c.intercept;
    avg.slopes += c.slopes;
  }
  avg.intercept /= static_cast<double>(B);
  avg.slopes /= static_cast<double>(B);
  return result;
}

// ---------------------------------------------------------------------------
// Aurora-kNN

struct KnnOptions {
  std::size_t k_max = 1000;
  std::size_t dim_threshold = kDefaultTreeDimThreshold;
  double jitter_eps = 0.0;  // > 0 enables the random tie-breaking coordinate
  std::uint64_t jitter_seed = 0;
  std::size_t threads = 1;
};

struct AuroraKnnResult {
  EstimateVector estimates;
  std::vector<std::size_t> k_star;  // per held-out replicate
};

/// k_max is clamped to n - 1 so every unit has enough other units.
inline RegressorFactory knn_regressor(const KnnOptions& options,
                                      std::vector<std::size_t>* k_star_out = nullptr) {
  return [options, k_star_out](const SplitView& view) {
    const std::size_t n = static_cast<std::size_t>(view.response.size());
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "aurora-knn needs at least 2 units");
    const std::size_t k_max = std::clamp<std::size_t>(options.k_max, 1, n - 1);
    const NeighborIndex index =
        options.jitter_eps > 0.0
            ? NeighborIndex(jitter_features(view.ordered_features, options.jitter_eps,
                                            options.jitter_seed + view.held_out_index),
                            options.dim_threshold)
            : NeighborIndex(view.ordered_features, options.dim_threshold);
    const NeighborTable table = index.all_neighbors(k_max - 1);
    const KSelection sel = select_k(table, view.response, k_max);
    if (k_star_out) (*k_star_out)[view.held_out_index] = sel.k_star;
    return predict_in_sample(table, view.response, sel.k_star);
  };
}

inline AuroraKnnResult aurora_knn_detailed(const ReplicateMatrix& data, const KnnOptions& options = {}) {
  AuroraKnnResult result;
  result.k_star.assign(data.B(), 0);
  result.estimates = aurora_estimate(data, knn_regressor(options, &result.k_star), options.threads);
  return result;
}

inline EstimateVector aurora_knn(const ReplicateMatrix& data, const KnnOptions& options = {}) {
  return aurora_estimate(data, knn_regressor(options), options.threads);
}

// ---------------------------------------------------------------------------
// CC-L: regress the held-out replicate on the mean of the others.

inline RegressorFactory ccl_regressor() {
  return [](const SplitView& view) {
    const RowMatrix& X = view.ordered_features;
    RowMatrix xbar(X.rows(), 1);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < X.cols(); ++c) s += X(i, c);
      xbar(i, 0) = s / static_cast<double>(X.cols());
    }
    // A constant xbar column has rank 0 after centering: intercept-only fit.
    return ols_predict(ols_fit(xbar, view.response), xbar);
  };
}

inline EstimateVector ccl(const ReplicateMatrix& data, std::size_t threads = 1) {
  return aurora_estimate(data, ccl_regressor(), threads);
}

// ---------------------------------------------------------------------------
// Location baselines

struct BaselineKind {
  enum class Kind { mean, median, midrange, trimmed };
  Kind kind = Kind::mean;
  double trim = 0.1;  // per-tail fraction, trimmed only

  static BaselineKind mean() { return {Kind::mean}; }
  static BaselineKind median() { return {Kind::median}; }
  static BaselineKind midrange() { return {Kind::midrange}; }
  static BaselineKind trimmed(double gamma) { return {Kind::trimmed, gamma}; }
};

inline EstimateVector location_baseline(const ReplicateMatrix& data, const BaselineKind& kind) {
  const std::size_t n = data.n(), B = data.B();
  std::size_t cut = 0;
  if (kind.kind == BaselineKind::Kind::trimmed) {
    if (!(kind.trim >= 0.0 && kind.trim < 0.5))
      throw Error(ErrorCode::InvalidArgument, "trim fraction must lie in [0, 0.5)");
    cut = static_cast<std::size_t>(std::floor(kind.trim * static_cast<double>(B)));
    if (2 * cut >= B) throw Error(ErrorCode::InvalidArgument, "trimming leaves no replicates");
  }
  EstimateVector out(static_cast<Eigen::Index>(n));
  std::vector<double> buf(B);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.row(i);
    double v = 0.0;
    switch (kind.kind) {
      case BaselineKind::Kind::mean:
        for (double z : row) v += z;
        v /= static_cast<double>(B);
        break;
      case BaselineKind::Kind::median:
        std::copy(row.begin(), row.end(), buf.begin());
        std::sort(buf.begin(), buf.end());
        v = B % 2 == 1 ? buf[B / 2] : 0.5 * (buf[B / 2 - 1] + buf[B / 2]);
        break;
      case BaselineKind::Kind::midrange: {
        auto [lo, hi] = std::minmax_element(row.begin(), row.end());
        v = 0.5 * (*lo + *hi);
        break;
      }
      case BaselineKind::Kind::trimmed:
        std::copy(row.begin(), row.end(), buf.begin());
        std::sort(buf.begin(), buf.end());
        for (std::size_t k = cut; k < B - cut; ++k) v += buf[k];
        v /= static_cast<double>(B - 2 * cut);
        break;
    }
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// James-Stein on the unit means

enum class JsCenter { zero, grand_mean };

/// Linear shrinkage of the unit means Zbar_i (noise variance sigma2 / B)
/// toward zero or toward the grand mean. The grand-mean version uses n - 3
/// degrees of freedom since the center is estimated.
inline EstimateVector james_stein(const ReplicateMatrix& data, double sigma2, JsCenter center,
                                  bool positive_part) {
  const std::size_t n = data.n(), B = data.B();
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive and finite");
  const std::size_t min_n = center == JsCenter::grand_mean ? 4 : 3;
  if (n < min_n)
    throw Error(ErrorCode::InvalidArgument, "James-Stein needs n >= " + std::to_string(min_n));

  const EstimateVector zbar = location_baseline(data, BaselineKind::mean());
  double c = 0.0;
  if (center == JsCenter::grand_mean) c = zbar.sum() / static_cast<double>(n);
  const double ss = (zbar.array() - c).square().sum();
  if (ss == 0.0) return EstimateVector::Constant(static_cast<Eigen::Index>(n), c);

  const double dof = static_cast<double>(n) - (center == JsCenter::grand_mean ? 3.0 : 2.0);
  double factor = 1.0 - dof * sigma2 / static_cast<double>(B) / ss;
  if (positive_part) factor = std::max(factor, 0.0);
  return (c + factor * (zbar.array() - c)).matrix();
}

// ---------------------------------------------------------------------------
// Pareto maximum likelihood (tail index unknown)

inline constexpr double kParetoAlphaEps = 1e-6;

/// Per unit: scale = min, alpha = B / sum log(z / min), mean = alpha*scale/(alpha-1).
/// Units with alpha <= 1 + kParetoAlphaEps (infinite mean) get their sample
/// mean; units with all replicates equal get that value.
inline EstimateVector pareto_mle(const ReplicateMatrix& data) {
  const std::size_t n = data.n(), B = data.B();
  for (std::size_t i = 0; i < n; ++i)
    for (double z : data.row(i))
      if (!(z > 0.0))
        throw Error(ErrorCode::NonPositiveData, "unit " + std::to_string(i + 1) + " has a non-positive replicate");
  EstimateVector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.row(i);
    const double xm = *std::min_element(row.begin(), row.end());
    double s = 0.0, total = 0.0;
    for (double z : row) {
      s += std::log(z / xm);
      total += z;
    }
    double est;
    if (s == 0.0) {
      est = xm;
    } else {
      const double alpha = static_cast<double>(B) / s;
      est = alpha > 1.0 + kParetoAlphaEps ? alpha * xm / (alpha - 1.0) : total / static_cast<double>(B);
    }
    out[static_cast<Eigen::Index>(i)] = est;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registry of named methods

struct MethodOptions {
  double sigma2 = std::numeric_limits<double>::quiet_NaN();  // js; NaN = not provided
  std::size_t k_max = 1000;
  double trim = 0.1;
  JsCenter js_center = JsCenter::grand_mean;
  bool js_positive_part = true;
  std::size_t dim_threshold = kDefaultTreeDimThreshold;
  double knn_jitter = 0.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"auroral", "aurora-knn", "ccl",     "mean",      "median",
                                              "midrange", "trimmed",    "js",      "pareto-mle"};
  return names;
}

inline bool is_method(std::string_view name) {
  const auto& names = method_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

inline std::string method_list() {
  std::string s;
  for (const auto& m : method_names()) s += (s.empty() ? "" : ", ") + m;
  return s;
}

inline EstimateVector run_method(std::string_view name, const ReplicateMatrix& data,
                                 const MethodOptions& opt = {}) {
  if (name == "auroral") return auroral(data, opt.threads).estimates;
  if (name == "aurora-knn")
    return aurora_knn(data, {opt.k_max, opt.dim_threshold, opt.knn_jitter, opt.seed, opt.threads});
  if (name == "ccl") return ccl(data, opt.threads);
  if (name == "mean") return location_baseline(data, BaselineKind::mean());
  if (name == "median") return location_baseline(data, BaselineKind::median());
  if (name == "midrange") return location_baseline(data, BaselineKind::midrange());
  if (name == "trimmed") return location_baseline(data, BaselineKind::trimmed(opt.trim));
  if (name == "js") {
    if (std::isnan(opt.sigma2)) throw Error(ErrorCode::InvalidArgument, "js requires sigma2");
    return james_stein(data, opt.sigma2, opt.js_center, opt.js_positive_part);
  }
  if (name == "pareto-mle") return pareto_mle(data);
  throw Error(ErrorCode::UnknownMethod,
              "unknown method '" + std::string(name) + "'; valid methods: " + method_list());
}

}  // namespace aurora
