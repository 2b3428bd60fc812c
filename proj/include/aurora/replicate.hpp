#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aurora/error.hpp"
#include "aurora/parallel.hpp"

namespace aurora {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
/// One estimate per unit, in input row order.
using EstimateVector = Eigen::VectorXd;

/// n units (rows) by B replicates (columns), all finite.
class ReplicateMatrix {
 public:
  /// Validates shape and finiteness. `min_replicates` is 2 for library use
  /// and 3 for the guarded entry point validate_matrix().
  explicit ReplicateMatrix(RowMatrix values, std::size_t min_replicates = 2)
      : values_(std::move(values)) {
    if (values_.rows() == 0) throw Error(ErrorCode::Empty, "matrix has no units");
    if (static_cast<std::size_t>(values_.cols()) < std::max<std::size_t>(min_replicates, 2))
      throw Error(ErrorCode::TooFewReplicates,
                  "got B=" + std::to_string(values_.cols()) + ", need at least " +
                      std::to_string(std::max<std::size_t>(min_replicates, 2)));
    for (Eigen::Index i = 0; i < values_.rows(); ++i)
      for (Eigen::Index j = 0; j < values_.cols(); ++j)
        if (!std::isfinite(values_(i, j)))
          throw Error(ErrorCode::NonFinite, "entry (" + std::to_string(i + 1) + ", " +
                                                std::to_string(j + 1) + ") is not finite");
  }

  std::size_t n() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t B() const { return static_cast<std::size_t>(values_.cols()); }
  const RowMatrix& values() const { return values_; }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * B(), B()};
  }

 private:
  RowMatrix values_;
};

struct ValidateOptions {
  bool allow_b2 = false;
};

/// Entry point for user data: B >= 3 unless allow_b2 is set.
inline ReplicateMatrix validate_matrix(RowMatrix raw, ValidateOptions options = {}) {
  if (raw.rows() == 0) throw Error(ErrorCode::Empty, "matrix has no units");
  return ReplicateMatrix(std::move(raw), options.allow_b2 ? 2 : 3);
}

inline ReplicateMatrix validate_matrix(const std::vector<std::vector<double>>& raw,
                                       ValidateOptions options = {}) {
  if (raw.empty()) throw Error(ErrorCode::Empty, "matrix has no units");
  const std::size_t B = raw.front().size();
  RowMatrix m(static_cast<Eigen::Index>(raw.size()), static_cast<Eigen::Index>(B));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].size() != B)
      throw Error(ErrorCode::RaggedRows, "row " + std::to_string(i + 1) + " has " +
                                             std::to_string(raw[i].size()) + " values, expected " +
                                             std::to_string(B));
    for (std::size_t j = 0; j < B; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = raw[i][j];
  }
  return validate_matrix(std::move(m), options);
}

/// Training set for one held-out replicate (or held-out subset): the response
/// and the ascending order statistics of the remaining replicates.
struct SplitView {
  std::size_t held_out_index = 0;  // 0-based column (or subset ordinal)
  Vector response;
  RowMatrix ordered_features;
};

/// Holds out column j (0-based) and sorts the remaining replicates per unit.
inline SplitView split_and_order(const ReplicateMatrix& data, std::size_t j) {
  const std::size_t n = data.n(), B = data.B();
  if (j >= B)
    throw Error(ErrorCode::IndexOutOfRange,
                "held-out index " + std::to_string(j) + " not in [0, " + std::to_string(B) + ")");
  SplitView view;
  view.held_out_index = j;
  view.response.resize(static_cast<Eigen::Index>(n));
  view.ordered_features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(B - 1));
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.row(i);
    view.response[static_cast<Eigen::Index>(i)] = row[j];
    double* out = view.ordered_features.data() + i * (B - 1);
    std::size_t c = 0;
    for (std::size_t k = 0; k < B; ++k)
      if (k != j) out[c++] = row[k];
    std::stable_sort(out, out + (B - 1));
  }
  return view;
}

/// Regressor factory: trains on a SplitView and returns in-sample predictions
/// (one per unit). Must be deterministic for the invariance guarantees.
using RegressorFactory = std::function<Vector(const SplitView&)>;

namespace detail {

inline void check_predictions(const Vector& pred, std::size_t n) {
  if (static_cast<std::size_t>(pred.size()) != n)
    throw Error(ErrorCode::RegressorFailure, "regressor returned " + std::to_string(pred.size()) +
                                                 " predictions for " + std::to_string(n) + " units");
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    if (!std::isfinite(pred[i]))
      throw Error(ErrorCode::RegressorFailure,
                  "non-finite prediction for unit " + std::to_string(i + 1));
}

// Averages per-split predictions. Each unit's values are summed in ascending
// order so relabeling the splits cannot change the result bitwise.
inline EstimateVector average_predictions(const std::vector<Vector>& preds, std::size_t n) {
  EstimateVector out(static_cast<Eigen::Index>(n));
  std::vector<double> buf(preds.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < preds.size(); ++s) buf[s] = preds[s][static_cast<Eigen::Index>(i)];
    std::sort(buf.begin(), buf.end());
    double sum = 0.0;
    for (double v : buf) sum += v;
    out[static_cast<Eigen::Index>(i)] = sum / static_cast<double>(buf.size());
  }
  return out;
}

template <class Fn>
Vector run_split(std::size_t label, std::size_t n, Fn&& fn) {
  try {
    Vector pred = fn();
    check_predictions(pred, n);
    return pred;
  } catch (const Error& e) {
    rethrow_with_context(e, "held-out split j=" + std::to_string(label + 1));
  }
}

}  // namespace detail

/// In-sample predictions of the regressor trained with replicate j held out.
inline Vector aurora_single_holdout(const ReplicateMatrix& data, std::size_t j,
                                    const RegressorFactory& fit) {
  return detail::run_split(j, data.n(), [&] { return fit(split_and_order(data, j)); });
}

/// Leave-one-replicate-out driver: for every j, train on the order statistics
/// of the other replicates against replicate j, predict in-sample, then
/// average the B predictions per unit.
inline EstimateVector aurora_estimate(const ReplicateMatrix& data, const RegressorFactory& fit,
                                      std::size_t threads = 1) {
  std::vector<Vector> preds(data.B());
  parallel_for(data.B(), threads, [&](std::size_t j) { preds[j] = aurora_single_holdout(data, j, fit); });
  return detail::average_predictions(preds, data.n());
}

/// Symmetric function of r held-out replicates. The kernel always receives
/// its arguments sorted ascending.
struct TargetKernel {
  std::size_t arity = 1;
  std::function<double(std::span<const double>)> kernel;

  static TargetKernel identity() {
    return {1, [](std::span<const double> z) { return z[0]; }};
  }
  static TargetKernel square() {
    return {1, [](std::span<const double> z) { return z[0] * z[0]; }};
  }
  /// (z1 - z2)^2 / 2, unbiased for the per-unit variance.
  static TargetKernel half_squared_difference() {
    return {2, [](std::span<const double> z) {
              const double d = z[0] - z[1];
              return 0.5 * d * d;
            }};
  }
};

inline constexpr std::size_t kDefaultSubsetCap = 256;

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// All r-subsets of {0..B-1} in lexicographic order.
inline std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t B, std::size_t r) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(r);
  for (std::size_t i = 0; i < r; ++i) idx[i] = i;
  for (;;) {
    out.push_back(idx);
    std::size_t pos = r;
    while (pos > 0 && idx[pos - 1] == B - r + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t k = pos; k < r; ++k) idx[k] = idx[k - 1] + 1;
  }
  return out;
}

/// Generalization of the driver to targets theta_i = E[h(Z_i1..Z_ir)]: every
/// r-subset of replicates forms the response through h, the remaining B - r
/// replicates (sorted) form the features. Predictions are averaged over all
/// C(B, r) subsets.
inline EstimateVector aurora_general_target(const ReplicateMatrix& data, const TargetKernel& target,
                                            const RegressorFactory& fit, std::size_t threads = 1,
                                            std::size_t subset_cap = kDefaultSubsetCap) {
  const std::size_t n = data.n(), B = data.B(), r = target.arity;
  if (r == 0) throw Error(ErrorCode::InvalidArgument, "kernel arity must be at least 1");
  if (r > B - 1)
    throw Error(ErrorCode::ArityTooLarge,
                "arity " + std::to_string(r) + " leaves no feature column with B=" + std::to_string(B));
  const std::size_t count = binomial(B, r);
  if (count > subset_cap)
    throw Error(ErrorCode::SubsetExplosion, "C(" + std::to_string(B) + ", " + std::to_string(r) +
                                                ") = " + std::to_string(count) + " exceeds cap " +
                                                std::to_string(subset_cap));
  const auto subsets = enumerate_subsets(B, r);
  std::vector<Vector> preds(count);
  parallel_for(count, threads, [&](std::size_t s) {
    const auto& held = subsets[s];
    preds[s] = detail::run_split(s, n, [&] {
      SplitView view;
      view.held_out_index = s;
      view.response.resize(static_cast<Eigen::Index>(n));
      view.ordered_features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(B - r));
      std::vector<double> args(r);
      for (std::size_t i = 0; i < n; ++i) {
        auto row = data.row(i);
        double* out = view.ordered_features.data() + i * (B - r);
        std::size_t c = 0, a = 0;
        for (std::size_t k = 0; k < B; ++k) {
          if (a < r && held[a] == k)
            args[a++] = row[k];
          else
            out[c++] = row[k];
        }
        std::stable_sort(out, out + (B - r));
        std::sort(args.begin(), args.end());
        view.response[static_cast<Eigen::Index>(i)] = target.kernel(args);
      }
      return fit(view);
    });
  });
  return detail::average_predictions(preds, n);
}

}  // namespace aurora
