#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "aurora/error.hpp"
#include "aurora/replicate.hpp"

namespace aurora {

/// Least-squares fit with intercept.
struct LinearFit {
  double intercept = 0.0;
  Vector slopes;
  std::size_t rank = 1;  // counts the intercept column
};

/// Relative pivot tolerance of the column-pivoted factorization.
inline constexpr double kOlsRankTolerance = 1e-10;

/// Ordinary least squares of y on [1, X].
///
/// The feature columns are centered first, so the intercept column is handled
/// exactly and the slopes come from a complete orthogonal decomposition of the
/// centered design. Directions whose pivot falls below kOlsRankTolerance times
/// the largest pivot are dropped; the slopes are then the minimum-norm
/// solution and the fitted values are still the orthogonal projection of y.
template <class Derived>
LinearFit ols_fit(const Eigen::MatrixBase<Derived>& X, const Vector& y) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n < 1 || p < 1)
    throw Error(ErrorCode::DimensionMismatch,
                "design is " + std::to_string(n) + "x" + std::to_string(p) + ", need n >= 1 and p >= 1");
  if (y.size() != n)
    throw Error(ErrorCode::DimensionMismatch,
                "response has " + std::to_string(y.size()) + " entries for " + std::to_string(n) + " rows");

  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  Eigen::MatrixXd centered = X.rowwise() - x_mean;

  LinearFit fit;
  fit.slopes = Vector::Zero(p);
  if (centered.cwiseAbs().maxCoeff() > 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kOlsRankTolerance);
    cod.compute(centered);
    const Vector yc = (y.array() - y_mean).matrix();
    if (cod.rank() > 0) fit.slopes = cod.solve(yc);
    fit.rank = static_cast<std::size_t>(cod.rank()) + 1;
  }
  fit.intercept = y_mean - x_mean.dot(fit.slopes);
  return fit;
}

template <class Derived>
Vector ols_predict(const LinearFit& fit, const Eigen::MatrixBase<Derived>& X) {
  if (X.cols() != fit.slopes.size())
    throw Error(ErrorCode::DimensionMismatch, "fit has " + std::to_string(fit.slopes.size()) +
                                                  " slopes, design has " + std::to_string(X.cols()) +
                                                  " columns");
  Vector out = X * fit.slopes;
  out.array() += fit.intercept;
  return out;
}

/// Regressor factory for the driver: OLS on the ordered features.
inline RegressorFactory ols_regressor() {
  return [](const SplitView& view) {
    return ols_predict(ols_fit(view.ordered_features, view.response), view.ordered_features);
  };
}

}  // namespace aurora
