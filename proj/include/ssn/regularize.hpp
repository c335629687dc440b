#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "ssn/dataset.hpp"
#include "ssn/errors.hpp"

namespace ssn {

enum class RegularizationKind { None, Spectral, Ridge };

struct RegularizedHessian {
  Matrix matrix;
  double lambdaFloor = 0.0;
  RegularizationKind kind = RegularizationKind::None;
  /// λ_min after regularization; NaN when it was not computed.
  double minEig = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline Matrix symmetrized(const Matrix& h) {
  if (h.rows() != h.cols()) throw InvalidArgument("expected a square matrix");
  if (!h.allFinite()) throw NumericalError("matrix has non-finite entries");
  return 0.5 * (h + h.transpose());
}

}  // namespace detail

inline double min_eigenvalue(const Matrix& h) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrized(h), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation did not converge");
  return es.eigenvalues()(0);
}

/// Σ max{λ_i(H), λ} v_i v_iᵀ.
inline RegularizedHessian spectral_floor(const Matrix& h, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("spectral floor must be finite and >= 0");
  const Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrized(h));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition did not converge");
  const Vector floored = es.eigenvalues().cwiseMax(lambda);
  RegularizedHessian out;
  out.matrix = es.eigenvectors() * floored.asDiagonal() * es.eigenvectors().transpose();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  out.lambdaFloor = lambda;
  out.kind = RegularizationKind::Spectral;
  out.minEig = floored.minCoeff();
  return out;
}

/// Floor level used by the spectral driver: λ = max(λ_min(H), 0) + λ_user.
inline double spectral_floor_level(double minEigH, double lambdaUser) {
  if (!(lambdaUser >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  return std::max(minEigH, 0.0) + lambdaUser;
}

/// H + λI.
inline RegularizedHessian ridge(const Matrix& h, double lambda, bool computeMinEig = false) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("ridge lambda must be finite and >= 0");
  RegularizedHessian out;
  out.matrix = detail::symmetrized(h);
  out.matrix.diagonal().array() += lambda;
  out.lambdaFloor = lambda;
  out.kind = RegularizationKind::Ridge;
  if (computeMinEig) out.minEig = min_eigenvalue(out.matrix);
  return out;
}

}  // namespace ssn
