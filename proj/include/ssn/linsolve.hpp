#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ssn/dataset.hpp"
#include "ssn/errors.hpp"

namespace ssn {

/// Tolerances for an approximate Newton direction p:
///   (a) |Hp + g| ≤ θ₁|g|
///   (b) pᵀg ≤ -(1-θ₂) pᵀHp
struct InexactnessSpec {
  double theta1 = 1e-2;
  double theta2 = 0.5;
  std::size_t maxIters = 1000;

  void validate() const {
    if (!(theta1 >= 0.0 && theta1 < 1.0)) throw InvalidArgument("theta1 must lie in [0,1)");
    if (!(theta2 >= 0.0 && theta2 < 1.0)) throw InvalidArgument("theta2 must lie in [0,1)");
    if (maxIters < 1) throw InvalidArgument("inexact solver needs maxIters >= 1");
  }
};

struct InexactCheck {
  bool ok = false;
  double residualRatio = 0.0;  // |Hp + g| / |g|
  double descentRatio = 0.0;   // -pᵀg / pᵀHp, compared against 1-θ₂
};

struct InexactSolve {
  Vector p;
  std::size_t cgIterations = 0;
  bool usedExactFallback = false;
  InexactCheck check;
};

/// Called after every CG iteration with the iteration number and current iterate.
using CgObserver = std::function<void(std::size_t, const Vector&)>;

/// Solves Hp = rhs by Cholesky. Throws NotPositiveDefinite when the factorization
/// fails or the smallest pivot is below 1e-12·max(1, max diag).
inline Vector solve_exact(const Matrix& h, const Vector& rhs) {
  if (h.rows() != h.cols() || h.rows() != rhs.size()) throw InvalidArgument("solve_exact: dimension mismatch");
  if (!h.allFinite() || !rhs.allFinite()) throw NumericalError("solve_exact: non-finite input");
  const Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("matrix is not positive definite");
  const double scale = std::max(1.0, h.diagonal().maxCoeff());
  const Vector pivots = llt.matrixLLT().diagonal();
  if (pivots.cwiseAbs2().minCoeff() <= 1e-12 * scale) throw NotPositiveDefinite("matrix is numerically singular");
  Vector p = llt.solve(rhs);
  if (!p.allFinite()) throw NumericalError("solve_exact: non-finite solution");
  return p;
}

inline InexactCheck verify_inexact(const Matrix& h, const Vector& g, const Vector& p, const InexactnessSpec& spec) {
  const Vector hp = h * p;
  const double gNorm = g.norm();
  InexactCheck c;
  c.residualRatio = gNorm > 0.0 ? (hp + g).norm() / gNorm : (hp + g).norm();
  const double curvature = p.dot(hp);
  const double slope = p.dot(g);
  c.descentRatio = curvature > 0.0 ? -slope / curvature : 0.0;
  const bool residualOk = (hp + g).norm() <= spec.theta1 * gNorm;
  const bool descentOk = slope <= -(1.0 - spec.theta2) * curvature;
  c.ok = residualOk && descentOk;
  return c;
}

/// Conjugate gradients on Hp = -g from p = 0. Stops at the first iterate that
/// satisfies both inexactness conditions; falls back to a Cholesky solve after
/// spec.maxIters iterations.
inline InexactSolve solve_inexact(const Matrix& h, const Vector& g, const InexactnessSpec& spec,
                                  const CgObserver& observer = {}) {
  spec.validate();
  if (h.rows() != h.cols() || h.rows() != g.size()) throw InvalidArgument("solve_inexact: dimension mismatch");
  if (!h.allFinite() || !g.allFinite()) throw NumericalError("solve_inexact: non-finite input");
  const double gNorm = g.norm();
  if (gNorm == 0.0) throw InvalidArgument("solve_inexact: gradient is zero");

  InexactSolve out;
  if (spec.theta1 == 0.0) {
    out.p = solve_exact(h, -g);
    out.usedExactFallback = true;
    out.check = verify_inexact(h, g, out.p, spec);
    return out;
  }

  Vector p = Vector::Zero(g.size());
  Vector r = -g;
  Vector d = r;
  double rr = r.squaredNorm();
  const double target = spec.theta1 * gNorm;
  for (std::size_t it = 1; it <= spec.maxIters; ++it) {
    const Vector hd = h * d;
    const double curvature = d.dot(hd);
    if (!(curvature > 0.0)) throw NotPositiveDefinite("CG met non-positive curvature");
    const double step = rr / curvature;
    p.noalias() += step * d;
    r.noalias() -= step * hd;
    const double rrNext = r.squaredNorm();
    out.cgIterations = it;
    if (observer) observer(it, p);
    if (std::sqrt(rrNext) <= target) {
      // Hp = -g - r, so both conditions are checked without another product.
      const double pHp = -p.dot(g) - p.dot(r);
      if (p.dot(g) <= -(1.0 - spec.theta2) * pHp) {
        out.p = std::move(p);
        out.check = verify_inexact(h, g, out.p, spec);
        if (out.check.ok) return out;
        p = out.p;
      }
    }
    if (rrNext == 0.0) break;
    d = r + (rrNext / rr) * d;
    rr = rrNext;
  }
  out.p = solve_exact(h, -g);
  out.usedExactFallback = true;
  out.check = verify_inexact(h, g, out.p, spec);
  if (!out.check.ok && spec.theta1 > 0.0)
    throw NumericalError("inexact solve: exact fallback does not meet the inexactness conditions");
  return out;
}

}  // namespace ssn
