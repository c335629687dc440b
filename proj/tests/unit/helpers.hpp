#pragma once

#include <cmath>
#include <random>

#include "ssn/ssn.hpp"

namespace testing_support {

using ssn::DenseRows;
using ssn::Family;
using ssn::Matrix;
using ssn::Vector;

/// Small dense problem with labels valid for `family`.
inline ssn::GlmObjective small_glm(Family family, std::size_t n, std::size_t p, double reg, std::uint64_t seed,
                                   double rowScale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  std::poisson_distribution<int> counts(2.0);
  DenseRows a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Vector b(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rowScale * normal(rng) / std::sqrt(static_cast<double>(p));
    switch (family) {
      case Family::Ridge: b(i) = normal(rng); break;
      case Family::Logistic: b(i) = coin(rng); break;
      case Family::Poisson: b(i) = counts(rng); break;
    }
  }
  return ssn::GlmObjective(ssn::Dataset(std::move(a), std::move(b)), family, reg);
}

inline Vector random_vector(Eigen::Index p, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = normal(rng);
  return v;
}

inline Matrix random_symmetric(Eigen::Index p, std::mt19937_64& rng) {
  const Matrix m = ssn::Matrix::NullaryExpr(p, p, [&] { return std::normal_distribution<double>(0.0, 1.0)(rng); });
  return 0.5 * (m + m.transpose());
}

inline Matrix random_spd(Eigen::Index p, std::mt19937_64& rng, double shift = 0.1) {
  const Matrix m = ssn::Matrix::NullaryExpr(p, p, [&] { return std::normal_distribution<double>(0.0, 1.0)(rng); });
  return m * m.transpose() / static_cast<double>(p) + shift * Matrix::Identity(p, p);
}

/// Quadratic ½xᵀQx - cᵀx as a finite sum of n ridge components: a ridge GLM
/// whose Hessian is (1/n)AᵀA + reg·I.
inline ssn::GlmObjective ridge_quadratic(std::size_t n, std::size_t p, double reg, std::uint64_t seed) {
  return small_glm(Family::Ridge, n, p, reg, seed);
}

}  // namespace testing_support
