#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ssn/errors.hpp"

namespace ssn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using DenseRows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Storage { Dense, Sparse };

/// Response-covariate pairs (a_i, b_i), i = 0..n-1, stored row-major.
class Dataset {
 public:
  Dataset(DenseRows features, Vector labels) : features_(std::move(features)), labels_(std::move(labels)) {
    check_shape();
  }

  Dataset(SparseRows features, Vector labels) : features_(std::move(features)), labels_(std::move(labels)) {
    std::get<SparseRows>(features_).makeCompressed();
    check_shape();
  }

  std::size_t n() const noexcept { return static_cast<std::size_t>(labels_.size()); }
  std::size_t p() const noexcept {
    return static_cast<std::size_t>(std::visit([](const auto& a) { return a.cols(); }, features_));
  }

  Storage storage() const noexcept {
    return std::holds_alternative<DenseRows>(features_) ? Storage::Dense : Storage::Sparse;
  }

  const Vector& labels() const noexcept { return labels_; }
  double label(std::size_t i) const { return labels_(static_cast<Eigen::Index>(i)); }

  /// Calls `f` with the underlying feature matrix (DenseRows or SparseRows).
  template <class F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), features_);
  }

  /// a_i^T x for every row.
  Vector margins(const Vector& x) const {
    return visit([&](const auto& a) -> Vector { return a * x; });
  }

  /// A^T w.
  Vector transpose_times(const Vector& w) const {
    return visit([&](const auto& a) -> Vector { return a.transpose() * w; });
  }

  double row_dot(std::size_t i, const Vector& x) const {
    const auto r = static_cast<Eigen::Index>(i);
    if (const auto* d = std::get_if<DenseRows>(&features_)) return d->row(r).dot(x);
    const auto& s = std::get<SparseRows>(features_);
    double acc = 0.0;
    for (SparseRows::InnerIterator it(s, r); it; ++it) acc += it.value() * x(it.index());
    return acc;
  }

  /// out += scale * a_i
  void add_row(std::size_t i, double scale, Vector& out) const {
    const auto r = static_cast<Eigen::Index>(i);
    if (const auto* d = std::get_if<DenseRows>(&features_)) {
      out.noalias() += scale * d->row(r).transpose();
      return;
    }
    const auto& s = std::get<SparseRows>(features_);
    for (SparseRows::InnerIterator it(s, r); it; ++it) out(it.index()) += scale * it.value();
  }

  Vector row(std::size_t i) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(p()));
    add_row(i, 1.0, out);
    return out;
  }

  double row_norm_squared(std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(i);
    if (const auto* d = std::get_if<DenseRows>(&features_)) return d->row(r).squaredNorm();
    return std::get<SparseRows>(features_).row(r).squaredNorm();
  }

  std::size_t nonzeros() const {
    if (const auto* d = std::get_if<DenseRows>(&features_)) return static_cast<std::size_t>((d->array() != 0.0).count());
    return static_cast<std::size_t>(std::get<SparseRows>(features_).nonZeros());
  }

  DenseRows to_dense() const {
    if (const auto* d = std::get_if<DenseRows>(&features_)) return *d;
    return DenseRows(std::get<SparseRows>(features_));
  }

  /// (1/m) sum_j w_j a_j a_j^T over the listed rows; duplicates count with multiplicity.
  Matrix weighted_gram(std::span<const std::size_t> rows, std::span<const double> weights) const {
    const auto dim = static_cast<Eigen::Index>(p());
    const auto m = static_cast<Eigen::Index>(rows.size());
    Matrix out = Matrix::Zero(dim, dim);
    if (m == 0) return out;
    if (const auto* d = std::get_if<DenseRows>(&features_)) {
      DenseRows gathered(m, dim);
      for (Eigen::Index j = 0; j < m; ++j)
        gathered.row(j) = std::sqrt(weights[static_cast<std::size_t>(j)]) *
                          d->row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)]));
      out.selfadjointView<Eigen::Lower>().rankUpdate(gathered.transpose(), 1.0 / static_cast<double>(m));
      return Matrix(out.selfadjointView<Eigen::Lower>());
    }
    const auto& s = std::get<SparseRows>(features_);
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double root = std::sqrt(weights[static_cast<std::size_t>(j)]);
      for (SparseRows::InnerIterator it(s, static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)])); it; ++it)
        trips.emplace_back(j, it.index(), root * it.value());
    }
    SparseRows gathered(m, dim);
    gathered.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseMatrix<double> prod = gathered.transpose() * gathered;
    out = Matrix(prod) / static_cast<double>(m);
    return out;
  }

 private:
  void check_shape() const {
    const auto rows = visit([](const auto& a) { return a.rows(); });
    const auto cols = visit([](const auto& a) { return a.cols(); });
    if (rows != labels_.size()) throw InvalidArgument("dataset: feature rows and labels differ in count");
    if (rows < 1) throw InvalidArgument("dataset: n must be at least 1");
    if (cols < 1) throw InvalidArgument("dataset: p must be at least 1");
  }

  std::variant<DenseRows, SparseRows> features_;
  Vector labels_;
};

}  // namespace ssn
