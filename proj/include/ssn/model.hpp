#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssn/dataset.hpp"
#include "ssn/errors.hpp"

namespace ssn {

enum class Family { Ridge, Logistic, Poisson };

enum class Replacement { With, Without };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Ridge: return "ridge";
    case Family::Logistic: return "logistic";
    case Family::Poisson: return "poisson";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "ridge") return Family::Ridge;
  if (s == "logistic") return Family::Logistic;
  if (s == "poisson") return Family::Poisson;
  throw InvalidArgument("unknown model family '" + s + "'");
}

/// Curvature constants of a finite-sum objective.
///
/// `perComponentK` holds K_i in component order; `gamma` and `bigK` bound the
/// spectrum of the full Hessian. The sub-sampling quantities K̂_q, κ_q and κ̃
/// are derived from the sorted K_i on demand.
class ConditionEstimates {
 public:
  double gamma = 0.0;
  double bigK = 0.0;
  std::vector<double> perComponentK;
  std::optional<double> lipschitzL;

  ConditionEstimates() = default;

  ConditionEstimates(std::vector<double> componentK, double gammaLower, double smoothUpper)
      : gamma(gammaLower), bigK(smoothUpper), perComponentK(std::move(componentK)) {
    if (perComponentK.empty()) throw InvalidArgument("condition estimates: no components");
    if (gamma < 0.0 || !std::isfinite(gamma)) throw InvalidArgument("condition estimates: gamma must be finite and >= 0");
    sorted_ = perComponentK;
    std::sort(sorted_.begin(), sorted_.end(), std::greater<>());
    prefix_.resize(sorted_.size() + 1, 0.0);
    for (std::size_t i = 0; i < sorted_.size(); ++i) prefix_[i + 1] = prefix_[i] + sorted_[i];
  }

  /// K defaults to the mean of the K_i, which always bounds the full Hessian.
  static ConditionEstimates from_components(std::vector<double> componentK, double gammaLower) {
    const double mean =
        std::accumulate(componentK.begin(), componentK.end(), 0.0) / static_cast<double>(componentK.size());
    return ConditionEstimates(std::move(componentK), gammaLower, mean);
  }

  std::size_t n() const noexcept { return perComponentK.size(); }
  bool strongly_convex() const noexcept { return gamma > 0.0; }

  /// Mean of the q largest K_i.
  double khat(std::size_t q) const {
    if (q < 1 || q > sorted_.size()) throw InvalidArgument("khat: q must lie in [1, n]");
    return prefix_[q] / static_cast<double>(q);
  }

  double kappa() const { return ratio(bigK); }
  double kappa_q(std::size_t q) const { return ratio(khat(q)); }
  double kappa1() const { return kappa_q(1); }

  /// κ₁ for sampling with replacement, κ_|S| without.
  double kappa_tilde(std::size_t sampleSize, Replacement mode) const {
    if (mode == Replacement::With) return kappa1();
    return kappa_q(std::clamp<std::size_t>(sampleSize, 1, sorted_.size()));
  }

 private:
  double ratio(double top) const {
    return gamma > 0.0 ? top / gamma : std::numeric_limits<double>::infinity();
  }

  std::vector<double> sorted_;
  std::vector<double> prefix_;
};

/// G(x) with a flag set when the estimate hit the configured cap.
struct GradientBound {
  double value = 0.0;
  bool saturated = false;
};

/// What the sub-sampled Newton drivers require of an objective.
template <class M>
concept FiniteSumObjective = requires(const M& m, const Vector& x, std::span<const std::size_t> idx) {
  { m.n() } -> std::convertible_to<std::size_t>;
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.value(x) } -> std::convertible_to<double>;
  { m.gradient(x) } -> std::convertible_to<Vector>;
  { m.hessian(x) } -> std::convertible_to<Matrix>;
  { m.gradient_accumulate(idx, x) } -> std::convertible_to<Vector>;
  { m.component_hessian_accumulate(idx, x) } -> std::convertible_to<Matrix>;
  { m.gradient_norm_bound(x) } -> std::convertible_to<GradientBound>;
  { m.curvature_constants(std::optional<double>{}) } -> std::convertible_to<ConditionEstimates>;
};

namespace detail {

inline constexpr double kExpClamp = 700.0;

inline double clamped_exp(double t) { return std::exp(std::min(t, kExpClamp)); }

inline double cumulant(Family f, double t) {
  switch (f) {
    case Family::Ridge: return 0.5 * t * t;
    case Family::Logistic: return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    case Family::Poisson: return clamped_exp(t);
  }
  return 0.0;
}

inline double cumulant_d1(Family f, double t) {
  switch (f) {
    case Family::Ridge: return t;
    case Family::Logistic:
      if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
      else {
        const double e = std::exp(t);
        return e / (1.0 + e);
      }
    case Family::Poisson: return clamped_exp(t);
  }
  return 0.0;
}

inline double cumulant_d2(Family f, double t) {
  switch (f) {
    case Family::Ridge: return 1.0;
    case Family::Logistic: {
      const double s = cumulant_d1(f, t);
      return s * (1.0 - s);
    }
    case Family::Poisson: return clamped_exp(t);
  }
  return 0.0;
}

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite result");
}

}  // namespace detail

struct GlmOptions {
  /// Upper saturation for G(x); Poisson bounds grow like exp(|x|^2 / 2).
  double gradientBoundCap = 1e150;
  /// Above this dimension γ falls back to λ_reg and K to the mean K_i.
  std::size_t exactSpectrumMaxDim = 2000;
};

/// ℓ2-regularized GLM negative log-likelihood
///   F(x) = (1/n) Σ [Φ(a_iᵀx) - b_i a_iᵀx + (λ/2)|x|²].
///
/// The penalty is carried by every component so that F is exactly the mean of
/// the f_i and each component Hessian is Φ''(a_iᵀx) a_i a_iᵀ + λI.
class GlmObjective {
 public:
  GlmObjective(Dataset data, Family family, double reg, GlmOptions options = {})
      : data_(std::move(data)), family_(family), reg_(reg), options_(options) {
    if (!(reg_ >= 0.0) || !std::isfinite(reg_)) throw InvalidArgument("regularization weight must be finite and >= 0");
    validate_labels();
    precompute_bound_constants();
  }

  std::size_t n() const noexcept { return data_.n(); }
  std::size_t dim() const noexcept { return data_.p(); }
  Family family() const noexcept { return family_; }
  double reg() const noexcept { return reg_; }
  const Dataset& data() const noexcept { return data_; }

  double value(const Vector& x) const {
    check_dim(x);
    const Vector t = data_.margins(x);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) acc += detail::cumulant(family_, t(i)) - data_.labels()(i) * t(i);
    const double v = acc / static_cast<double>(n()) + 0.5 * reg_ * x.squaredNorm();
    detail::check_finite(v, "objective value");
    return v;
  }

  double component_value(std::size_t i, const Vector& x) const {
    check_index(i);
    check_dim(x);
    const double t = data_.row_dot(i, x);
    const double v = detail::cumulant(family_, t) - data_.label(i) * t + 0.5 * reg_ * x.squaredNorm();
    detail::check_finite(v, "component value");
    return v;
  }

  Vector gradient(const Vector& x) const {
    check_dim(x);
    const Vector t = data_.margins(x);
    Vector w(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) w(i) = detail::cumulant_d1(family_, t(i)) - data_.labels()(i);
    Vector g = data_.transpose_times(w) / static_cast<double>(n());
    g.noalias() += reg_ * x;
    detail::check_finite(g.squaredNorm(), "gradient");
    return g;
  }

  Vector component_gradient(std::size_t i, const Vector& x) const {
    check_index(i);
    check_dim(x);
    Vector g = reg_ * x;
    data_.add_row(i, detail::cumulant_d1(family_, data_.row_dot(i, x)) - data_.label(i), g);
    detail::check_finite(g.squaredNorm(), "component gradient");
    return g;
  }

  /// (1/|S|) Σ_{j∈S} ∇f_j(x), accumulated in the order given.
  Vector gradient_accumulate(std::span<const std::size_t> indices, const Vector& x) const {
    if (indices.empty()) throw InvalidArgument("gradient accumulation: empty sample");
    check_dim(x);
    Vector g = Vector::Zero(x.size());
    for (const std::size_t i : indices) {
      check_index(i);
      data_.add_row(i, detail::cumulant_d1(family_, data_.row_dot(i, x)) - data_.label(i), g);
    }
    g /= static_cast<double>(indices.size());
    g.noalias() += reg_ * x;
    detail::check_finite(g.squaredNorm(), "sub-sampled gradient");
    return g;
  }

  /// (1/|S|) Σ_{j∈S} Φ''(a_jᵀx) a_j a_jᵀ + λI.
  Matrix component_hessian_accumulate(std::span<const std::size_t> indices, const Vector& x) const {
    if (indices.empty()) throw InvalidArgument("Hessian accumulation: empty sample");
    check_dim(x);
    std::vector<double> weights;
    weights.reserve(indices.size());
    for (const std::size_t i : indices) {
      check_index(i);
      weights.push_back(detail::cumulant_d2(family_, data_.row_dot(i, x)));
    }
    Matrix h = data_.weighted_gram(indices, weights);
    h.diagonal().array() += reg_;
    detail::check_finite(h.squaredNorm(), "sub-sampled Hessian");
    return h;
  }

  Matrix hessian(const Vector& x) const { return component_hessian_accumulate(all_indices(), x); }

  /// G(x) ≥ max_i |∇f_i(x)| from the per-family closed forms.
  GradientBound gradient_norm_bound(const Vector& x) const {
    check_dim(x);
    const double xn = x.norm();
    double g = 0.0;
    switch (family_) {
      case Family::Ridge: g = xn * maxRowNormSqPlusReg_ + maxAbsLabelTimesNorm_; break;
      case Family::Logistic: g = reg_ * xn + maxOnePlusAbsLabelTimesNorm_; break;
      case Family::Poisson: {
        const double logMiddle = 0.5 * xn * xn + logMaxNormExpHalfNormSq_;
        const double middle = logMiddle > std::log(options_.gradientBoundCap) ? options_.gradientBoundCap
                                                                             : std::exp(logMiddle);
        g = reg_ * xn + middle + maxAbsLabelTimesNorm_;
        break;
      }
    }
    if (!std::isfinite(g) || g >= options_.gradientBoundCap) return {options_.gradientBoundCap, true};
    return {g, false};
  }

  /// K_i, γ and K for this model.
  ///
  /// Poisson curvature is unbounded globally, so its constants are taken over the
  /// ball |x| ≤ radius, which must be supplied for that family. γ falls back to
  /// λ_reg when the data term has no positive lower curvature (logistic) or the
  /// dimension exceeds the exact-spectrum limit.
  ConditionEstimates curvature_constants(std::optional<double> radius) const {
    if (family_ == Family::Poisson && !radius)
      throw InvalidArgument("Poisson curvature constants need a domain radius");
    if (radius && !(*radius >= 0.0)) throw InvalidArgument("domain radius must be >= 0");
    const double r = radius.value_or(0.0);

    std::vector<double> componentK(n());
    std::vector<double> upperWeights(n());
    std::vector<double> lowerWeights(n());
    for (std::size_t i = 0; i < n(); ++i) {
      const double normSq = data_.row_norm_squared(i);
      const double norm = std::sqrt(normSq);
      switch (family_) {
        case Family::Ridge:
          upperWeights[i] = 1.0;
          lowerWeights[i] = 1.0;
          break;
        case Family::Logistic:
          upperWeights[i] = 0.25;
          lowerWeights[i] = 0.0;
          break;
        case Family::Poisson:
          upperWeights[i] = detail::clamped_exp(norm * r);
          lowerWeights[i] = std::exp(-norm * r);
          break;
      }
      componentK[i] = upperWeights[i] * normSq + reg_;
    }

    double gamma = reg_;
    double bigK = std::accumulate(componentK.begin(), componentK.end(), 0.0) / static_cast<double>(n());
    if (dim() <= options_.exactSpectrumMaxDim) {
      const auto idx = all_indices();
      const Matrix upper = data_.weighted_gram(idx, upperWeights);
      bigK = reg_ + Eigen::SelfAdjointEigenSolver<Matrix>(upper, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
      if (std::any_of(lowerWeights.begin(), lowerWeights.end(), [](double w) { return w > 0.0; })) {
        const Matrix lower = data_.weighted_gram(idx, lowerWeights);
        const double lmin =
            Eigen::SelfAdjointEigenSolver<Matrix>(lower, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
        gamma += std::max(lmin, 0.0);
      }
    }
    return ConditionEstimates(std::move(componentK), gamma, bigK);
  }

  /// Curvature constants of the component Hessians at a fixed x:
  /// K_i = Φ''(a_iᵀx)|a_i|² + λ, γ = λ_min(∇²F(x)), K = λ_max(∇²F(x)).
  ConditionEstimates local_curvature(const Vector& x) const {
    check_dim(x);
    const Vector t = data_.margins(x);
    std::vector<double> componentK(n());
    for (std::size_t i = 0; i < n(); ++i)
      componentK[i] = detail::cumulant_d2(family_, t(static_cast<Eigen::Index>(i))) * data_.row_norm_squared(i) + reg_;
    const Eigen::SelfAdjointEigenSolver<Matrix> es(hessian(x), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("Hessian eigensolve did not converge");
    const Vector& ev = es.eigenvalues();
    return ConditionEstimates(std::move(componentK), std::max(ev(0), 0.0), ev(ev.size() - 1));
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(n());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }

 private:
  void check_dim(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != dim())
      throw InvalidArgument("iterate dimension " + std::to_string(x.size()) + " does not match p = " +
                            std::to_string(dim()));
  }

  void check_index(std::size_t i) const {
    if (i >= n()) throw InvalidArgument("component index " + std::to_string(i) + " out of range");
  }

  void validate_labels() const {
    for (std::size_t i = 0; i < n(); ++i) {
      const double b = data_.label(i);
      if (!std::isfinite(b)) throw InvalidArgument("label " + std::to_string(i) + " is not finite");
      if (family_ == Family::Logistic && b != 0.0 && b != 1.0)
        throw InvalidArgument("logistic labels must be 0 or 1 (row " + std::to_string(i) + ")");
      if (family_ == Family::Poisson && (b < 0.0 || b != std::floor(b)))
        throw InvalidArgument("Poisson labels must be non-negative integers (row " + std::to_string(i) + ")");
    }
  }

  void precompute_bound_constants() {
    maxRowNormSqPlusReg_ = 0.0;
    maxAbsLabelTimesNorm_ = 0.0;
    maxOnePlusAbsLabelTimesNorm_ = 0.0;
    logMaxNormExpHalfNormSq_ = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n(); ++i) {
      const double normSq = data_.row_norm_squared(i);
      const double norm = std::sqrt(normSq);
      const double b = std::abs(data_.label(i));
      maxRowNormSqPlusReg_ = std::max(maxRowNormSqPlusReg_, normSq + reg_);
      maxAbsLabelTimesNorm_ = std::max(maxAbsLabelTimesNorm_, b * norm);
      maxOnePlusAbsLabelTimesNorm_ = std::max(maxOnePlusAbsLabelTimesNorm_, (1.0 + b) * norm);
      if (norm > 0.0) logMaxNormExpHalfNormSq_ = std::max(logMaxNormExpHalfNormSq_, std::log(norm) + 0.5 * normSq);
    }
  }

  Dataset data_;
  Family family_;
  double reg_;
  GlmOptions options_;

  double maxRowNormSqPlusReg_ = 0.0;
  double maxAbsLabelTimesNorm_ = 0.0;
  double maxOnePlusAbsLabelTimesNorm_ = 0.0;
  double logMaxNormExpHalfNormSq_ = 0.0;
};

}  // namespace ssn
