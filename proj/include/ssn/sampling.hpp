#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ssn/errors.hpp"
#include "ssn/model.hpp"

namespace ssn {

using Rng = std::mt19937_64;

/// Component indices drawn from {0..sourceN-1}, kept in ascending order so that
/// accumulation over the sample is reproducible.
struct SampleSet {
  std::vector<std::size_t> indices;
  Replacement mode = Replacement::Without;
  std::size_t sourceN = 0;

  std::size_t size() const noexcept { return indices.size(); }

  void validate() const {
    if (indices.empty()) throw InvalidArgument("sample set is empty");
    for (const std::size_t i : indices)
      if (i >= sourceN) throw InvalidArgument("sample index " + std::to_string(i) + " out of range");
    if (mode == Replacement::Without) {
      if (indices.size() > sourceN) throw InvalidArgument("sample larger than population without replacement");
      if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
        throw InvalidArgument("repeated index in a without-replacement sample");
    }
  }
};

inline SampleSet full_sample(std::size_t n) {
  SampleSet s{std::vector<std::size_t>(n), Replacement::Without, n};
  std::iota(s.indices.begin(), s.indices.end(), std::size_t{0});
  return s;
}

namespace detail {

inline std::size_t ceil_to_count(double v) {
  if (!std::isfinite(v) || v >= static_cast<double>(std::numeric_limits<std::size_t>::max() / 2))
    return std::numeric_limits<std::size_t>::max() / 2;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(v)));
}

}  // namespace detail

/// |S| ≥ 2 κ₁ ln(p/δ) / ε² guarantees λ_min(H) ≥ (1-ε)γ with probability 1-δ.
inline std::size_t hessian_sample_size(double kappa1, double eps, double delta, std::size_t p) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("hessian_sample_size: eps must lie in (0,1)");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("hessian_sample_size: delta must lie in (0,1)");
  if (!(kappa1 >= 1.0)) throw InvalidArgument("hessian_sample_size: kappa1 must be >= 1");
  if (p < 1) throw InvalidArgument("hessian_sample_size: p must be >= 1");
  return detail::ceil_to_count(2.0 * kappa1 * std::log(static_cast<double>(p) / delta) / (eps * eps));
}

/// |S| ≥ (G²/ε²)(1 + √(8 ln(1/δ)))² guarantees |∇F - g| ≤ ε with probability 1-δ.
inline std::size_t gradient_sample_size(double G, double eps, double delta) {
  if (!(G > 0.0) || !std::isfinite(G)) throw InvalidArgument("gradient_sample_size: G must be positive and finite");
  if (!(eps > 0.0)) throw InvalidArgument("gradient_sample_size: eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("gradient_sample_size: delta must lie in (0,1)");
  const double root = 1.0 + std::sqrt(8.0 * std::log(1.0 / delta));
  return detail::ceil_to_count(G * G / (eps * eps) * root * root);
}

/// Uniform draw of `size` indices from {0..n-1}. Without replacement uses a
/// partial Fisher–Yates shuffle over a sparse swap table, so cost is O(size).
inline SampleSet draw(std::size_t n, std::size_t size, Replacement mode, Rng& rng) {
  if (n < 1) throw InvalidArgument("draw: population is empty");
  if (size < 1) throw InvalidArgument("draw: sample size must be >= 1");
  if (mode == Replacement::Without && size > n)
    throw InvalidArgument("draw: sample size " + std::to_string(size) + " exceeds population " + std::to_string(n) +
                          " without replacement");
  SampleSet s{{}, mode, n};
  s.indices.reserve(size);
  if (mode == Replacement::With) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t j = 0; j < size; ++j) s.indices.push_back(pick(rng));
  } else {
    std::unordered_map<std::size_t, std::size_t> swapped;
    auto at = [&](std::size_t i) {
      const auto it = swapped.find(i);
      return it == swapped.end() ? i : it->second;
    };
    for (std::size_t j = 0; j < size; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, n - 1);
      const std::size_t k = pick(rng);
      const std::size_t vk = at(k);
      swapped[k] = at(j);
      s.indices.push_back(vk);
    }
  }
  std::sort(s.indices.begin(), s.indices.end());
  return s;
}

/// A requested sample size after fitting it to the population.
struct SampleSizePlan {
  std::size_t size = 0;
  bool clamped = false;   // requested size was at least n
  bool useFullSet = false;
};

/// Sizes at or above n are served by the whole index set, which makes the
/// sampled quantity exact.
inline SampleSizePlan plan_sample_size(std::size_t requested, std::size_t n) {
  if (requested >= n) return {n, requested > n, true};
  return {std::max<std::size_t>(requested, 1), false, false};
}

inline SampleSet draw_planned(const SampleSizePlan& plan, std::size_t n, Replacement mode, Rng& rng) {
  return plan.useFullSet ? full_sample(n) : draw(n, plan.size, mode, rng);
}

template <FiniteSumObjective M>
Matrix subsampled_hessian(const M& model, const Vector& x, const SampleSet& sample) {
  if (sample.sourceN != model.n()) throw InvalidArgument("sample drawn for a different population size");
  sample.validate();
  return model.component_hessian_accumulate(sample.indices, x);
}

template <FiniteSumObjective M>
Vector subsampled_gradient(const M& model, const Vector& x, const SampleSet& sample) {
  if (sample.sourceN != model.n()) throw InvalidArgument("sample drawn for a different population size");
  sample.validate();
  return model.gradient_accumulate(sample.indices, x);
}

/// Outcome of repeatedly drawing a sample and testing a sampling guarantee.
struct LemmaTrial {
  std::size_t sampleSize = 0;
  std::size_t resamples = 0;
  std::size_t failures = 0;
  bool fullSet = false;  // the lemma size reached n, so every draw is exact

  double frequency() const { return resamples ? static_cast<double>(failures) / static_cast<double>(resamples) : 0.0; }
};

/// Counts draws of the lemma-sized Hessian sample with λ_min(H_S) < (1-ε)γ.
template <FiniteSumObjective M>
LemmaTrial hessian_lemma_trial(const M& model, const Vector& x, const ConditionEstimates& est, double eps,
                               double delta, std::size_t resamples, Replacement mode, Rng& rng) {
  if (!est.strongly_convex()) throw InvalidArgument("Hessian lemma trial needs gamma > 0");
  const SampleSizePlan plan = plan_sample_size(hessian_sample_size(est.kappa1(), eps, delta, model.dim()), model.n());
  LemmaTrial t{plan.size, resamples, 0, plan.useFullSet};
  const double floor = (1.0 - eps) * est.gamma;
  for (std::size_t r = 0; r < resamples; ++r) {
    const Matrix h = subsampled_hessian(model, x, draw_planned(plan, model.n(), mode, rng));
    const Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolve did not converge");
    if (es.eigenvalues()(0) < floor) ++t.failures;
  }
  return t;
}

/// Counts draws of the lemma-sized gradient sample with |∇F(x) - g| > ε.
template <FiniteSumObjective M>
LemmaTrial gradient_lemma_trial(const M& model, const Vector& x, double eps, double delta, std::size_t resamples,
                                Replacement mode, Rng& rng) {
  const GradientBound bound = model.gradient_norm_bound(x);
  const SampleSizePlan plan = plan_sample_size(gradient_sample_size(bound.value, eps, delta), model.n());
  LemmaTrial t{plan.size, resamples, 0, plan.useFullSet};
  const Vector full = model.gradient(x);
  for (std::size_t r = 0; r < resamples; ++r) {
    const Vector g = subsampled_gradient(model, x, draw_planned(plan, model.n(), mode, rng));
    if ((full - g).norm() > eps) ++t.failures;
  }
  return t;
}

}  // namespace ssn
