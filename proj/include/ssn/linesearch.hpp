#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "ssn/dataset.hpp"
#include "ssn/errors.hpp"

namespace ssn {

struct LineSearchParams {
  double beta = 1e-4;
  double alphaHat = 1.0;
  double shrink = 0.5;
  std::size_t maxBacktracks = 60;

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0,1)");
    if (!(alphaHat >= 1.0) || !std::isfinite(alphaHat)) throw InvalidArgument("alpha-hat must be >= 1");
    if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("shrink factor must lie in (0,1)");
  }
};

struct LineSearchResult {
  double alpha = 0.0;
  std::size_t trials = 0;  // number of backtracks taken
  double value = 0.0;      // F(x + alpha p)
};

/// No grid step satisfied the sufficient-decrease test.
class LineSearchFailure : public NumericalError {
 public:
  LineSearchFailure(const std::string& what, double lastAlpha, double lastValue, std::size_t trials)
      : NumericalError(what), lastAlpha_(lastAlpha), lastValue_(lastValue), trials_(trials) {}

  double last_alpha() const noexcept { return lastAlpha_; }
  double last_value() const noexcept { return lastValue_; }
  std::size_t trials() const noexcept { return trials_; }

 private:
  double lastAlpha_;
  double lastValue_;
  std::size_t trials_;
};

/// Largest α in {α̂, α̂·s, α̂·s², …} with F(x + αp) ≤ F(x) + αβ pᵀg.
/// `gUsed` is whichever gradient the method steers by (full or sub-sampled).
/// When even the full step predicts a decrease below a few ulps of F(x), trials
/// are compared up to that rounding slack; otherwise near x* no step would pass.
template <class ValueFn>
LineSearchResult armijo(ValueFn&& valueFn, const Vector& x, const Vector& p, const Vector& gUsed,
                        const LineSearchParams& params, double fx) {
  params.validate();
  const double slope = p.dot(gUsed);
  if (!(slope < 0.0)) throw LineSearchFailure("search direction is not a descent direction", 0.0, fx, 0);
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(fx);
  const bool atResolution = -params.alphaHat * slope <= slack;
  double alpha = params.alphaHat;
  double value = 0.0;
  for (std::size_t trials = 0;; ++trials) {
    const Vector trial = x + alpha * p;
    bool finite = true;
    try {
      value = valueFn(trial);
      finite = std::isfinite(value);
    } catch (const NumericalError&) {
      finite = false;
    }
    const bool decreases = value <= fx + alpha * params.beta * slope;
    if (finite && (decreases || (atResolution && value <= fx + slack))) return {alpha, trials, value};
    if (trials == params.maxBacktracks)
      throw LineSearchFailure("Armijo backtracking exhausted after " + std::to_string(trials) + " backtracks",
                              alpha, value, trials);
    alpha *= params.shrink;
  }
}

template <class ValueFn>
LineSearchResult armijo(ValueFn&& valueFn, const Vector& x, const Vector& p, const Vector& gUsed,
                        const LineSearchParams& params) {
  const double fx = valueFn(x);
  return armijo(std::forward<ValueFn>(valueFn), x, p, gUsed, params, fx);
}

}  // namespace ssn
