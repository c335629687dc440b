#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "ssn/errors.hpp"

// Closed-form constants from the global convergence results: linear-rate factors
// ρ, step-size floors, inexactness thresholds on θ₁, σ thresholds for the
// gradient-sampled STOP rule, and the local-phase iteration counts.
//
// Every ρ takes the step size α actually accepted by the line search; pass the
// returned alphaFloor back in to obtain the worst case.

namespace ssn {

struct RatePrediction {
  double rho = 0.0;
  double alphaFloor = 0.0;
  std::optional<double> theta1Max;
  std::optional<double> sigmaMin;
  /// c in F(x_{k+1}) ≤ F(x_k) - c |∇F(x_k)|² (regularized variants).
  std::optional<double> decreaseCoeff;
  std::optional<std::size_t> kLocal;
  std::optional<double> q1;
  std::optional<double> q2;
  std::string regime;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

inline void require_open_unit(double v, const char* name) {
  require(v > 0.0 && v < 1.0, std::string(name) + " must lie in (0,1)");
}

inline void require_half_open_unit(double v, const char* name) {
  require(v >= 0.0 && v < 1.0, std::string(name) + " must lie in [0,1)");
}

inline void require_condition(double kappa, double kappaTilde) {
  require(kappa >= 1.0 && std::isfinite(kappa), "kappa must be finite and >= 1");
  require(kappaTilde >= 1.0 && std::isfinite(kappaTilde), "kappa-tilde must be finite and >= 1");
}

inline void require_step(double alpha) { require(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive"); }

}  // namespace detail

/// Hessian sub-sampling with exact solves: ρ = 2αβ/κ̃, α ≥ 2(1-β)(1-ε)/κ.
inline RatePrediction rate_alg1(double beta, double eps, double kappa, double kappaTilde, double alpha) {
  detail::require_open_unit(beta, "beta");
  detail::require_open_unit(eps, "eps");
  detail::require_condition(kappa, kappaTilde);
  detail::require_step(alpha);
  RatePrediction r;
  r.rho = 2.0 * alpha * beta / kappaTilde;
  r.alphaFloor = 2.0 * (1.0 - beta) * (1.0 - eps) / kappa;
  r.regime = "exact";
  return r;
}

/// √((1-ε)/(4κ̃)): below it the inexact method keeps the ρ = αβ/κ̃ rate.
inline double theta1_threshold(double eps, double kappaTilde) { return std::sqrt((1.0 - eps) / (4.0 * kappaTilde)); }

inline double rho_alg1_inexact_tight(double beta, double kappaTilde, double alpha) { return alpha * beta / kappaTilde; }

inline double rho_alg1_inexact_loose(double beta, double eps, double theta1, double theta2, double kappaTilde,
                                     double alpha) {
  return 2.0 * (1.0 - theta2) * (1.0 - theta1) * (1.0 - theta1) * (1.0 - eps) * alpha * beta /
         (kappaTilde * kappaTilde);
}

inline RatePrediction rate_alg1_inexact(double beta, double eps, double theta1, double theta2, double kappa,
                                        double kappaTilde, double alpha) {
  detail::require_open_unit(beta, "beta");
  detail::require_open_unit(eps, "eps");
  detail::require_half_open_unit(theta1, "theta1");
  detail::require_half_open_unit(theta2, "theta2");
  detail::require_condition(kappa, kappaTilde);
  detail::require_step(alpha);
  RatePrediction r;
  r.theta1Max = theta1_threshold(eps, kappaTilde);
  if (theta1 <= *r.theta1Max) {
    r.rho = rho_alg1_inexact_tight(beta, kappaTilde, alpha);
    r.regime = "inexact-i";
  } else {
    r.rho = rho_alg1_inexact_loose(beta, eps, theta1, theta2, kappaTilde, alpha);
    r.regime = "inexact-ii";
  }
  r.alphaFloor = 2.0 * (1.0 - theta2) * (1.0 - beta) * (1.0 - eps) / kappa;
  return r;
}

/// Spectral floor at level λ with arbitrary sample size.
inline RatePrediction rate_spectral(double beta, double theta2, double lambda, double bigK, double khat, double gamma,
                                    double alpha) {
  detail::require_open_unit(beta, "beta");
  detail::require_half_open_unit(theta2, "theta2");
  detail::require(lambda > 0.0, "spectral floor lambda must be positive");
  detail::require(bigK > 0.0 && khat > 0.0, "K and K-hat must be positive");
  detail::require(gamma >= 0.0, "gamma must be >= 0");
  detail::require_step(alpha);
  const double top = std::max(khat, lambda);
  RatePrediction r;
  r.rho = alpha * beta * gamma / top;
  r.decreaseCoeff = alpha * beta / (2.0 * top);
  r.theta1Max = 0.5 * std::sqrt(lambda / top);
  r.alphaFloor = 2.0 * (1.0 - theta2) * (1.0 - beta) * lambda / bigK;
  r.regime = "spectral";
  return r;
}

/// Ridge shift λ with arbitrary sample size.
inline RatePrediction rate_ridge(double beta, double theta2, double lambda, double bigK, double khat, double gamma,
                                 double alpha) {
  detail::require_open_unit(beta, "beta");
  detail::require_half_open_unit(theta2, "theta2");
  detail::require(lambda >= 0.0, "ridge lambda must be >= 0");
  detail::require(bigK > 0.0 && khat > 0.0, "K and K-hat must be positive");
  detail::require(gamma >= 0.0, "gamma must be >= 0");
  detail::require_step(alpha);
  RatePrediction r;
  r.rho = alpha * beta * gamma / (khat + lambda);
  r.decreaseCoeff = alpha * beta / (2.0 * (khat + lambda));
  r.theta1Max = 0.5 * std::sqrt(lambda / (bigK + lambda));
  r.alphaFloor = 2.0 * (1.0 - theta2) * (1.0 - beta) * lambda / bigK;
  r.regime = "ridge";
  return r;
}

/// Ridge shift with a Lemma-sized sample: the θ₁ budget and step floor no
/// longer vanish as λ → 0.
inline RatePrediction rate_ridge_sampled(double beta, double eps, double theta2, double lambda, double bigK,
                                         double khat, double gamma, double alpha) {
  detail::require_open_unit(eps, "eps");
  RatePrediction r = rate_ridge(beta, theta2, lambda, bigK, khat, gamma, alpha);
  const double lower = (1.0 - eps) * gamma + lambda;
  r.theta1Max = 0.5 * std::sqrt(lower / (khat + lambda));
  r.alphaFloor = 2.0 * (1.0 - theta2) * (1.0 - beta) * lower / bigK;
  r.regime = "ridge-sampled";
  return r;
}

/// Spectral floor with a Lemma-sized sample.
inline RatePrediction rate_spectral_sampled(double beta, double eps, double theta2, double lambda, double bigK,
                                            double khat, double gamma, double alpha) {
  detail::require_open_unit(eps, "eps");
  RatePrediction r = rate_spectral(beta, theta2, lambda, bigK, khat, gamma, alpha);
  detail::require(gamma > 0.0, "gamma must be positive");
  r.alphaFloor = 2.0 * (1.0 - theta2) * (1.0 - beta) * (1.0 - eps) * gamma / bigK;
  r.regime = "spectral-sampled";
  return r;
}

/// Hessian and gradient sub-sampling, exact or inexact solves.
inline RatePrediction rate_alg4(double beta, double eps1, double theta1, double theta2, double kappa, double kappaTilde,
                                double alpha, bool inexact) {
  detail::require_open_unit(beta, "beta");
  detail::require(eps1 > 0.0 && eps1 <= 0.5, "eps1 must lie in (0, 1/2]");
  detail::require_condition(kappa, kappaTilde);
  detail::require_step(alpha);
  RatePrediction r;
  if (!inexact) {
    r.rho = 8.0 * alpha * beta / (9.0 * kappaTilde);
    r.alphaFloor = (1.0 - beta) * (1.0 - eps1) / kappa;
    r.sigmaMin = 4.0 * kappaTilde / (1.0 - beta);
    r.regime = "exact";
    return r;
  }
  detail::require_half_open_unit(theta1, "theta1");
  detail::require_half_open_unit(theta2, "theta2");
  r.theta1Max = theta1_threshold(eps1, kappaTilde);
  if (theta1 <= *r.theta1Max) {
    r.rho = 4.0 * alpha * beta / (9.0 * kappaTilde);
    r.regime = "inexact-1";
  } else {
    r.rho = 8.0 * alpha * beta * (1.0 - theta2) * (1.0 - theta1) * (1.0 - theta1) * (1.0 - eps1) /
            (9.0 * kappaTilde * kappaTilde);
    r.regime = "inexact-2";
  }
  r.alphaFloor = (1.0 - theta2) * (1.0 - beta) * (1.0 - eps1) / kappa;
  r.sigmaMin = 4.0 * kappaTilde / ((1.0 - theta1) * (1.0 - theta2) * (1.0 - beta));
  return r;
}

/// Roots q₁ ≤ q₂ bracketing the sub-sampled gradient norms for which the unit
/// step passes the Armijo test in the gradient-sampled local phase.
struct GradientWindow {
  double q1 = 0.0;
  double q2 = 0.0;
};

/// Largest ε₂ for which the window is real.
inline double eps2_discriminant_bound(double eps1, double beta, double kappaTilde, double lipschitzL, double gamma) {
  const double c = 1.0 - 2.0 * eps1 - 2.0 * (1.0 - eps1) * beta;
  return 3.0 * std::sqrt(1.0 - eps1) * gamma * gamma * c * c / (8.0 * lipschitzL * std::sqrt(kappaTilde));
}

inline GradientWindow gradient_window(double eps1, double eps2, double beta, double kappaTilde, double lipschitzL,
                                      double gamma) {
  detail::require_open_unit(eps1, "eps1");
  detail::require(eps2 >= 0.0, "eps2 must be >= 0");
  detail::require_open_unit(beta, "beta");
  detail::require(lipschitzL > 0.0, "Hessian Lipschitz constant L must be positive");
  detail::require(gamma > 0.0, "gamma must be positive");
  detail::require(kappaTilde >= 1.0, "kappa-tilde must be >= 1");
  const double c = 1.0 - 2.0 * eps1 - 2.0 * (1.0 - eps1) * beta;
  detail::require(c > 0.0, "need 1 - 2 eps1 - 2 (1 - eps1) beta > 0");
  const double q = 3.0 * (1.0 - eps1) * gamma * gamma * c;
  const double disc =
      q * q - 24.0 * std::pow(1.0 - eps1, 1.5) * gamma * gamma * lipschitzL * eps2 * std::sqrt(kappaTilde);
  if (disc < 0.0)
    throw InvalidArgument("eps2 = " + std::to_string(eps2) +
                          " violates eps2 <= 3 sqrt(1-eps1) gamma^2 (1-2eps1-2(1-eps1)beta)^2 / (8 L sqrt(kappa~)) = " +
                          std::to_string(eps2_discriminant_bound(eps1, beta, kappaTilde, lipschitzL, gamma)));
  const double root = std::sqrt(disc);
  return {(q - root) / (2.0 * lipschitzL), (q + root) / (2.0 * lipschitzL)};
}

enum class LocalVariant { HessianSampled, FullySampled };

struct LocalRateInputs {
  double fGap = 0.0;  // F(x⁰) - F*
  double lipschitzL = 0.0;
  double gamma = 0.0;
  double bigK = 0.0;
  double kappa = 0.0;
  double kappa1 = 0.0;
  double kappaTilde = 0.0;
  double beta = 0.0;
  double eps = 0.0;   // ε (Hessian-sampled) or ε₁ (fully sampled)
  double eps2 = 0.0;  // ε₂⁽⁰⁾, fully sampled only
  double rho0 = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;  // fully sampled only
};

/// Largest ε admitted by the local-phase results.
inline double local_eps_limit(double beta, double rho0, double kappa1) {
  return std::min((1.0 - 2.0 * beta) / (2.0 * (1.0 - beta)), rho0 / (4.0 * (1.0 + rho0) * std::sqrt(kappa1)));
}

/// Iterations after which the global phase hands over to the problem-independent
/// local rate. Returns kLocal (and q₁, q₂ for the fully sampled variant).
inline RatePrediction local_iteration_count(LocalVariant variant, const LocalRateInputs& in) {
  using detail::require;
  require(in.fGap > 0.0, "F(x0) - F* must be positive");
  require(in.lipschitzL > 0.0, "Hessian Lipschitz constant L must be positive");
  require(in.gamma > 0.0 && in.bigK >= in.gamma, "need 0 < gamma <= K");
  detail::require_condition(in.kappa, in.kappaTilde);
  require(in.kappa1 >= 1.0, "kappa1 must be >= 1");
  detail::require_open_unit(in.beta, "beta");
  require(in.eps > 0.0 && in.eps <= local_eps_limit(in.beta, in.rho0, in.kappa1),
          "eps exceeds min{(1-2beta)/(2(1-beta)), rho0/(4(1+rho0) sqrt(kappa1))}");
  const double c = 1.0 - 2.0 * in.eps - 2.0 * (1.0 - in.eps) * in.beta;

  RatePrediction r;
  double logRatio = 0.0;
  double contraction = 0.0;
  if (variant == LocalVariant::HessianSampled) {
    require(in.beta < 0.5, "beta must be < 1/2");
    require(0.0 < in.rho0 && in.rho0 < in.rho1 && in.rho1 < 1.0, "need 0 < rho0 < rho1 < 1");
    const double num = 2.0 * std::pow(1.0 - in.eps, 2) * std::pow(in.gamma, 4) * std::pow(in.rho1 - in.rho0, 2) * c * c;
    logRatio = std::log(num / (in.bigK * in.lipschitzL * in.lipschitzL * in.fGap));
    contraction = 1.0 - 4.0 * in.beta * (1.0 - in.beta) * (1.0 - in.eps) / (in.kappaTilde * in.kappa);
    r.regime = "local-hessian-sampled";
  } else {
    require(in.beta <= 0.5, "beta must be <= 1/2");
    require(in.rho0 > 0.0 && in.rho1 > 0.0 && in.rho2 < 1.0 && in.rho0 + in.rho1 < in.rho2,
            "need rho0, rho1 > 0 and rho0 + rho1 < rho2 < 1");
    const double cc = 2.0 * (in.rho2 - (in.rho0 + in.rho1)) * (1.0 - in.eps) * in.gamma / in.lipschitzL;
    const double eps2Max =
        (1.0 - in.eps) * in.gamma * in.rho1 * c * c * cc / (6.0 * in.lipschitzL * std::sqrt(in.kappaTilde));
    require(in.eps2 >= 0.0 && in.eps2 <= eps2Max, "eps2 exceeds the initial bound " + std::to_string(eps2Max));
    const GradientWindow w = gradient_window(in.eps, in.eps2, in.beta, in.kappaTilde, in.lipschitzL, in.gamma);
    r.q1 = w.q1;
    r.q2 = w.q2;
    const double spread = in.rho2 - (in.rho0 + in.rho1);
    logRatio = std::log(2.0 * spread * spread * w.q2 * w.q2 / (9.0 * in.bigK * in.fGap));
    contraction = 1.0 - 8.0 * in.beta * (1.0 - in.beta) * (1.0 - in.eps) / (9.0 * in.kappa * in.kappaTilde);
    r.regime = "local-fully-sampled";
  }
  // A non-negative log ratio means the handover condition already holds at k = 0.
  r.kLocal = logRatio >= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(logRatio / std::log(contraction)));
  return r;
}

}  // namespace ssn
