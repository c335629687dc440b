#include <gtest/gtest.h>

#include <random>

#include "ssn/theory.hpp"

using namespace ssn;

TEST(RateAlg1, SpotValues) {
  const double floor = rate_alg1(0.25, 0.5, 2.0, 2.0, 1.0).alphaFloor;
  EXPECT_EQ(floor, 0.375);
  const RatePrediction r = rate_alg1(0.25, 0.5, 2.0, 2.0, floor);
  EXPECT_EQ(r.alphaFloor, 0.375);
  EXPECT_EQ(r.rho, 0.09375);
}

TEST(RateAlg1, Substitutions) {
  EXPECT_DOUBLE_EQ(rate_alg1(0.5, 0.5, 7.0, 7.0, 1.0).rho, 1.0 / 7.0);
  EXPECT_LT(rate_alg1(1e-12, 0.5, 2.0, 2.0, 1.0).rho, 1e-11);
}

TEST(RateAlg1, RejectsOutOfRange) {
  EXPECT_THROW(rate_alg1(0.0, 0.5, 2, 2, 1), InvalidArgument);
  EXPECT_THROW(rate_alg1(0.25, 1.0, 2, 2, 1), InvalidArgument);
  EXPECT_THROW(rate_alg1(0.25, 0.5, 0.5, 2, 1), InvalidArgument);
  EXPECT_THROW(rate_alg1(0.25, 0.5, 2, 2, 0), InvalidArgument);
}

TEST(RateAlg1Inexact, ThresholdAndCases) {
  EXPECT_DOUBLE_EQ(theta1_threshold(0.5, 2.0), 0.25);
  const RatePrediction tight = rate_alg1_inexact(0.25, 0.5, 0.2, 0.3, 2.0, 2.0, 1.0);
  EXPECT_EQ(tight.regime, "inexact-i");
  EXPECT_DOUBLE_EQ(tight.rho, 0.25 / 2.0);
  EXPECT_DOUBLE_EQ(*tight.theta1Max, 0.25);
  const RatePrediction loose = rate_alg1_inexact(0.25, 0.5, 0.4, 0.3, 2.0, 2.0, 1.0);
  EXPECT_EQ(loose.regime, "inexact-ii");
  EXPECT_DOUBLE_EQ(loose.rho, 2.0 * 0.7 * 0.36 * 0.5 * 0.25 / 4.0);
  EXPECT_DOUBLE_EQ(loose.alphaFloor, 2.0 * 0.7 * 0.75 * 0.5 / 2.0);
  EXPECT_LT(rate_alg1_inexact(0.25, 0.5, 0.1, 1.0 - 1e-12, 2, 2, 1).alphaFloor, 1e-11);
}

// At θ₁ = threshold with θ₂ = 0 the loose formula does not exceed the tight one.
TEST(RateAlg1Inexact, LooseCaseIsWeakerAtBoundary) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double beta = 0.01 + 0.98 * u(rng), eps = 0.01 + 0.98 * u(rng), kt = 1.0 + 100.0 * u(rng);
    const double alpha = u(rng) + 0.01;
    const double th = theta1_threshold(eps, kt);
    EXPECT_LE(rho_alg1_inexact_loose(beta, eps, th, 0.0, kt, alpha),
              rho_alg1_inexact_tight(beta, kt, alpha) * (1 + 1e-12));
  }
}

TEST(RateRegularized, SpotCases) {
  const RatePrediction s = rate_spectral(0.25, 0.0, 3.0, 5.0, 3.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(s.rho, 0.25 * 0.5 / 3.0);
  EXPECT_DOUBLE_EQ(*s.theta1Max, 0.5);
  EXPECT_DOUBLE_EQ(s.alphaFloor, 2.0 * 0.75 * 3.0 / 5.0);
  const RatePrediction big = rate_spectral(0.25, 0.0, 6.0, 5.0, 3.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(big.rho, 0.25 * 0.5 / 6.0);

  const RatePrediction r0 = rate_ridge(0.25, 0.0, 0.0, 5.0, 3.0, 0.5, 1.0);
  EXPECT_EQ(*r0.theta1Max, 0.0);
  EXPECT_EQ(r0.alphaFloor, 0.0);
  const RatePrediction r = rate_ridge(0.25, 0.2, 1.0, 5.0, 3.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(r.rho, 0.25 * 0.5 / 4.0);
  EXPECT_DOUBLE_EQ(*r.theta1Max, 0.5 * std::sqrt(1.0 / 6.0));
  EXPECT_DOUBLE_EQ(*r.decreaseCoeff, 0.25 / 8.0);

  const RatePrediction rs = rate_ridge_sampled(0.25, 0.5, 0.2, 1.0, 5.0, 3.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(*rs.theta1Max, 0.5 * std::sqrt((0.5 * 0.5 + 1.0) / 4.0));
  EXPECT_THROW(rate_spectral(0.25, 0.0, 0.0, 5.0, 3.0, 0.5, 1.0), InvalidArgument);
}

// With a Lemma-sized sample, λ^(k) > (1-ε)γ keeps the spectral θ₁ budget above ½√((1-ε)/κ̃).
TEST(RateRegularized, SpectralBudgetUnderLemmaSampling) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double gamma = 0.01 + u(rng), eps = 0.01 + 0.98 * u(rng);
    const double khat = gamma * (1.0 + 50.0 * u(rng));
    const double lambda = (1.0 - eps) * gamma * (1.0 + 1e-9 + 3.0 * u(rng));
    const double kt = khat / gamma;
    const RatePrediction r = rate_spectral_sampled(0.25, eps, 0.0, lambda, khat, khat, gamma, 1.0);
    EXPECT_GE(*r.theta1Max, 0.5 * std::sqrt((1.0 - eps) / kt) * (1 - 1e-12));
  }
}

TEST(RateAlg4, SpotValues) {
  EXPECT_DOUBLE_EQ(*rate_alg4(0.25, 0.5, 0, 0, 2.0, 2.0, 1.0, false).sigmaMin, 32.0 / 3.0);
  EXPECT_DOUBLE_EQ(rate_alg4(0.5, 0.5, 0, 0, 1.0, 1.0, 1.0, false).rho, 4.0 / 9.0);
  EXPECT_DOUBLE_EQ(rate_alg4(0.25, 0.5, 0, 0, 4.0, 2.0, 1.0, false).alphaFloor, 0.75 * 0.5 / 4.0);
  EXPECT_THROW(rate_alg4(0.25, 0.6, 0, 0, 2, 2, 1, false), InvalidArgument);
}

// θ₁ = θ₂ = 0 in the loose inexact case equals (1-ε₁)·exact ρ/κ̃.
TEST(RateAlg4, InexactCaseTwoRelation) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double beta = 0.01 + 0.98 * u(rng), eps1 = 0.01 + 0.49 * u(rng), kt = 1.0 + 20 * u(rng);
    const double alpha = 0.01 + u(rng);
    const double exact = rate_alg4(beta, eps1, 0, 0, kt, kt, alpha, false).rho;
    // Push θ₁ just past the threshold, then compare against the θ₁ = 0 closed form.
    const double th = theta1_threshold(eps1, kt) * (1 + 1e-9);
    if (th >= 1.0) continue;
    const RatePrediction loose = rate_alg4(beta, eps1, th, 0.0, kt, kt, alpha, true);
    EXPECT_EQ(loose.regime, "inexact-2");
    const double atZero = 8.0 * alpha * beta * (1.0 - eps1) / (9.0 * kt * kt);
    EXPECT_NEAR(atZero, (1.0 - eps1) * exact / kt, 1e-15);
    EXPECT_NEAR(loose.rho, atZero * (1.0 - th) * (1.0 - th), 1e-15);
    EXPECT_DOUBLE_EQ(*loose.sigmaMin, 4.0 * kt / ((1.0 - th) * (1.0 - beta)));
  }
  EXPECT_EQ(rate_alg4(0.25, 0.5, 0.0, 0.0, 2, 2, 1, true).regime, "inexact-1");
  EXPECT_DOUBLE_EQ(rate_alg4(0.25, 0.5, 0.0, 0.0, 2, 2, 1, true).rho, 4.0 * 0.25 / 18.0);
}

TEST(Rates, AllInUnitIntervalAtTheFloor) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    const double beta = 0.01 + 0.98 * u(rng), eps = 0.01 + 0.98 * u(rng);
    const double kappa = 1.0 + 1000.0 * u(rng);
    const double kt = kappa * (1.0 + 5.0 * u(rng));
    const double th1 = 0.99 * u(rng), th2 = 0.99 * u(rng);
    const auto in01 = [](double r) { return r > 0.0 && r < 1.0; };

    const double a1 = std::min(1.0, rate_alg1(beta, eps, kappa, kt, 1.0).alphaFloor);
    EXPECT_TRUE(in01(rate_alg1(beta, eps, kappa, kt, a1).rho));
    const double a2 = std::min(1.0, rate_alg1_inexact(beta, eps, th1, th2, kappa, kt, 1.0).alphaFloor);
    EXPECT_TRUE(in01(rate_alg1_inexact(beta, eps, th1, th2, kappa, kt, a2).rho));
    const double e1 = 0.5 * eps;
    for (bool inexact : {false, true}) {
      const double a4 = std::min(1.0, rate_alg4(beta, e1, th1, th2, kappa, kt, 1.0, inexact).alphaFloor);
      EXPECT_TRUE(in01(rate_alg4(beta, e1, th1, th2, kappa, kt, a4, inexact).rho));
    }
    const double gamma = 0.01 + u(rng), bigK = gamma * kappa, khat = bigK * (1.0 + u(rng));
    const double lambda = gamma * (0.01 + 2.0 * u(rng));
    const double as = std::min(1.0, rate_spectral(beta, th2, lambda, bigK, khat, gamma, 1.0).alphaFloor);
    EXPECT_TRUE(in01(rate_spectral(beta, th2, lambda, bigK, khat, gamma, as).rho));
    const double ar = std::min(1.0, rate_ridge(beta, th2, lambda, bigK, khat, gamma, 1.0).alphaFloor);
    EXPECT_TRUE(in01(rate_ridge(beta, th2, lambda, bigK, khat, gamma, ar).rho));
  }
}

TEST(GradientWindow, EndpointsAtZeroEps2) {
  const double eps1 = 0.1, beta = 0.2, kt = 4.0, L = 2.0, gamma = 0.5;
  const GradientWindow w = gradient_window(eps1, 0.0, beta, kt, L, gamma);
  EXPECT_EQ(w.q1, 0.0);
  const double c = 1.0 - 2.0 * eps1 - 2.0 * (1.0 - eps1) * beta;
  EXPECT_DOUBLE_EQ(w.q2, 3.0 * (1.0 - eps1) * gamma * gamma * c / L);
}

TEST(GradientWindow, MonotoneInEps2AndOrdered) {
  const double eps1 = 0.1, beta = 0.2, kt = 4.0, L = 2.0, gamma = 0.5;
  const double bound = eps2_discriminant_bound(eps1, beta, kt, L, gamma);
  GradientWindow prev = gradient_window(eps1, 0.0, beta, kt, L, gamma);
  for (int i = 1; i <= 100; ++i) {
    const GradientWindow w = gradient_window(eps1, bound * i / 100.0 * (1 - 1e-12), beta, kt, L, gamma);
    EXPECT_GT(w.q1, prev.q1);
    EXPECT_LT(w.q2, prev.q2);
    EXPECT_LE(w.q1, w.q2);
    prev = w;
  }
  try {
    gradient_window(eps1, bound * 1.01, beta, kt, L, gamma);
    FAIL() << "expected a discriminant error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("eps2"), std::string::npos);
  }
}

namespace {

LocalRateInputs local_inputs() {
  LocalRateInputs in;
  in.fGap = 10.0;
  in.lipschitzL = 1.0;
  in.gamma = 0.5;
  in.bigK = 5.0;
  in.kappa = 10.0;
  in.kappa1 = 20.0;
  in.kappaTilde = 15.0;
  in.beta = 0.1;
  in.rho0 = 0.2;
  in.rho1 = 0.5;
  in.rho2 = 0.9;
  in.eps = 0.9 * local_eps_limit(in.beta, in.rho0, in.kappa1);
  in.eps2 = 0.0;
  return in;
}

}  // namespace

TEST(LocalIterations, HessianSampledMatchesHandFormula) {
  const LocalRateInputs in = local_inputs();
  const RatePrediction r = local_iteration_count(LocalVariant::HessianSampled, in);
  const double c = 1.0 - 2.0 * in.eps - 2.0 * (1.0 - in.eps) * in.beta;
  const double num = 2.0 * std::pow(1 - in.eps, 2) * std::pow(in.gamma, 4) * std::pow(in.rho1 - in.rho0, 2) * c * c;
  const double ratio = std::log(num / (in.bigK * in.fGap));
  const double contraction = 1.0 - 4.0 * in.beta * (1 - in.beta) * (1 - in.eps) / (in.kappaTilde * in.kappa);
  ASSERT_TRUE(r.kLocal);
  EXPECT_EQ(*r.kLocal, static_cast<std::size_t>(std::ceil(ratio / std::log(contraction))));
  EXPECT_GT(*r.kLocal, 0u);
}

TEST(LocalIterations, FullySampledReturnsWindow) {
  LocalRateInputs in = local_inputs();
  const RatePrediction r = local_iteration_count(LocalVariant::FullySampled, in);
  ASSERT_TRUE(r.q1 && r.q2 && r.kLocal);
  EXPECT_EQ(*r.q1, 0.0);
  in.eps2 = 1.0;
  EXPECT_THROW(local_iteration_count(LocalVariant::FullySampled, in), InvalidArgument);
}

TEST(LocalIterations, TinyGapNeedsNoIterations) {
  LocalRateInputs in = local_inputs();
  in.fGap = 1e-30;
  EXPECT_EQ(*local_iteration_count(LocalVariant::HessianSampled, in).kLocal, 0u);
}

TEST(LocalIterations, RejectsEpsAboveLimit) {
  LocalRateInputs in = local_inputs();
  in.eps = 1.1 * local_eps_limit(in.beta, in.rho0, in.kappa1);
  EXPECT_THROW(local_iteration_count(LocalVariant::HessianSampled, in), InvalidArgument);
}
