#include <gtest/gtest.h>

#include "helpers.hpp"
#include "ssn/solvers.hpp"
#include "ssn/theory.hpp"

using namespace ssn;
using testing_support::random_vector;
using testing_support::small_glm;

namespace {

SolverConfig config(Variant v) {
  SolverConfig c;
  c.variant = v;
  c.seed = 7;
  c.maxIters = 200;
  return c;
}

SolverConfig full_sample_config(Variant v) {
  SolverConfig c = config(v);
  c.sampleFracH = 1.0;
  c.sampleFracG = 1.0;
  c.lambdaUser = 0.0;
  return c;
}

void expect_same_iterates(const Trace& a, const Trace& b, double tol) {
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_LE((a.records[k].x - b.records[k].x).norm(), tol * std::max(1.0, b.records[k].x.norm())) << "k=" << k;
  }
  EXPECT_EQ(a.stop, b.stop);
}

const std::vector<Variant> kAll = {Variant::SsnHessian, Variant::SsnSpectral, Variant::SsnRidge,
                                   Variant::SsnFull,    Variant::GD,          Variant::AGD,
                                   Variant::BFGS,       Variant::LBFGS,       Variant::Newton};

}  // namespace

TEST(Names, RoundTrip) {
  for (Variant v : kAll) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("sgd"), InvalidArgument);
  for (StopFlag f : {StopFlag::None, StopFlag::GradTol, StopFlag::SigmaStop, StopFlag::MaxIters, StopFlag::TimeLimit,
                     StopFlag::Error})
    EXPECT_EQ(parse_stop_flag(to_string(f)), f);
  EXPECT_EQ(parse_replacement("with"), Replacement::With);
  EXPECT_EQ(parse_replacement("without"), Replacement::Without);
}

TEST(OracleEquivalence, FullSamplesReduceToNewton) {
  for (Family f : {Family::Ridge, Family::Logistic}) {
    const auto m = small_glm(f, 300, 8, 1e-3, 5);
    const Vector x0 = Vector::Zero(8);
    const Trace newton = run_solver(m, full_sample_config(Variant::Newton), x0);
    ASSERT_EQ(newton.stop, StopFlag::GradTol) << newton.message;
    for (Variant v : {Variant::SsnHessian, Variant::SsnSpectral, Variant::SsnRidge, Variant::SsnFull}) {
      const Trace t = run_solver(m, full_sample_config(v), x0);
      SCOPED_TRACE(to_string(v) + " / " + to_string(f));
      expect_same_iterates(t, newton, 1e-10);
    }
  }
}

TEST(Solvers, EveryVariantConvergesMonotonically) {
  const auto m = small_glm(Family::Logistic, 400, 10, 1e-2, 6);
  const Vector x0 = Vector::Zero(10);
  for (Variant v : kAll) {
    SolverConfig c = config(v);
    c.sampleFracH = 0.3;
    c.sampleFracG = 0.5;
    c.lambdaUser = 1e-3;
    c.maxIters = v == Variant::GD || v == Variant::AGD ? 20000 : 500;
    c.gradTol = 1e-7;
    const Trace t = run_solver(m, c, x0);
    SCOPED_TRACE(to_string(v));
    if (v != Variant::SsnFull) {
      EXPECT_EQ(t.stop, StopFlag::GradTol) << t.message;
    }
    for (std::size_t k = 1; k < t.records.size(); ++k) EXPECT_LE(t.records[k].fValue, t.records[k - 1].fValue);
    for (std::size_t k = 0; k < t.records.size(); ++k) EXPECT_EQ(t.records[k].k, k);
  }
}

TEST(Solvers, DeterministicUnderFixedSeed) {
  const auto m = small_glm(Family::Logistic, 300, 6, 1e-2, 8);
  for (Variant v : {Variant::SsnHessian, Variant::SsnSpectral, Variant::SsnRidge, Variant::SsnFull}) {
    SolverConfig c = config(v);
    c.sampleFracH = 0.2;
    c.sampleFracG = 0.4;
    c.lambdaUser = 1e-2;
    c.maxIters = 15;
    const Trace a = run_solver(m, c, Vector::Zero(6));
    const Trace b = run_solver(m, c, Vector::Zero(6));
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
      EXPECT_EQ(a.records[k].x, b.records[k].x);
      EXPECT_EQ(a.records[k].fValue, b.records[k].fValue);
      EXPECT_EQ(a.records[k].sampleSizeH, b.records[k].sampleSizeH);
    }
    c.seed = 8;
    const Trace other = run_solver(m, c, Vector::Zero(6));
    EXPECT_NE(other.records[1].x, a.records[1].x) << to_string(v);
  }
}

TEST(Solvers, NewtonSolvesQuadraticInOneStep) {
  const auto m = testing_support::ridge_quadratic(100, 12, 0.1, 3);
  for (Variant v : {Variant::Newton, Variant::SsnHessian}) {
    SolverConfig c = full_sample_config(v);
    c.lineSearch.beta = 0.25;
    const Trace t = run_solver(m, c, Vector::Ones(12));
    ASSERT_EQ(t.records.size(), 2u) << to_string(v);
    EXPECT_EQ(t.records[0].alpha, 1.0);
    EXPECT_EQ(t.stop, StopFlag::GradTol);
  }
}

TEST(Solvers, GradientDescentOneDimensionalContraction) {
  DenseRows a(1, 1);
  a << 2.0;
  const GlmObjective m(Dataset(a, Vector::Zero(1)), Family::Ridge, 0.0);
  SolverConfig c = config(Variant::GD);
  c.gdStep = 0.25;  // 1/K with K = 4
  const Trace t = run_solver(m, c, Vector::Constant(1, 3.0));
  ASSERT_EQ(t.records.size(), 2u);
  EXPECT_EQ(t.records[1].x(0), 0.0);
  // Default step is 1/K from the curvature constants.
  c.gdStep.reset();
  EXPECT_EQ(run_solver(m, c, Vector::Constant(1, 3.0)).records[1].x(0), 0.0);
}

TEST(Solvers, LbfgsSolvesFiftyDimensionalQuadratic) {
  const auto m = testing_support::ridge_quadratic(400, 50, 1e-2, 4);
  SolverConfig c = config(Variant::LBFGS);
  c.lbfgsMemory = 10;
  c.gradTol = 1e-8;
  std::mt19937_64 rng(1);
  const Trace t = run_solver(m, c, random_vector(50, rng));
  EXPECT_EQ(t.stop, StopFlag::GradTol);
  EXPECT_LE(t.records.size(), 201u);
}

TEST(Solvers, HugeRidgeShiftGivesGradientDirection) {
  const auto m = small_glm(Family::Logistic, 200, 6, 1e-2, 9);
  SolverConfig c = config(Variant::SsnRidge);
  c.sampleFracH = 0.2;
  c.lambdaUser = 1e8;
  c.maxIters = 1;
  std::mt19937_64 rng(2);
  const Vector x0 = random_vector(6, rng);
  const Trace t = run_solver(m, c, x0);
  ASSERT_EQ(t.records.size(), 2u);
  const Vector step = t.records[1].x - t.records[0].x;
  const Vector g = m.gradient(x0);
  EXPECT_NEAR(step.normalized().dot(-g.normalized()), 1.0, 1e-6);
}

TEST(Solvers, SpectralDecreasesOnRankDeficientQuadratic) {
  // n < p and no penalty: the Hessian is singular everywhere.
  const auto m = small_glm(Family::Ridge, 4, 10, 0.0, 10);
  SolverConfig c = config(Variant::SsnSpectral);
  c.sampleFracH = 0.5;
  c.lambdaUser = 0.1;
  c.maxIters = 30;
  c.gradTol = 1e-9;
  const Trace t = run_solver(m, c, Vector::Ones(10));
  EXPECT_NE(t.stop, StopFlag::Error) << t.message;
  for (std::size_t k = 1; k < t.records.size(); ++k) EXPECT_LT(t.records[k].fValue, t.records[k - 1].fValue);
  for (const auto& r : t.records)
    if (r.lambdaApplied) {
      EXPECT_GT(*r.lambdaApplied, *r.minEigH);
    }
}

TEST(Solvers, HessianVariantErrorsOnSingularSamples) {
  const auto m = small_glm(Family::Ridge, 4, 10, 0.0, 10);
  SolverConfig c = config(Variant::SsnHessian);
  c.sampleFracH = 0.5;
  const Trace t = run_solver(m, c, Vector::Ones(10));
  EXPECT_EQ(t.stop, StopFlag::Error);
  EXPECT_NE(t.message.find("ssn-spectral"), std::string::npos);
  EXPECT_EQ(t.records.size(), 1u);
  EXPECT_EQ(t.last().stopped, StopFlag::Error);
}

TEST(Solvers, LemmaSizeNeedsStrongConvexity) {
  const auto m = small_glm(Family::Logistic, 50, 4, 0.0, 1);
  const Trace t = run_solver(m, config(Variant::SsnHessian), Vector::Zero(4));
  EXPECT_EQ(t.stop, StopFlag::Error);
  EXPECT_NE(t.message.find("gamma"), std::string::npos);
}

TEST(Solvers, SigmaStopIsSound) {
  const auto m = small_glm(Family::Logistic, 4000, 5, 1e-2, 11, 0.5);
  int fired = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SolverConfig c = config(Variant::SsnFull);
    c.seed = seed;
    c.sampleFracH = 0.1;
    c.eps2 = 0.25;
    c.sigma = 0.5;
    const Trace t = run_solver(m, c, Vector::Zero(5));
    if (t.stop != StopFlag::SigmaStop) continue;
    ++fired;
    EXPECT_LT(m.gradient(t.last().x).norm(), (1.0 + c.sigma) * c.eps2);
    EXPECT_GT(t.last().sampleSizeG, 0u);
    EXPECT_LT(t.last().sampleSizeG, m.n());
  }
  EXPECT_GT(fired, 0);
}

TEST(Solvers, GeometricEps2Schedule) {
  const auto m = small_glm(Family::Logistic, 300, 5, 1e-2, 12);
  SolverConfig c = config(Variant::SsnFull);
  c.sampleFracH = 0.5;
  c.sampleFracG = 0.5;
  c.eps2 = 0.4;
  c.eps2Schedule = Eps2Schedule::Geometric;
  c.rho2 = 0.5;
  c.maxIters = 5;
  const Trace t = run_solver(m, c, Vector::Zero(5));
  for (std::size_t k = 0; k < t.records.size(); ++k)
    EXPECT_DOUBLE_EQ(*t.records[k].eps2Used, 0.4 * std::pow(0.5, static_cast<double>(k)));
  EXPECT_TRUE(t.directFractionG);
  EXPECT_TRUE(t.directFractionH);
}

TEST(Solvers, InexactDirectionsMeetConditions) {
  const auto m = small_glm(Family::Logistic, 500, 12, 1e-2, 13);
  SolverConfig c = config(Variant::SsnHessian);
  c.sampleFracH = 0.2;
  c.inexact = InexactnessSpec{1e-2, 0.5, 1000};
  const Trace t = run_solver(m, c, Vector::Zero(12));
  EXPECT_EQ(t.stop, StopFlag::GradTol);
  for (std::size_t k = 0; k + 1 < t.records.size(); ++k) {
    ASSERT_TRUE(t.records[k].residualRatio);
    EXPECT_LE(*t.records[k].residualRatio, 1e-2);
    EXPECT_GE(*t.records[k].descentRatio, 0.5);
  }
}

// Accepted steps clear shrink × the guaranteed floor whenever λ_min(H) ≥ (1-ε)γ.
TEST(Solvers, StepSizeFloors) {
  const auto m = small_glm(Family::Logistic, 2000, 8, 1e-2, 14);
  const auto est = m.curvature_constants(std::nullopt);
  const double beta = 0.25, eps = 0.5;
  for (Variant v : {Variant::SsnHessian, Variant::SsnSpectral, Variant::SsnRidge, Variant::SsnFull}) {
    SolverConfig c = config(v);
    c.sampleFracH = 0.05;
    // The ssn-full floor also needs the gradient event, which a full gradient makes certain.
    c.sampleFracG = v == Variant::SsnFull ? 1.0 : 0.5;
    c.lineSearch.beta = beta;
    c.eps = c.eps1 = eps;
    c.lambdaUser = 1e-2;
    c.recordMinEig = true;
    c.maxIters = 40;
    const Trace t = run_solver(m, c, Vector::Zero(8));
    SCOPED_TRACE(to_string(v));
    for (std::size_t k = 0; k + 1 < t.records.size(); ++k) {
      const TraceRecord& r = t.records[k];
      ASSERT_TRUE(r.minEigH);
      double floor = 0.0;
      switch (v) {
        case Variant::SsnHessian:
          if (*r.minEigH < (1 - eps) * est.gamma) continue;
          floor = rate_alg1(beta, eps, est.kappa(), est.kappa(), 1.0).alphaFloor;
          break;
        case Variant::SsnSpectral:
          floor = 2.0 * (1 - beta) * *r.lambdaApplied / est.bigK;
          break;
        case Variant::SsnRidge:
          floor = 2.0 * (1 - beta) * c.lambdaUser / est.bigK;
          break;
        default:
          if (*r.minEigH < (1 - eps) * est.gamma) continue;
          floor = rate_alg4(beta, eps, 0, 0, est.kappa(), est.kappa(), 1.0, false).alphaFloor;
      }
      EXPECT_GE(r.alpha, c.lineSearch.shrink * std::min(floor, 1.0)) << "k=" << k;
    }
  }
}

TEST(Solvers, TimeLimitAndMaxIters) {
  const auto m = small_glm(Family::Logistic, 300, 5, 1e-2, 15);
  SolverConfig c = config(Variant::GD);
  c.maxIters = 3;
  const Trace t = run_solver(m, c, Vector::Zero(5));
  EXPECT_EQ(t.stop, StopFlag::MaxIters);
  EXPECT_EQ(t.records.size(), 4u);
  EXPECT_EQ(t.last().alpha, 0.0);
  c.timeLimitSeconds = 1e-12;
  EXPECT_EQ(run_solver(m, c, Vector::Zero(5)).stop, StopFlag::TimeLimit);
}

TEST(Solvers, WallTimeIsMonotone) {
  const auto m = small_glm(Family::Logistic, 300, 5, 1e-2, 15);
  const Trace t = run_solver(m, config(Variant::BFGS), Vector::Zero(5));
  for (std::size_t k = 1; k < t.records.size(); ++k) EXPECT_GE(t.records[k].wallNanos, t.records[k - 1].wallNanos);
}

TEST(Config, ValidationAndWarnings) {
  SolverConfig c;
  c.inexact = InexactnessSpec{1.5, 0.5, 10};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = SolverConfig{};
  c.sampleFracH = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = SolverConfig{};
  c.delta = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);

  c = SolverConfig{};
  c.variant = Variant::SsnSpectral;
  EXPECT_EQ(c.validate().size(), 1u);

  c = SolverConfig{};
  c.variant = Variant::SsnFull;
  c.eps1 = 0.6;
  c.sigma = 1.0;
  c.lineSearch.beta = 0.25;
  const auto est = ConditionEstimates::from_components({2.0, 2.0}, 1.0);
  const auto warnings = c.validate(&est);
  EXPECT_EQ(warnings.size(), 2u);
  c.eps1 = 0.5;
  c.sigma = 32.0 / 3.0;
  EXPECT_TRUE(c.validate(&est).empty());
}

TEST(Solvers, RejectsBadStartingPoint) {
  const auto m = small_glm(Family::Logistic, 30, 3, 1e-2, 1);
  EXPECT_THROW(run_solver(m, config(Variant::Newton), Vector::Zero(4)), InvalidArgument);
  Vector bad = Vector::Zero(3);
  bad(1) = std::nan("");
  EXPECT_THROW(run_solver(m, config(Variant::Newton), bad), InvalidArgument);
}
