#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssn/dataset.hpp"
#include "ssn/errors.hpp"
#include "ssn/linesearch.hpp"
#include "ssn/linsolve.hpp"
#include "ssn/model.hpp"
#include "ssn/regularize.hpp"
#include "ssn/sampling.hpp"
#include "ssn/theory.hpp"

namespace ssn {

enum class Variant { SsnHessian, SsnSpectral, SsnRidge, SsnFull, GD, AGD, BFGS, LBFGS, Newton };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::SsnHessian: return "ssn-hessian";
    case Variant::SsnSpectral: return "ssn-spectral";
    case Variant::SsnRidge: return "ssn-ridge";
    case Variant::SsnFull: return "ssn-full";
    case Variant::GD: return "gd";
    case Variant::AGD: return "agd";
    case Variant::BFGS: return "bfgs";
    case Variant::LBFGS: return "lbfgs";
    case Variant::Newton: return "newton";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (const Variant v : {Variant::SsnHessian, Variant::SsnSpectral, Variant::SsnRidge, Variant::SsnFull, Variant::GD,
                          Variant::AGD, Variant::BFGS, Variant::LBFGS, Variant::Newton})
    if (to_string(v) == s) return v;
  throw InvalidArgument("unknown solver '" + s + "'");
}

inline bool is_ssn(Variant v) {
  return v == Variant::SsnHessian || v == Variant::SsnSpectral || v == Variant::SsnRidge || v == Variant::SsnFull;
}

enum class StopFlag { None, GradTol, SigmaStop, MaxIters, TimeLimit, Error };

inline std::string to_string(StopFlag f) {
  switch (f) {
    case StopFlag::None: return "none";
    case StopFlag::GradTol: return "grad_tol";
    case StopFlag::SigmaStop: return "sigma_stop";
    case StopFlag::MaxIters: return "max_iters";
    case StopFlag::TimeLimit: return "time_limit";
    case StopFlag::Error: return "error";
  }
  return "?";
}

inline StopFlag parse_stop_flag(const std::string& s) {
  for (const StopFlag f : {StopFlag::None, StopFlag::GradTol, StopFlag::SigmaStop, StopFlag::MaxIters,
                           StopFlag::TimeLimit, StopFlag::Error})
    if (to_string(f) == s) return f;
  throw InvalidArgument("unknown stop flag '" + s + "'");
}

inline std::string to_string(Replacement r) { return r == Replacement::With ? "with" : "without"; }

inline Replacement parse_replacement(const std::string& s) {
  if (s == "with") return Replacement::With;
  if (s == "without") return Replacement::Without;
  throw InvalidArgument("replacement must be 'with' or 'without', got '" + s + "'");
}

enum class Eps2Schedule { Constant, Geometric };

struct SolverConfig {
  Variant variant = Variant::SsnHessian;
  double eps = 0.5;    // Hessian sampling accuracy (ssn-hessian, ssn-spectral, ssn-ridge)
  double eps1 = 0.5;   // Hessian sampling accuracy (ssn-full)
  double eps2 = 1e-2;  // gradient sampling accuracy (ssn-full)
  double delta = 0.1;
  LineSearchParams lineSearch;
  std::optional<InexactnessSpec> inexact;  // absent: exact solves
  double lambdaUser = 0.0;
  double sigma = 0.0;
  Eps2Schedule eps2Schedule = Eps2Schedule::Constant;
  double rho2 = 0.5;
  std::size_t maxIters = 100;
  double gradTol = 1e-8;
  std::uint64_t seed = 0;
  Replacement replacementMode = Replacement::Without;       // Hessian samples
  Replacement gradientReplacement = Replacement::With;      // gradient samples
  std::optional<double> sampleFracH;  // bypasses the lemma size when set
  std::optional<double> sampleFracG;
  std::size_t lbfgsMemory = 10;
  std::optional<double> gdStep;  // default 1/K
  std::size_t resampleRetries = 3;
  double timeLimitSeconds = 0.0;  // 0: no limit
  bool recordMinEig = false;
  bool recordIterates = true;
  std::optional<double> poissonRadius;  // default 2|x0| + 1
  std::optional<ConditionEstimates> estimates;
  std::string label;

  /// Throws InvalidArgument on out-of-range values; returns soft warnings.
  std::vector<std::string> validate(const ConditionEstimates* est = nullptr) const {
    auto unit = [](double v, const char* name) {
      if (!(v > 0.0 && v < 1.0)) throw InvalidArgument(std::string(name) + " must lie in (0,1)");
    };
    unit(eps, "eps");
    unit(eps1, "eps1");
    unit(delta, "delta");
    if (!(eps2 > 0.0) || !std::isfinite(eps2)) throw InvalidArgument("eps2 must be positive");
    lineSearch.validate();
    if (inexact) inexact->validate();
    if (!(lambdaUser >= 0.0) || !std::isfinite(lambdaUser)) throw InvalidArgument("lambda must be finite and >= 0");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be finite and >= 0");
    if (eps2Schedule == Eps2Schedule::Geometric) unit(rho2, "rho2");
    if (!(gradTol >= 0.0)) throw InvalidArgument("grad-tol must be >= 0");
    for (const auto& f : {sampleFracH, sampleFracG})
      if (f && !(*f > 0.0 && *f <= 1.0)) throw InvalidArgument("sample fractions must lie in (0,1]");
    if (lbfgsMemory < 1) throw InvalidArgument("L-BFGS memory must be >= 1");
    if (gdStep && !(*gdStep > 0.0 && std::isfinite(*gdStep))) throw InvalidArgument("gd step must be positive");
    if (!(timeLimitSeconds >= 0.0)) throw InvalidArgument("time limit must be >= 0");
    if (poissonRadius && !(*poissonRadius >= 0.0)) throw InvalidArgument("Poisson radius must be >= 0");

    std::vector<std::string> warnings;
    if (variant == Variant::SsnFull) {
      if (eps1 > 0.5) warnings.push_back("eps1 > 1/2: the convergence guarantee for ssn-full does not apply");
      if (est && est->strongly_convex() && sigma > 0.0) {
        const double kt = est->kappa_tilde(1, Replacement::With);
        const double floor = inexact ? 4.0 * kt / ((1.0 - inexact->theta1) * (1.0 - inexact->theta2) *
                                                   (1.0 - lineSearch.beta))
                                     : 4.0 * kt / (1.0 - lineSearch.beta);
        if (sigma < floor)
          warnings.push_back("sigma = " + std::to_string(sigma) + " is below the guaranteed minimum " +
                             std::to_string(floor));
      }
    }
    if (variant == Variant::SsnSpectral && lambdaUser == 0.0)
      warnings.push_back("spectral floor with lambda = 0 fails on singular sub-sampled Hessians");
    return warnings;
  }
};

struct TraceRecord {
  std::size_t k = 0;
  double fValue = 0.0;
  double gradNormFull = 0.0;
  double gradNormUsed = 0.0;
  double alpha = 0.0;  // step taken from this iterate; 0 on the final record
  std::size_t sampleSizeH = 0;
  std::size_t sampleSizeG = 0;
  std::optional<double> residualRatio;
  std::optional<double> descentRatio;
  std::optional<double> lambdaApplied;
  std::optional<double> minEigH;
  std::optional<double> eps2Used;
  std::size_t cgIterations = 0;
  std::size_t backtracks = 0;
  std::size_t resamples = 0;
  bool sampleClampedG = false;
  StopFlag stopped = StopFlag::None;
  std::int64_t wallNanos = 0;
  Vector x;  // empty unless recordIterates
};

struct Trace {
  Variant variant = Variant::Newton;
  std::string label;
  std::vector<TraceRecord> records;
  StopFlag stop = StopFlag::None;
  std::string message;
  std::vector<std::string> warnings;
  std::optional<ConditionEstimates> estimates;
  std::size_t plannedSampleH = 0;
  bool directFractionH = false;
  bool directFractionG = false;

  const TraceRecord& last() const {
    if (records.empty()) throw InvalidArgument("trace is empty");
    return records.back();
  }
  bool converged() const { return stop == StopFlag::GradTol || stop == StopFlag::SigmaStop; }
};

namespace detail {

/// Accumulates only the intervals between resume() and pause().
class Stopwatch {
 public:
  void resume() {
    if (!running_) {
      started_ = std::chrono::steady_clock::now();
      running_ = true;
    }
  }
  void pause() {
    if (running_) {
      total_ += std::chrono::steady_clock::now() - started_;
      running_ = false;
    }
  }
  std::int64_t nanos() const {
    auto t = total_;
    if (running_) t += std::chrono::steady_clock::now() - started_;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(t).count();
  }

 private:
  std::chrono::steady_clock::duration total_{};
  std::chrono::steady_clock::time_point started_{};
  bool running_ = false;
};

/// Pauses the stopwatch for the lifetime of the guard.
class Untimed {
 public:
  explicit Untimed(Stopwatch& w) : w_(w) { w_.pause(); }
  ~Untimed() { w_.resume(); }
  Untimed(const Untimed&) = delete;
  Untimed& operator=(const Untimed&) = delete;

 private:
  Stopwatch& w_;
};

inline std::size_t fraction_size(double frac, std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n))));
}

struct Direction {
  Vector p;
  std::optional<double> residualRatio;
  std::optional<double> descentRatio;
  std::size_t cgIterations = 0;
};

inline Direction newton_direction(const Matrix& h, const Vector& g, const std::optional<InexactnessSpec>& inexact) {
  Direction d;
  if (inexact) {
    InexactSolve s = solve_inexact(h, g, *inexact);
    d.p = std::move(s.p);
    d.residualRatio = s.check.residualRatio;
    d.descentRatio = s.check.descentRatio;
    d.cgIterations = s.cgIterations;
  } else {
    d.p = solve_exact(h, -g);
  }
  return d;
}

struct Step {
  Vector x;
  double f = 0.0;
};

template <FiniteSumObjective M>
class Driver {
 public:
  Driver(const M& model, const SolverConfig& cfg, const Vector& x0) : model_(model), cfg_(cfg), rng_(cfg.seed) {
    if (static_cast<std::size_t>(x0.size()) != model.dim())
      throw InvalidArgument("x0 has dimension " + std::to_string(x0.size()) + ", model has " +
                            std::to_string(model.dim()));
    if (!x0.allFinite()) throw InvalidArgument("x0 has non-finite entries");
    trace_.variant = cfg.variant;
    trace_.label = cfg.label.empty() ? to_string(cfg.variant) : cfg.label;
    if (cfg.estimates) trace_.estimates = cfg.estimates;
    trace_.warnings = cfg.validate(trace_.estimates ? &*trace_.estimates : nullptr);
    radius_ = cfg.poissonRadius.value_or(2.0 * x0.norm() + 1.0);
  }

  const ConditionEstimates& estimates() {
    if (!trace_.estimates) {
      Untimed pause(clock_);
      trace_.estimates = model_.curvature_constants(radius_);
      const auto extra = cfg_.validate(&*trace_.estimates);
      for (const auto& w : extra)
        if (std::find(trace_.warnings.begin(), trace_.warnings.end(), w) == trace_.warnings.end())
          trace_.warnings.push_back(w);
    }
    return *trace_.estimates;
  }

  /// Hessian sample size: direct fraction, or the lemma size for the given ε.
  SampleSizePlan hessian_plan(double eps) {
    std::size_t requested = 0;
    if (cfg_.sampleFracH) {
      trace_.directFractionH = true;
      requested = fraction_size(*cfg_.sampleFracH, model_.n());
    } else {
      const auto& est = estimates();
      if (!est.strongly_convex())
        throw InvalidArgument("the lemma sample size needs gamma > 0; pass a sample fraction instead");
      requested = hessian_sample_size(est.kappa1(), eps, cfg_.delta, model_.dim());
    }
    const SampleSizePlan plan = plan_sample_size(requested, model_.n());
    trace_.plannedSampleH = plan.size;
    return plan;
  }

  SampleSet draw_hessian(const SampleSizePlan& plan) {
    return draw_planned(plan, model_.n(), cfg_.replacementMode, rng_);
  }

  /// Draws Hessian samples until `solve` succeeds on one, up to resampleRetries redraws.
  template <class Solve>
  auto with_resampling(const SampleSizePlan& plan, const Vector& x, TraceRecord& rec, Solve&& solve) {
    for (std::size_t attempt = 0;; ++attempt) {
      const SampleSet s = draw_hessian(plan);
      const Matrix h = subsampled_hessian(model_, x, s);
      rec.sampleSizeH = s.size();
      try {
        return solve(h);
      } catch (const NotPositiveDefinite&) {
        if (attempt >= cfg_.resampleRetries || plan.useFullSet)
          throw NotPositiveDefinite("sub-sampled Hessian is not positive definite after " +
                                    std::to_string(attempt + 1) +
                                    " draws; use ssn-spectral or ssn-ridge, or a larger sample");
        rec.resamples = attempt + 1;
      }
    }
  }

  void record_min_eig(const Matrix& h, TraceRecord& rec) {
    if (!cfg_.recordMinEig || rec.minEigH) return;
    Untimed pause(clock_);
    rec.minEigH = min_eigenvalue(h);
  }

  LineSearchResult line_search(const Vector& x, const Vector& p, const Vector& gUsed, double fx) {
    return armijo([this](const Vector& y) { return model_.value(y); }, x, p, gUsed, cfg_.lineSearch, fx);
  }

  /// Main loop for methods that steer by the full gradient.
  template <class StepFn>
  Trace run_full_gradient(const Vector& x0, StepFn&& step) {
    clock_.resume();
    Vector x = x0;
    double f = 0.0;
    Vector g;
    try {
      f = model_.value(x);
      g = model_.gradient(x);
    } catch (const Error& e) {
      return fail_at_start(x, e.what());
    }
    const double f0 = f;
    for (std::size_t k = 0;; ++k) {
      TraceRecord rec;
      rec.k = k;
      rec.wallNanos = clock_.nanos();
      rec.fValue = f;
      rec.gradNormFull = rec.gradNormUsed = g.norm();
      StopFlag stop = StopFlag::None;
      if (rec.gradNormFull <= cfg_.gradTol) stop = StopFlag::GradTol;
      else if (k >= cfg_.maxIters) stop = StopFlag::MaxIters;
      else if (time_up()) stop = StopFlag::TimeLimit;
      if (stop != StopFlag::None) return finish(std::move(rec), x, stop, "");
      Step next;
      try {
        next = step(k, x, f, g, rec);
        if (!std::isfinite(next.f) || next.f > f0 + 10.0 * std::max(std::abs(f0), 1.0))
          throw NumericalError("diverged: F rose more than 10x above F(x0)");
        Vector gNext = model_.gradient(next.x);
        {
          Untimed pause(clock_);
          push(std::move(rec), x);
        }
        g = std::move(gNext);
      } catch (const Error& e) {
        rec.alpha = 0.0;
        return finish(std::move(rec), x, StopFlag::Error, e.what());
      }
      x = std::move(next.x);
      f = next.f;
    }
  }

  Trace fail_at_start(const Vector& x, const std::string& what) {
    TraceRecord rec;
    rec.fValue = std::numeric_limits<double>::quiet_NaN();
    try {
      rec.fValue = model_.value(x);
      rec.gradNormFull = rec.gradNormUsed = model_.gradient(x).norm();
    } catch (const Error&) {
    }
    return finish(std::move(rec), x, StopFlag::Error, what);
  }

  Trace finish(TraceRecord rec, const Vector& x, StopFlag stop, const std::string& message) {
    clock_.pause();
    rec.stopped = stop;
    push(std::move(rec), x);
    trace_.stop = stop;
    trace_.message = message;
    return std::move(trace_);
  }

  void push(TraceRecord rec, const Vector& x) {
    if (cfg_.recordIterates) rec.x = x;
    trace_.records.push_back(std::move(rec));
  }

  bool time_up() const {
    return cfg_.timeLimitSeconds > 0.0 && static_cast<double>(clock_.nanos()) * 1e-9 >= cfg_.timeLimitSeconds;
  }

  const M& model_;
  const SolverConfig& cfg_;
  Rng rng_;
  Stopwatch clock_;
  Trace trace_;
  double radius_ = 1.0;
};

}  // namespace detail

/// Sub-sampled Hessian, full gradient, Armijo on the full gradient.
template <FiniteSumObjective M>
Trace run_ssn_hessian(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  SampleSizePlan plan;
  try {
    plan = d.hessian_plan(cfg.eps);
  } catch (const Error& e) {
    return d.fail_at_start(x0, e.what());
  }
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    const detail::Direction dir = d.with_resampling(plan, x, rec, [&](const Matrix& h) {
      d.record_min_eig(h, rec);
      return detail::newton_direction(h, g, cfg.inexact);
    });
    rec.residualRatio = dir.residualRatio;
    rec.descentRatio = dir.descentRatio;
    rec.cgIterations = dir.cgIterations;
    const LineSearchResult ls = d.line_search(x, dir.p, g, f);
    rec.alpha = ls.alpha;
    rec.backtracks = ls.trials;
    return detail::Step{x + ls.alpha * dir.p, ls.value};
  });
}

/// Sub-sampled Hessian with its spectrum floored at max(λ_min, 0) + λ_user.
template <FiniteSumObjective M>
Trace run_ssn_spectral(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  SampleSizePlan plan;
  try {
    plan = d.hessian_plan(cfg.eps);
  } catch (const Error& e) {
    return d.fail_at_start(x0, e.what());
  }
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    const SampleSet s = d.draw_hessian(plan);
    rec.sampleSizeH = s.size();
    const Matrix h = subsampled_hessian(model, x, s);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrized(h));
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition did not converge");
    const double minEig = es.eigenvalues()(0);
    const double level = spectral_floor_level(minEig, cfg.lambdaUser);
    rec.minEigH = minEig;
    rec.lambdaApplied = level;
    // Nothing is floored when every eigenvalue already clears the level.
    Matrix floored;
    if (minEig >= level) {
      floored = h;
    } else {
      const Vector ev = es.eigenvalues().cwiseMax(level);
      floored = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      floored = 0.5 * (floored + floored.transpose()).eval();
    }
    const detail::Direction dir = detail::newton_direction(floored, g, cfg.inexact);
    rec.residualRatio = dir.residualRatio;
    rec.descentRatio = dir.descentRatio;
    rec.cgIterations = dir.cgIterations;
    const LineSearchResult ls = d.line_search(x, dir.p, g, f);
    rec.alpha = ls.alpha;
    rec.backtracks = ls.trials;
    return detail::Step{x + ls.alpha * dir.p, ls.value};
  });
}

/// Sub-sampled Hessian plus λ_user·I.
template <FiniteSumObjective M>
Trace run_ssn_ridge(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  SampleSizePlan plan;
  try {
    plan = d.hessian_plan(cfg.eps);
  } catch (const Error& e) {
    return d.fail_at_start(x0, e.what());
  }
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    rec.lambdaApplied = cfg.lambdaUser;
    const detail::Direction dir = d.with_resampling(plan, x, rec, [&](const Matrix& h) {
      const RegularizedHessian r = ridge(h, cfg.lambdaUser);
      d.record_min_eig(h, rec);
      return detail::newton_direction(r.matrix, g, cfg.inexact);
    });
    rec.residualRatio = dir.residualRatio;
    rec.descentRatio = dir.descentRatio;
    rec.cgIterations = dir.cgIterations;
    const LineSearchResult ls = d.line_search(x, dir.p, g, f);
    rec.alpha = ls.alpha;
    rec.backtracks = ls.trials;
    return detail::Step{x + ls.alpha * dir.p, ls.value};
  });
}

/// Sub-sampled Hessian and gradient. Stops with SigmaStop once |g| < σ ε₂⁽ᵏ⁾.
template <FiniteSumObjective M>
Trace run_ssn_full(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  SampleSizePlan planH;
  try {
    planH = d.hessian_plan(cfg.eps1);
  } catch (const Error& e) {
    return d.fail_at_start(x0, e.what());
  }
  if (cfg.sampleFracG) d.trace_.directFractionG = true;
  if (cfg.sigma > 0.0 && !cfg.sampleFracH) d.estimates();  // surfaces the σ warning

  d.clock_.resume();
  Vector x = x0;
  double eps2k = cfg.eps2;
  for (std::size_t k = 0;; ++k, eps2k = cfg.eps2Schedule == Eps2Schedule::Geometric ? eps2k * cfg.rho2 : eps2k) {
    TraceRecord rec;
    rec.k = k;
    rec.wallNanos = d.clock_.nanos();
    rec.eps2Used = eps2k;
    try {
      rec.fValue = model.value(x);
      std::size_t requested = 0;
      if (cfg.sampleFracG) {
        requested = detail::fraction_size(*cfg.sampleFracG, model.n());
      } else {
        const GradientBound bound = model.gradient_norm_bound(x);
        requested = gradient_sample_size(bound.value, eps2k, cfg.delta);
      }
      const SampleSizePlan planG = plan_sample_size(requested, model.n());
      rec.sampleClampedG = planG.clamped;
      Vector g;
      if (planG.useFullSet) {
        g = model.gradient(x);
        rec.sampleSizeG = model.n();
      } else {
        const SampleSet sg = draw(model.n(), planG.size, cfg.gradientReplacement, d.rng_);
        g = subsampled_gradient(model, x, sg);
        rec.sampleSizeG = sg.size();
      }
      rec.gradNormUsed = g.norm();
      {
        detail::Untimed pause(d.clock_);
        rec.gradNormFull = planG.useFullSet ? rec.gradNormUsed : model.gradient(x).norm();
      }
      StopFlag stop = StopFlag::None;
      if (cfg.sigma > 0.0 && rec.gradNormUsed < cfg.sigma * eps2k) stop = StopFlag::SigmaStop;
      else if (rec.gradNormUsed <= cfg.gradTol) stop = StopFlag::GradTol;
      else if (k >= cfg.maxIters) stop = StopFlag::MaxIters;
      else if (d.time_up()) stop = StopFlag::TimeLimit;
      if (stop != StopFlag::None) return d.finish(std::move(rec), x, stop, "");

      const detail::Direction dir = d.with_resampling(planH, x, rec, [&](const Matrix& h) {
        d.record_min_eig(h, rec);
        return detail::newton_direction(h, g, cfg.inexact);
      });
      rec.residualRatio = dir.residualRatio;
      rec.descentRatio = dir.descentRatio;
      rec.cgIterations = dir.cgIterations;
      const LineSearchResult ls = d.line_search(x, dir.p, g, rec.fValue);
      rec.alpha = ls.alpha;
      rec.backtracks = ls.trials;
      {
        detail::Untimed pause(d.clock_);
        d.push(rec, x);
      }
      x += ls.alpha * dir.p;
    } catch (const Error& e) {
      rec.alpha = 0.0;
      if (!std::isfinite(rec.fValue)) rec.fValue = std::numeric_limits<double>::quiet_NaN();
      return d.finish(std::move(rec), x, StopFlag::Error, e.what());
    }
  }
}

/// Full Hessian, exact solve, Armijo.
template <FiniteSumObjective M>
Trace run_newton(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    const Matrix h = model.hessian(x);
    rec.sampleSizeH = model.n();
    d.record_min_eig(h, rec);
    const Vector p = solve_exact(h, -g);
    const LineSearchResult ls = d.line_search(x, p, g, f);
    rec.alpha = ls.alpha;
    rec.backtracks = ls.trials;
    return detail::Step{x + ls.alpha * p, ls.value};
  });
}

template <FiniteSumObjective M>
Trace run_gd(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  double step = 0.0;
  try {
    step = cfg.gdStep ? *cfg.gdStep : 1.0 / d.estimates().bigK;
  } catch (const Error& e) {
    return d.fail_at_start(x0, e.what());
  }
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double, const Vector& g, TraceRecord& rec) {
    rec.alpha = step;
    Vector next = x - step * g;
    const double f = model.value(next);
    return detail::Step{std::move(next), f};
  });
}

/// Nesterov momentum with a fixed step. A step that raises F is replaced by a
/// plain gradient step and the momentum is reset, so F never increases when
/// the step is at most 1/K.
template <FiniteSumObjective M>
Trace run_agd(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  double step = 0.0;
  std::optional<double> strongMomentum;
  try {
    const ConditionEstimates& est = d.estimates();
    step = cfg.gdStep ? *cfg.gdStep : 1.0 / est.bigK;
    if (est.strongly_convex()) {
      const double root = std::sqrt(est.kappa());
      strongMomentum = (root - 1.0) / (root + 1.0);
    }
  } catch (const Error& e) {
    return d.fail_at_start(x0, e.what());
  }
  Vector previous = x0;
  std::size_t sinceRestart = 0;
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    rec.alpha = step;
    const double mu = strongMomentum ? *strongMomentum
                                     : static_cast<double>(sinceRestart) / static_cast<double>(sinceRestart + 3);
    const Vector y = x + mu * (x - previous);
    Vector next = y - step * model.gradient(y);
    double fNext = std::numeric_limits<double>::infinity();
    try {
      fNext = model.value(next);
    } catch (const NumericalError&) {
    }
    if (!(fNext <= f)) {
      next = x - step * g;
      fNext = model.value(next);
      sinceRestart = 0;
      previous = next;
    } else {
      ++sinceRestart;
      previous = x;
    }
    return detail::Step{std::move(next), fNext};
  });
}

/// Dense BFGS on the inverse Hessian approximation; updates with yᵀs ≤ 0 are skipped.
template <FiniteSumObjective M>
Trace run_bfgs(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  const auto p = static_cast<Eigen::Index>(model.dim());
  Matrix hinv = Matrix::Identity(p, p);
  bool scaled = false;
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    Vector dir = -(hinv * g);
    if (!(dir.dot(g) < 0.0)) {
      hinv.setIdentity();
      scaled = false;
      dir = -g;
    }
    const LineSearchResult ls = d.line_search(x, dir, g, f);
    rec.alpha = ls.alpha;
    rec.backtracks = ls.trials;
    Vector next = x + ls.alpha * dir;
    const Vector s = next - x;
    const Vector y = model.gradient(next) - g;
    const double ys = y.dot(s);
    if (ys > 0.0) {
      if (!scaled) {
        hinv *= ys / y.squaredNorm();
        scaled = true;
      }
      const double r = 1.0 / ys;
      const Vector hy = hinv * y;
      const double yhy = y.dot(hy);
      hinv += ((1.0 + r * yhy) * r) * (s * s.transpose()) - r * (hy * s.transpose() + s * hy.transpose());
    }
    return detail::Step{std::move(next), ls.value};
  });
}

/// Limited-memory BFGS, two-loop recursion.
template <FiniteSumObjective M>
Trace run_lbfgs(const M& model, const SolverConfig& cfg, const Vector& x0) {
  detail::Driver<M> d(model, cfg, x0);
  std::deque<std::pair<Vector, Vector>> memory;  // (s, y)
  return d.run_full_gradient(x0, [&](std::size_t, const Vector& x, double f, const Vector& g, TraceRecord& rec) {
    Vector q = g;
    std::vector<double> a(memory.size());
    for (std::size_t j = memory.size(); j-- > 0;) {
      const auto& [s, y] = memory[j];
      a[j] = s.dot(q) / y.dot(s);
      q -= a[j] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t j = 0; j < memory.size(); ++j) {
      const auto& [s, y] = memory[j];
      const double b = y.dot(q) / y.dot(s);
      q += (a[j] - b) * s;
    }
    Vector dir = -q;
    if (!(dir.dot(g) < 0.0)) {
      memory.clear();
      dir = -g;
    }
    const LineSearchResult ls = d.line_search(x, dir, g, f);
    rec.alpha = ls.alpha;
    rec.backtracks = ls.trials;
    Vector next = x + ls.alpha * dir;
    Vector s = next - x;
    Vector y = model.gradient(next) - g;
    if (y.dot(s) > 0.0) {
      memory.emplace_back(std::move(s), std::move(y));
      if (memory.size() > cfg.lbfgsMemory) memory.pop_front();
    }
    return detail::Step{std::move(next), ls.value};
  });
}

template <FiniteSumObjective M>
Trace run_baseline(const M& model, const SolverConfig& cfg, const Vector& x0) {
  switch (cfg.variant) {
    case Variant::GD: return run_gd(model, cfg, x0);
    case Variant::AGD: return run_agd(model, cfg, x0);
    case Variant::BFGS: return run_bfgs(model, cfg, x0);
    case Variant::LBFGS: return run_lbfgs(model, cfg, x0);
    case Variant::Newton: return run_newton(model, cfg, x0);
    default: throw InvalidArgument(to_string(cfg.variant) + " is not a baseline");
  }
}

template <FiniteSumObjective M>
Trace run_solver(const M& model, const SolverConfig& cfg, const Vector& x0) {
  switch (cfg.variant) {
    case Variant::SsnHessian: return run_ssn_hessian(model, cfg, x0);
    case Variant::SsnSpectral: return run_ssn_spectral(model, cfg, x0);
    case Variant::SsnRidge: return run_ssn_ridge(model, cfg, x0);
    case Variant::SsnFull: return run_ssn_full(model, cfg, x0);
    default: return run_baseline(model, cfg, x0);
  }
}

}  // namespace ssn
