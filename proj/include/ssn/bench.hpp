#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ssn/data.hpp"
#include "ssn/errors.hpp"
#include "ssn/model.hpp"
#include "ssn/solvers.hpp"
#include "ssn/theory.hpp"

namespace ssn {

using Json = nlohmann::json;

struct DatasetRef {
  std::optional<std::string> path;
  std::optional<SyntheticOptions> synthetic;
  Family family = Family::Logistic;
  double reg = 0.0;
};

struct ExperimentSpec {
  DatasetRef data;
  std::vector<SolverConfig> solvers;
  double gradTol = 1e-8;
  double timeLimitSeconds = 0.0;
  std::size_t repetitions = 1;
  std::size_t threads = 0;  // 0: hardware concurrency, capped by SSN_THREADS
};

struct RunResult {
  std::string solver;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  Trace trace;
  std::vector<double> relErrX;
  std::vector<double> relErrF;
  std::optional<RatePrediction> prediction;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  Vector xStar;
  double fStar = 0.0;
  std::string reference;  // "solver#rep" that defined x*
  Json header = Json::object();
};

/// No run converged, so x* is undefined. Carries the traces anyway.
class ExperimentFailure : public Error {
 public:
  ExperimentFailure(const std::string& what, ExperimentResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const ExperimentResult& partial() const noexcept { return partial_; }

 private:
  ExperimentResult partial_;
};

// ---------------------------------------------------------------------------
// JSON conversion

namespace detail {

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline Json optional_number(const std::optional<double>& v) { return v ? number(*v) : Json(nullptr); }

inline std::optional<double> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline Vector vector_from(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from(j[i]);
  return v;
}

}  // namespace detail

inline Json to_json(const RatePrediction& r) {
  Json j;
  j["rho"] = detail::number(r.rho);
  j["alpha_floor"] = detail::number(r.alphaFloor);
  j["theta1_max"] = detail::optional_number(r.theta1Max);
  j["sigma_min"] = detail::optional_number(r.sigmaMin);
  j["decrease_coeff"] = detail::optional_number(r.decreaseCoeff);
  j["k_local"] = r.kLocal ? Json(*r.kLocal) : Json(nullptr);
  j["q1"] = detail::optional_number(r.q1);
  j["q2"] = detail::optional_number(r.q2);
  j["regime"] = r.regime;
  return j;
}

inline RatePrediction rate_prediction_from_json(const Json& j) {
  RatePrediction r;
  r.rho = detail::number_from(j.at("rho"));
  r.alphaFloor = detail::number_from(j.at("alpha_floor"));
  r.theta1Max = detail::optional_from(j.at("theta1_max"));
  r.sigmaMin = detail::optional_from(j.at("sigma_min"));
  r.decreaseCoeff = detail::optional_from(j.at("decrease_coeff"));
  if (!j.at("k_local").is_null()) r.kLocal = j.at("k_local").get<std::size_t>();
  r.q1 = detail::optional_from(j.at("q1"));
  r.q2 = detail::optional_from(j.at("q2"));
  r.regime = j.at("regime").get<std::string>();
  return r;
}

inline Json to_json(const ConditionEstimates& e) {
  Json j;
  j["gamma"] = e.gamma;
  j["K"] = e.bigK;
  j["kappa"] = detail::number(e.kappa());
  j["kappa1"] = detail::number(e.kappa1());
  j["L"] = detail::optional_number(e.lipschitzL);
  j["K_i"] = e.perComponentK;
  return j;
}

inline ConditionEstimates condition_estimates_from_json(const Json& j) {
  ConditionEstimates e(j.at("K_i").get<std::vector<double>>(), j.at("gamma").get<double>(), j.at("K").get<double>());
  e.lipschitzL = detail::optional_from(j.at("L"));
  return e;
}

/// Flag-style keys shared by the CLI and the experiment file.
inline Json to_json(const SolverConfig& c) {
  Json j;
  j["solver"] = to_string(c.variant);
  j["label"] = c.label;
  j["eps"] = c.eps;
  j["eps1"] = c.eps1;
  j["eps2"] = c.eps2;
  j["delta"] = c.delta;
  j["beta"] = c.lineSearch.beta;
  j["alpha_hat"] = c.lineSearch.alphaHat;
  j["shrink"] = c.lineSearch.shrink;
  j["max_backtracks"] = c.lineSearch.maxBacktracks;
  if (c.inexact) {
    j["theta1"] = c.inexact->theta1;
    j["theta2"] = c.inexact->theta2;
    j["cg_max_iters"] = c.inexact->maxIters;
  }
  j["lambda"] = c.lambdaUser;
  j["sigma"] = c.sigma;
  j["eps2_schedule"] = c.eps2Schedule == Eps2Schedule::Geometric ? "geometric" : "constant";
  j["rho2"] = c.rho2;
  j["max_iters"] = c.maxIters;
  j["grad_tol"] = c.gradTol;
  j["seed"] = c.seed;
  j["replacement"] = to_string(c.replacementMode);
  j["gradient_replacement"] = to_string(c.gradientReplacement);
  j["sample_frac_h"] = detail::optional_number(c.sampleFracH);
  j["sample_frac_g"] = detail::optional_number(c.sampleFracG);
  j["lbfgs_memory"] = c.lbfgsMemory;
  j["gd_step"] = detail::optional_number(c.gdStep);
  j["resample_retries"] = c.resampleRetries;
  j["time_limit"] = c.timeLimitSeconds;
  j["record_min_eig"] = c.recordMinEig;
  j["poisson_radius"] = detail::optional_number(c.poissonRadius);
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SolverConfig solver_config_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("solver entry must be a JSON object");
  SolverConfig c;
  std::optional<double> theta1, theta2;
  std::optional<std::size_t> cgMax;
  for (const auto& [key, v] : j.items()) {
    if (key == "solver") c.variant = parse_variant(v.get<std::string>());
    else if (key == "label") c.label = v.get<std::string>();
    else if (key == "eps") c.eps = v.get<double>();
    else if (key == "eps1") c.eps1 = v.get<double>();
    else if (key == "eps2") c.eps2 = v.get<double>();
    else if (key == "delta") c.delta = v.get<double>();
    else if (key == "beta") c.lineSearch.beta = v.get<double>();
    else if (key == "alpha_hat") c.lineSearch.alphaHat = v.get<double>();
    else if (key == "shrink") c.lineSearch.shrink = v.get<double>();
    else if (key == "max_backtracks") c.lineSearch.maxBacktracks = v.get<std::size_t>();
    else if (key == "theta1") theta1 = v.get<double>();
    else if (key == "theta2") theta2 = v.get<double>();
    else if (key == "cg_max_iters") cgMax = v.get<std::size_t>();
    else if (key == "lambda") c.lambdaUser = v.get<double>();
    else if (key == "sigma") c.sigma = v.get<double>();
    else if (key == "eps2_schedule") {
      const auto s = v.get<std::string>();
      if (s == "geometric") c.eps2Schedule = Eps2Schedule::Geometric;
      else if (s == "constant") c.eps2Schedule = Eps2Schedule::Constant;
      else throw InvalidArgument("eps2_schedule must be 'constant' or 'geometric'");
    } else if (key == "rho2") c.rho2 = v.get<double>();
    else if (key == "max_iters") c.maxIters = v.get<std::size_t>();
    else if (key == "grad_tol") c.gradTol = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "replacement") c.replacementMode = parse_replacement(v.get<std::string>());
    else if (key == "gradient_replacement") c.gradientReplacement = parse_replacement(v.get<std::string>());
    else if (key == "sample_frac_h") c.sampleFracH = detail::optional_from(v);
    else if (key == "sample_frac_g") c.sampleFracG = detail::optional_from(v);
    else if (key == "lbfgs_memory") c.lbfgsMemory = v.get<std::size_t>();
    else if (key == "gd_step") c.gdStep = detail::optional_from(v);
    else if (key == "resample_retries") c.resampleRetries = v.get<std::size_t>();
    else if (key == "time_limit") c.timeLimitSeconds = v.get<double>();
    else if (key == "record_min_eig") c.recordMinEig = v.get<bool>();
    else if (key == "poisson_radius") c.poissonRadius = detail::optional_from(v);
    else throw InvalidArgument("unknown solver key '" + key + "'");
  }
  if (theta1 || theta2 || cgMax) {
    InexactnessSpec spec;
    if (theta1) spec.theta1 = *theta1;
    if (theta2) spec.theta2 = *theta2;
    if (cgMax) spec.maxIters = *cgMax;
    c.inexact = spec;
  }
  c.validate();
  return c;
}

inline Json to_json(const SyntheticOptions& o) {
  Json j;
  j["n"] = o.n;
  j["p"] = o.p;
  j["density"] = o.density;
  j["condition"] = o.conditionTarget;
  j["family"] = to_string(o.family);
  j["seed"] = o.seed;
  j["signal_scale"] = o.signalScale;
  j["balanced"] = o.balancedSignal;
  j["ridge_noise"] = o.ridgeNoise;
  j["mean_row_norm_sq"] = o.meanRowNormSq;
  return j;
}

inline SyntheticOptions synthetic_options_from_json(const Json& j, Family family) {
  SyntheticOptions o;
  o.family = family;
  for (const auto& [key, v] : j.items()) {
    if (key == "n") o.n = v.get<std::size_t>();
    else if (key == "p") o.p = v.get<std::size_t>();
    else if (key == "density") o.density = v.get<double>();
    else if (key == "condition") o.conditionTarget = v.get<double>();
    else if (key == "family") o.family = parse_family(v.get<std::string>());
    else if (key == "seed") o.seed = v.get<std::uint64_t>();
    else if (key == "signal_scale") o.signalScale = v.get<double>();
    else if (key == "balanced") o.balancedSignal = v.get<bool>();
    else if (key == "ridge_noise") o.ridgeNoise = v.get<double>();
    else if (key == "mean_row_norm_sq") o.meanRowNormSq = v.get<double>();
    else throw InvalidArgument("unknown synthetic key '" + key + "'");
  }
  return o;
}

inline Json to_json(const ExperimentSpec& s) {
  Json j;
  Json d;
  if (s.data.path) d["path"] = *s.data.path;
  if (s.data.synthetic) d["synthetic"] = to_json(*s.data.synthetic);
  d["family"] = to_string(s.data.family);
  d["reg"] = s.data.reg;
  j["dataset"] = d;
  j["grad_tol"] = s.gradTol;
  j["time_limit"] = s.timeLimitSeconds;
  j["repetitions"] = s.repetitions;
  j["threads"] = s.threads;
  j["solvers"] = Json::array();
  for (const auto& c : s.solvers) j["solvers"].push_back(to_json(c));
  return j;
}

inline ExperimentSpec experiment_spec_from_json(const Json& j) {
  ExperimentSpec s;
  const Json& d = j.at("dataset");
  s.data.family = parse_family(d.value("family", std::string("logistic")));
  s.data.reg = d.value("reg", 0.0);
  if (d.contains("path")) s.data.path = d.at("path").get<std::string>();
  if (d.contains("synthetic")) s.data.synthetic = synthetic_options_from_json(d.at("synthetic"), s.data.family);
  if (s.data.path.has_value() == s.data.synthetic.has_value())
    throw InvalidArgument("dataset needs exactly one of 'path' or 'synthetic'");
  s.gradTol = j.value("grad_tol", s.gradTol);
  s.timeLimitSeconds = j.value("time_limit", s.timeLimitSeconds);
  s.repetitions = j.value("repetitions", s.repetitions);
  s.threads = j.value("threads", s.threads);
  if (s.repetitions < 1) throw InvalidArgument("repetitions must be >= 1");
  for (const auto& c : j.at("solvers")) s.solvers.push_back(solver_config_from_json(c));
  if (s.solvers.empty()) throw InvalidArgument("experiment lists no solvers");
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return experiment_spec_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("experiment spec: ") + e.what(), 0);
  }
}

inline Json to_json(const TraceRecord& r) {
  Json j;
  j["k"] = r.k;
  j["f"] = detail::number(r.fValue);
  j["grad_norm_full"] = detail::number(r.gradNormFull);
  j["grad_norm_used"] = detail::number(r.gradNormUsed);
  j["alpha"] = r.alpha;
  j["sample_h"] = r.sampleSizeH;
  j["sample_g"] = r.sampleSizeG;
  j["residual_ratio"] = detail::optional_number(r.residualRatio);
  j["descent_ratio"] = detail::optional_number(r.descentRatio);
  j["lambda_applied"] = detail::optional_number(r.lambdaApplied);
  j["min_eig_h"] = detail::optional_number(r.minEigH);
  j["eps2_used"] = detail::optional_number(r.eps2Used);
  j["cg_iterations"] = r.cgIterations;
  j["backtracks"] = r.backtracks;
  j["resamples"] = r.resamples;
  j["sample_g_clamped"] = r.sampleClampedG;
  j["stop"] = to_string(r.stopped);
  j["wall_nanos"] = r.wallNanos;
  j["x"] = detail::vector_json(r.x);
  return j;
}

inline TraceRecord trace_record_from_json(const Json& j) {
  TraceRecord r;
  r.k = j.at("k").get<std::size_t>();
  r.fValue = detail::number_from(j.at("f"));
  r.gradNormFull = detail::number_from(j.at("grad_norm_full"));
  r.gradNormUsed = detail::number_from(j.at("grad_norm_used"));
  r.alpha = j.at("alpha").get<double>();
  r.sampleSizeH = j.at("sample_h").get<std::size_t>();
  r.sampleSizeG = j.at("sample_g").get<std::size_t>();
  r.residualRatio = detail::optional_from(j.at("residual_ratio"));
  r.descentRatio = detail::optional_from(j.at("descent_ratio"));
  r.lambdaApplied = detail::optional_from(j.at("lambda_applied"));
  r.minEigH = detail::optional_from(j.at("min_eig_h"));
  r.eps2Used = detail::optional_from(j.at("eps2_used"));
  r.cgIterations = j.at("cg_iterations").get<std::size_t>();
  r.backtracks = j.at("backtracks").get<std::size_t>();
  r.resamples = j.at("resamples").get<std::size_t>();
  r.sampleClampedG = j.at("sample_g_clamped").get<bool>();
  r.stopped = parse_stop_flag(j.at("stop").get<std::string>());
  r.wallNanos = j.at("wall_nanos").get<std::int64_t>();
  r.x = detail::vector_from(j.at("x"));
  return r;
}

inline Json to_json(const Trace& t) {
  Json j;
  j["variant"] = to_string(t.variant);
  j["label"] = t.label;
  j["stop"] = to_string(t.stop);
  j["message"] = t.message;
  j["warnings"] = t.warnings;
  j["estimates"] = t.estimates ? to_json(*t.estimates) : Json(nullptr);
  j["planned_sample_h"] = t.plannedSampleH;
  j["direct_fraction_h"] = t.directFractionH;
  j["direct_fraction_g"] = t.directFractionG;
  j["records"] = Json::array();
  for (const auto& r : t.records) j["records"].push_back(to_json(r));
  return j;
}

inline Trace trace_from_json(const Json& j) {
  Trace t;
  t.variant = parse_variant(j.at("variant").get<std::string>());
  t.label = j.at("label").get<std::string>();
  t.stop = parse_stop_flag(j.at("stop").get<std::string>());
  t.message = j.at("message").get<std::string>();
  t.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (!j.at("estimates").is_null()) t.estimates = condition_estimates_from_json(j.at("estimates"));
  t.plannedSampleH = j.at("planned_sample_h").get<std::size_t>();
  t.directFractionH = j.at("direct_fraction_h").get<bool>();
  t.directFractionG = j.at("direct_fraction_g").get<bool>();
  for (const auto& r : j.at("records")) t.records.push_back(trace_record_from_json(r));
  return t;
}

inline Json to_json(const ExperimentResult& r) {
  Json j;
  j["header"] = r.header;
  j["x_star"] = detail::vector_json(r.xStar);
  j["f_star"] = detail::number(r.fStar);
  j["reference"] = r.reference;
  j["runs"] = Json::array();
  for (const auto& run : r.runs) {
    Json o;
    o["solver"] = run.solver;
    o["rep"] = run.rep;
    o["seed"] = run.seed;
    o["prediction"] = run.prediction ? to_json(*run.prediction) : Json(nullptr);
    o["trace"] = to_json(run.trace);
    Json ex = Json::array(), ef = Json::array();
    for (double v : run.relErrX) ex.push_back(detail::number(v));
    for (double v : run.relErrF) ef.push_back(detail::number(v));
    o["rel_err_x"] = ex;
    o["rel_err_f"] = ef;
    j["runs"].push_back(o);
  }
  return j;
}

inline ExperimentResult experiment_result_from_json(const Json& j) {
  ExperimentResult r;
  r.header = j.at("header");
  r.xStar = detail::vector_from(j.at("x_star"));
  r.fStar = detail::number_from(j.at("f_star"));
  r.reference = j.at("reference").get<std::string>();
  for (const auto& o : j.at("runs")) {
    RunResult run;
    run.solver = o.at("solver").get<std::string>();
    run.rep = o.at("rep").get<std::size_t>();
    run.seed = o.at("seed").get<std::uint64_t>();
    if (!o.at("prediction").is_null()) run.prediction = rate_prediction_from_json(o.at("prediction"));
    run.trace = trace_from_json(o.at("trace"));
    for (const auto& v : o.at("rel_err_x")) run.relErrX.push_back(detail::number_from(v));
    for (const auto& v : o.at("rel_err_f")) run.relErrF.push_back(detail::number_from(v));
    r.runs.push_back(std::move(run));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Running

/// Worst-case rate constants for a configuration, at α = alphaFloor.
/// Empty when the variant has no guarantee or its preconditions fail.
inline std::optional<RatePrediction> predict_rates(const SolverConfig& c, const ConditionEstimates& est,
                                                   std::size_t sampleSizeH) {
  if (!est.strongly_convex() && c.variant != Variant::SsnSpectral && c.variant != Variant::SsnRidge)
    return std::nullopt;
  const double beta = c.lineSearch.beta;
  const std::size_t q = std::clamp<std::size_t>(sampleSizeH, 1, est.n());
  try {
    switch (c.variant) {
      case Variant::SsnHessian: {
        const double kt = est.kappa_tilde(q, c.replacementMode);
        if (c.inexact) {
          const auto probe = rate_alg1_inexact(beta, c.eps, c.inexact->theta1, c.inexact->theta2, est.kappa(), kt, 1.0);
          return rate_alg1_inexact(beta, c.eps, c.inexact->theta1, c.inexact->theta2, est.kappa(), kt,
                                   probe.alphaFloor);
        }
        const auto probe = rate_alg1(beta, c.eps, est.kappa(), kt, 1.0);
        return rate_alg1(beta, c.eps, est.kappa(), kt, probe.alphaFloor);
      }
      case Variant::SsnSpectral:
      case Variant::SsnRidge: {
        const double theta2 = c.inexact ? c.inexact->theta2 : 0.0;
        auto fn = c.variant == Variant::SsnSpectral ? rate_spectral : rate_ridge;
        const auto probe = fn(beta, theta2, c.lambdaUser, est.bigK, est.khat(q), est.gamma, 1.0);
        return fn(beta, theta2, c.lambdaUser, est.bigK, est.khat(q), est.gamma, probe.alphaFloor);
      }
      case Variant::SsnFull: {
        const double kt = est.kappa_tilde(q, c.replacementMode);
        const double t1 = c.inexact ? c.inexact->theta1 : 0.0;
        const double t2 = c.inexact ? c.inexact->theta2 : 0.0;
        const auto probe = rate_alg4(beta, c.eps1, t1, t2, est.kappa(), kt, 1.0, c.inexact.has_value());
        return rate_alg4(beta, c.eps1, t1, t2, est.kappa(), kt, probe.alphaFloor, c.inexact.has_value());
      }
      default: return std::nullopt;
    }
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
}

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SSN_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

inline GlmObjective build_model(const DatasetRef& ref) {
  if (ref.path) return GlmObjective(load_dataset(*ref.path), ref.family, ref.reg);
  if (ref.synthetic) {
    SyntheticOptions o = *ref.synthetic;
    o.family = ref.family;
    return GlmObjective(generate_synthetic(o).dataset, ref.family, ref.reg);
  }
  throw InvalidArgument("dataset reference is empty");
}

/// Fills the relative-error series of every run from the reference run's final iterate.
inline void attach_relative_errors(ExperimentResult& r) {
  const double xs = r.xStar.norm();
  const double fs = std::abs(r.fStar);
  for (auto& run : r.runs) {
    run.relErrX.clear();
    run.relErrF.clear();
    for (const auto& rec : run.trace.records) {
      const double ex = rec.x.size() == r.xStar.size() ? (rec.x - r.xStar).norm()
                                                        : std::numeric_limits<double>::quiet_NaN();
      run.relErrX.push_back(xs > 0.0 ? ex / xs : ex);
      const double ef = std::abs(rec.fValue - r.fStar);
      run.relErrF.push_back(fs > 0.0 ? ef / fs : ef);
    }
  }
}

/// Runs every configuration `repetitions` times (seed + rep) from x0 and
/// measures all of them against the run with the smallest final gradient norm.
template <FiniteSumObjective M>
ExperimentResult run_experiment(const M& model, const ExperimentSpec& spec, const Vector& x0) {
  if (spec.solvers.empty()) throw InvalidArgument("experiment lists no solvers");
  if (spec.repetitions < 1) throw InvalidArgument("repetitions must be >= 1");

  std::optional<ConditionEstimates> shared;
  auto estimates_for = [&](const SolverConfig& c) -> const ConditionEstimates& {
    if (!shared) shared = model.curvature_constants(c.poissonRadius.value_or(2.0 * x0.norm() + 1.0));
    return *shared;
  };

  struct Job {
    SolverConfig cfg;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (const auto& base : spec.solvers) {
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      SolverConfig c = base;
      c.seed = base.seed + rep;
      c.gradTol = spec.gradTol;
      if (spec.timeLimitSeconds > 0.0) c.timeLimitSeconds = spec.timeLimitSeconds;
      c.recordIterates = true;
      if (!c.estimates) c.estimates = estimates_for(c);
      jobs.push_back({std::move(c), rep});
    }
  }

  ExperimentResult result;
  result.header["spec"] = to_json(spec);
  result.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      RunResult& out = result.runs[i];
      out.solver = job.cfg.label.empty() ? to_string(job.cfg.variant) : job.cfg.label;
      out.rep = job.rep;
      out.seed = job.cfg.seed;
      out.trace = run_solver(model, job.cfg, x0);
      std::size_t q = out.trace.plannedSampleH;
      if (q == 0) q = model.n();
      out.prediction = predict_rates(job.cfg, *job.cfg.estimates, q);
    }
  };
  const std::size_t workers = worker_count(spec.threads, jobs.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  const RunResult* best = nullptr;
  for (const auto& run : result.runs) {
    if (!run.trace.converged()) continue;
    const auto& a = run.trace.last();
    if (!best) {
      best = &run;
      continue;
    }
    const auto& b = best->trace.last();
    if (a.gradNormFull < b.gradNormFull || (a.gradNormFull == b.gradNormFull && a.fValue < b.fValue)) best = &run;
  }
  if (!best) throw ExperimentFailure("no run converged, so x* is unavailable", std::move(result));
  result.xStar = best->trace.last().x;
  result.fStar = best->trace.last().fValue;
  result.reference = best->solver + "#" + std::to_string(best->rep);
  attach_relative_errors(result);
  return result;
}

// ---------------------------------------------------------------------------
// Export

inline const char* kCsvHeader =
    "solver,rep,k,wall_seconds,f_value,grad_norm,alpha,sample_h,sample_g,rel_err_x,rel_err_f,stop_flag";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

}  // namespace detail

inline void write_csv(std::ostream& out, const ExperimentResult& r) {
  out << kCsvHeader << '\n';
  for (const auto& run : r.runs) {
    for (std::size_t i = 0; i < run.trace.records.size(); ++i) {
      const TraceRecord& rec = run.trace.records[i];
      const double ex = i < run.relErrX.size() ? run.relErrX[i] : std::numeric_limits<double>::quiet_NaN();
      const double ef = i < run.relErrF.size() ? run.relErrF[i] : std::numeric_limits<double>::quiet_NaN();
      out << detail::csv_field(run.solver) << ',' << run.rep << ',' << rec.k << ','
          << detail::csv_number(static_cast<double>(rec.wallNanos) * 1e-9) << ',' << detail::csv_number(rec.fValue)
          << ',' << detail::csv_number(rec.gradNormFull) << ',' << detail::csv_number(rec.alpha) << ','
          << rec.sampleSizeH << ',' << rec.sampleSizeG << ',' << detail::csv_number(ex) << ','
          << detail::csv_number(ef) << ',' << to_string(rec.stopped) << '\n';
    }
  }
}

enum class ExportFormat { Csv, Json };

inline void export_result(const ExperimentResult& r, ExportFormat format, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  if (format == ExportFormat::Csv) write_csv(out, r);
  else out << to_json(r).dump(1) << '\n';
  if (!out) throw Error("write to '" + path + "' failed");
}

inline ExperimentResult import_result_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return experiment_result_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("result file: ") + e.what(), 0);
  }
}

/// Wraps a single trace as a one-run result measured against its own last iterate.
inline ExperimentResult single_run_result(Trace trace, std::uint64_t seed) {
  ExperimentResult r;
  RunResult run;
  run.solver = trace.label;
  run.seed = seed;
  run.trace = std::move(trace);
  if (!run.trace.records.empty()) {
    r.xStar = run.trace.last().x;
    r.fStar = run.trace.last().fValue;
    r.reference = run.solver + "#0";
  }
  r.runs.push_back(std::move(run));
  if (!r.runs.back().trace.records.empty()) attach_relative_errors(r);
  return r;
}

// ---------------------------------------------------------------------------
// Equality, used to check export round trips.

inline bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!(a(i) == b(i) || (std::isnan(a(i)) && std::isnan(b(i))))) return false;
  return true;
}

inline bool same_number(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

inline bool same_optional(const std::optional<double>& a, const std::optional<double>& b) {
  return a.has_value() == b.has_value() && (!a || same_number(*a, *b));
}

inline bool operator==(const TraceRecord& a, const TraceRecord& b) {
  return a.k == b.k && same_number(a.fValue, b.fValue) && same_number(a.gradNormFull, b.gradNormFull) &&
         same_number(a.gradNormUsed, b.gradNormUsed) && a.alpha == b.alpha && a.sampleSizeH == b.sampleSizeH &&
         a.sampleSizeG == b.sampleSizeG && same_optional(a.residualRatio, b.residualRatio) &&
         same_optional(a.descentRatio, b.descentRatio) && same_optional(a.lambdaApplied, b.lambdaApplied) &&
         same_optional(a.minEigH, b.minEigH) && same_optional(a.eps2Used, b.eps2Used) &&
         a.cgIterations == b.cgIterations && a.backtracks == b.backtracks && a.resamples == b.resamples &&
         a.sampleClampedG == b.sampleClampedG && a.stopped == b.stopped && a.wallNanos == b.wallNanos &&
         same_vector(a.x, b.x);
}

inline bool operator==(const ConditionEstimates& a, const ConditionEstimates& b) {
  return a.gamma == b.gamma && a.bigK == b.bigK && a.perComponentK == b.perComponentK &&
         same_optional(a.lipschitzL, b.lipschitzL);
}

inline bool operator==(const RatePrediction& a, const RatePrediction& b) {
  return same_number(a.rho, b.rho) && same_number(a.alphaFloor, b.alphaFloor) &&
         same_optional(a.theta1Max, b.theta1Max) && same_optional(a.sigmaMin, b.sigmaMin) &&
         same_optional(a.decreaseCoeff, b.decreaseCoeff) && a.kLocal == b.kLocal && same_optional(a.q1, b.q1) &&
         same_optional(a.q2, b.q2) && a.regime == b.regime;
}

inline bool operator==(const Trace& a, const Trace& b) {
  return a.variant == b.variant && a.label == b.label && a.records == b.records && a.stop == b.stop &&
         a.message == b.message && a.warnings == b.warnings && a.estimates == b.estimates &&
         a.plannedSampleH == b.plannedSampleH && a.directFractionH == b.directFractionH &&
         a.directFractionG == b.directFractionG;
}

inline bool same_series(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_number(a[i], b[i])) return false;
  return true;
}

inline bool operator==(const RunResult& a, const RunResult& b) {
  return a.solver == b.solver && a.rep == b.rep && a.seed == b.seed && a.trace == b.trace &&
         same_series(a.relErrX, b.relErrX) && same_series(a.relErrF, b.relErrF) && a.prediction == b.prediction;
}

inline bool operator==(const ExperimentResult& a, const ExperimentResult& b) {
  return a.runs == b.runs && same_vector(a.xStar, b.xStar) && same_number(a.fStar, b.fStar) &&
         a.reference == b.reference && a.header == b.header;
}

}  // namespace ssn
