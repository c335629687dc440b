#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssn/ssn.hpp"

namespace ssn::cli {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kVerification = 3 };

/// Flags that map onto SolverConfig fields.
struct SolverFlags {
  std::string solver = "ssn-hessian";
  double eps = 0.5;
  double eps1 = 0.5;
  double eps2 = 1e-2;
  double delta = 0.1;
  double beta = 1e-4;
  double alphaHat = 1.0;
  std::optional<double> theta1;
  std::optional<double> theta2;
  double lambda = 0.0;
  double sigma = 0.0;
  std::optional<double> rho2;
  std::optional<double> sampleFracH;
  std::optional<double> sampleFracG;
  std::uint64_t seed = 0;
  double gradTol = 1e-8;
  std::size_t maxIters = 100;
  std::string replacement = "without";
  std::string gradientReplacement = "with";
  std::size_t lbfgsMemory = 10;
  std::optional<double> gdStep;
  double timeLimit = 0.0;
  bool recordMinEig = false;

  void attach(CLI::App* app) {
    app->add_option("--solver", solver, "ssn-hessian|ssn-spectral|ssn-ridge|ssn-full|gd|agd|bfgs|lbfgs|newton");
    app->add_option("--eps", eps, "Hessian sampling accuracy")->check(CLI::Range(0.0, 1.0));
    app->add_option("--eps1", eps1, "Hessian sampling accuracy for ssn-full")->check(CLI::Range(0.0, 1.0));
    app->add_option("--eps2", eps2, "gradient sampling accuracy for ssn-full")->check(CLI::PositiveNumber);
    app->add_option("--delta", delta, "failure probability")->check(CLI::Range(0.0, 1.0));
    app->add_option("--beta", beta, "Armijo constant")->check(CLI::Range(0.0, 1.0));
    app->add_option("--alpha-hat", alphaHat, "initial trial step")->check(CLI::Range(1.0, 1e300));
    app->add_option("--theta1", theta1, "relative residual tolerance (enables CG)")->check(CLI::Range(0.0, 1.0));
    app->add_option("--theta2", theta2, "descent slack (enables CG)")->check(CLI::Range(0.0, 1.0));
    app->add_option("--lambda", lambda, "regularization for ssn-spectral / ssn-ridge")->check(CLI::NonNegativeNumber);
    app->add_option("--sigma", sigma, "STOP multiplier for ssn-full")->check(CLI::NonNegativeNumber);
    app->add_option("--rho2", rho2, "geometric eps2 schedule factor")->check(CLI::Range(0.0, 1.0));
    app->add_option("--sample-frac-h", sampleFracH, "Hessian sample fraction")->check(CLI::Range(0.0, 1.0));
    app->add_option("--sample-frac-g", sampleFracG, "gradient sample fraction")->check(CLI::Range(0.0, 1.0));
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--grad-tol", gradTol, "stop when the gradient norm is at most this")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--max-iters", maxIters, "iteration cap");
    app->add_option("--replacement", replacement, "Hessian sampling")->check(CLI::IsMember({"with", "without"}));
    app->add_option("--gradient-replacement", gradientReplacement, "gradient sampling")
        ->check(CLI::IsMember({"with", "without"}));
    app->add_option("--lbfgs-memory", lbfgsMemory, "L-BFGS history length")->check(CLI::PositiveNumber);
    app->add_option("--gd-step", gdStep, "fixed step for gd / agd (default 1/K)")->check(CLI::PositiveNumber);
    app->add_option("--time-limit", timeLimit, "seconds, 0 for none")->check(CLI::NonNegativeNumber);
    app->add_flag("--record-min-eig", recordMinEig, "log lambda_min of each sub-sampled Hessian");
  }

  SolverConfig config() const {
    SolverConfig c;
    c.variant = parse_variant(solver);
    c.eps = eps;
    c.eps1 = eps1;
    c.eps2 = eps2;
    c.delta = delta;
    c.lineSearch.beta = beta;
    c.lineSearch.alphaHat = alphaHat;
    if (theta1 || theta2) {
      InexactnessSpec s;
      if (theta1) s.theta1 = *theta1;
      if (theta2) s.theta2 = *theta2;
      c.inexact = s;
    }
    c.lambdaUser = lambda;
    c.sigma = sigma;
    if (rho2) {
      c.eps2Schedule = Eps2Schedule::Geometric;
      c.rho2 = *rho2;
    }
    c.sampleFracH = sampleFracH;
    c.sampleFracG = sampleFracG;
    c.seed = seed;
    c.gradTol = gradTol;
    c.maxIters = maxIters;
    c.replacementMode = parse_replacement(replacement);
    c.gradientReplacement = parse_replacement(gradientReplacement);
    c.lbfgsMemory = lbfgsMemory;
    c.gdStep = gdStep;
    c.timeLimitSeconds = timeLimit;
    c.recordMinEig = recordMinEig;
    c.validate();
    return c;
  }
};

struct DataFlags {
  std::string path;
  std::string format = "auto";
  std::string family = "logistic";
  double reg = 1e-3;

  void attach(CLI::App* app, bool required) {
    auto* opt = app->add_option("--data", path, "dataset file (svmlight or .csv)");
    if (required) opt->required();
    app->add_option("--format", format, "auto|svmlight|csv")->check(CLI::IsMember({"auto", "svmlight", "csv"}));
    app->add_option("--family", family, "ridge|logistic|poisson")->check(CLI::IsMember({"ridge", "logistic", "poisson"}));
    app->add_option("--reg", reg, "l2 weight folded into every component")->check(CLI::NonNegativeNumber);
  }

  FileFormat file_format() const {
    if (format == "csv") return FileFormat::Csv;
    if (format == "svmlight") return FileFormat::Svmlight;
    return format_from_path(path);
  }

  GlmObjective model() const { return GlmObjective(load_dataset(path, file_format()), parse_family(family), reg); }
};

/// Every option of `app` with its effective value, defaults included.
inline Json echo_flags(const CLI::App* app) {
  Json j = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? Json(r.front()) : Json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

inline std::string sidecar_path(const std::string& csv) {
  const auto dot = csv.rfind('.');
  if (dot != std::string::npos && csv.substr(dot) == ".csv") return csv.substr(0, dot) + ".json";
  return csv + ".json";
}

inline void clear_wall_times(ExperimentResult& r) {
  for (auto& run : r.runs)
    for (auto& rec : run.trace.records) rec.wallNanos = 0;
}

inline Json estimates_summary(const ConditionEstimates& e, std::size_t sampleSize) {
  Json j;
  j["gamma"] = e.gamma;
  j["K"] = e.bigK;
  j["kappa"] = detail::number(e.kappa());
  j["kappa1"] = detail::number(e.kappa1());
  const std::size_t q = std::clamp<std::size_t>(sampleSize, 1, e.n());
  j["sample_size"] = q;
  j["khat"] = e.khat(q);
  j["kappa_q"] = detail::number(e.kappa_q(q));
  return j;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Sub-sampled Newton optimization toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::vector<std::string> args(argv, argv + argc);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  SyntheticOptions genOpts;
  std::string genFamily = "logistic";
  std::string genOut;
  std::string genFormat = "auto";
  gen->add_option("--n", genOpts.n, "rows")->check(CLI::PositiveNumber);
  gen->add_option("--p", genOpts.p, "features")->check(CLI::PositiveNumber);
  gen->add_option("--density", genOpts.density, "fraction of nonzeros")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--condition", genOpts.conditionTarget, "target Gram condition number")->check(CLI::Range(1.0, 1e300));
  gen->add_option("--family", genFamily, "ridge|logistic|poisson")->check(CLI::IsMember({"ridge", "logistic", "poisson"}));
  gen->add_option("--seed", genOpts.seed, "RNG seed");
  gen->add_option("--signal-scale", genOpts.signalScale, "std of planted margins")->check(CLI::NonNegativeNumber);
  gen->add_flag("--balanced", genOpts.balancedSignal, "spread the planted signal evenly over the spectrum");
  gen->add_option("--ridge-noise", genOpts.ridgeNoise, "label noise for ridge")->check(CLI::NonNegativeNumber);
  gen->add_option("-o,--output", genOut, "output file")->required();
  gen->add_option("--format", genFormat, "auto|svmlight|csv")->check(CLI::IsMember({"auto", "svmlight", "csv"}));

  // run
  auto* run = app.add_subcommand("run", "run one solver on one dataset");
  SolverFlags runFlags;
  DataFlags runData;
  std::string runOut = "trace.csv";
  bool deterministic = false;
  runFlags.attach(run);
  runData.attach(run, true);
  run->add_option("-o,--output", runOut, "trace CSV; a .json header is written next to it");
  run->add_flag("--deterministic", deterministic, "write zero wall times so outputs are reproducible byte for byte");

  // compare
  auto* compare = app.add_subcommand("compare", "run an experiment spec");
  std::string specPath;
  std::string comparePrefix = "experiment";
  bool compareDeterministic = false;
  compare->add_option("--spec", specPath, "experiment JSON")->required();
  compare->add_option("-o,--output", comparePrefix, "output prefix (.csv and .json)");
  compare->add_flag("--deterministic", compareDeterministic, "write zero wall times");

  // verify
  auto* verify = app.add_subcommand("verify", "statistical check of the sampling lemmas");
  std::string lemma = "both";
  std::size_t resamples = 1000;
  double vEps = 0.5;
  double vDelta = 0.1;
  double margin = 0.02;
  std::string constants = "local";
  std::string vReplacement = "with";
  std::uint64_t vSeed = 1;
  DataFlags vData;
  vData.reg = 1e-2;
  std::size_t vN = 10000;
  std::size_t vP = 100;
  verify->add_option("--lemma", lemma, "hessian|gradient|both")->check(CLI::IsMember({"hessian", "gradient", "both"}));
  verify->add_option("--resamples", resamples, "draws per lemma")->check(CLI::PositiveNumber);
  verify->add_option("--eps", vEps, "accuracy")->check(CLI::Range(0.0, 1.0));
  verify->add_option("--delta", vDelta, "failure probability")->check(CLI::Range(0.0, 1.0));
  verify->add_option("--margin", margin, "allowed excess over delta")->check(CLI::NonNegativeNumber);
  verify->add_option("--constants", constants, "local: curvature at the test point; global: model-wide")
      ->check(CLI::IsMember({"local", "global"}));
  verify->add_option("--replacement", vReplacement, "with|without")->check(CLI::IsMember({"with", "without"}));
  verify->add_option("--seed", vSeed, "RNG seed for data and draws");
  verify->add_option("--n", vN, "rows of the generated problem")->check(CLI::PositiveNumber);
  verify->add_option("--p", vP, "features of the generated problem")->check(CLI::PositiveNumber);
  vData.attach(verify, false);

  // rates
  auto* rates = app.add_subcommand("rates", "print rate diagnostics for a configuration");
  SolverFlags rateFlags;
  DataFlags rateData;
  std::optional<double> rKappa, rKappaTilde, rGamma, rK, rKhat, rAlpha;
  std::optional<double> rLip, rGap, rRho0, rRho1, rRho2;
  rateFlags.attach(rates);
  rateData.attach(rates, false);
  rates->add_option("--kappa", rKappa, "condition number (when no --data)");
  rates->add_option("--kappa-tilde", rKappaTilde, "sampling condition number (when no --data)");
  rates->add_option("--gamma", rGamma, "strong convexity (when no --data)");
  rates->add_option("--K", rK, "smoothness (when no --data)");
  rates->add_option("--khat", rKhat, "mean of the largest K_i over the sample (when no --data)");
  rates->add_option("--alpha", rAlpha, "accepted step size (default: the floor)");
  rates->add_option("--lipschitz", rLip, "Hessian Lipschitz constant, enables the local iteration count");
  rates->add_option("--f-gap", rGap, "F(x0) - F*");
  rates->add_option("--rho0", rRho0, "local rate constant");
  rates->add_option("--rho1", rRho1, "local rate constant");
  rates->add_option("--local-rho2", rRho2, "local rate constant for ssn-full");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "dataset condition metrics");
  DataFlags inspectData;
  inspectData.attach(inspect, true);
  std::optional<double> inspectRadius;
  inspect->add_option("--radius", inspectRadius, "domain radius for Poisson constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      genOpts.family = parse_family(genFamily);
      const SyntheticData d = generate_synthetic(genOpts);
      const FileFormat f = genFormat == "csv" ? FileFormat::Csv
                           : genFormat == "svmlight" ? FileFormat::Svmlight
                                                     : format_from_path(genOut);
      write_dataset(genOut, d.dataset, f);
      out << "wrote " << genOut << ": n=" << d.dataset.n() << " p=" << d.dataset.p()
          << " gram_condition=" << detail::format_double(d.gramCondition) << '\n';
      return kOk;
    }

    if (*run) {
      const SolverConfig cfg = runFlags.config();
      const GlmObjective model = runData.model();
      const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(model.dim()));
      Trace trace = run_solver(model, cfg, x0);
      ExperimentResult result = single_run_result(trace, cfg.seed);
      if (deterministic) clear_wall_times(result);
      Json header;
      header["command"] = "run";
      header["argv"] = args;
      header["flags"] = echo_flags(run);
      header["config"] = to_json(cfg);
      header["dataset"] = {{"path", runData.path}, {"n", model.n()}, {"p", model.dim()}};
      header["direct_fraction_h"] = trace.directFractionH;
      header["direct_fraction_g"] = trace.directFractionG;
      header["warnings"] = trace.warnings;
      header["stop"] = to_string(trace.stop);
      header["message"] = trace.message;
      if (trace.estimates) {
        const std::size_t q = trace.plannedSampleH ? trace.plannedSampleH : model.n();
        header["estimates"] = estimates_summary(*trace.estimates, q);
        const auto pred = predict_rates(cfg, *trace.estimates, q);
        header["diagnostics"] = pred ? to_json(*pred) : Json(nullptr);
      }
      result.header = header;
      std::ostringstream csv;
      write_csv(csv, result);
      write_text(runOut, csv.str());
      write_text(sidecar_path(runOut), to_json(result).dump(1) + "\n");
      for (const auto& w : trace.warnings) err << "warning: " << w << '\n';
      out << to_string(cfg.variant) << ": " << trace.records.size() - 1 << " iterations, stop=" << to_string(trace.stop)
          << ", F=" << detail::format_double(trace.last().fValue)
          << ", |grad|=" << detail::format_double(trace.last().gradNormFull) << '\n';
      if (trace.stop == StopFlag::Error) {
        err << "error: " << trace.message << '\n';
        return kNumerical;
      }
      return kOk;
    }

    if (*compare) {
      const ExperimentSpec spec = load_experiment_spec(specPath);
      const GlmObjective model = build_model(spec.data);
      const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(model.dim()));
      auto emit = [&](ExperimentResult& r) {
        if (compareDeterministic) clear_wall_times(r);
        r.header["command"] = "compare";
        r.header["argv"] = args;
        r.header["flags"] = echo_flags(compare);
        export_result(r, ExportFormat::Csv, comparePrefix + ".csv");
        export_result(r, ExportFormat::Json, comparePrefix + ".json");
      };
      try {
        ExperimentResult r = run_experiment(model, spec, x0);
        emit(r);
        for (const auto& runResult : r.runs)
          out << runResult.solver << "#" << runResult.rep << ": " << runResult.trace.records.size() - 1
              << " iterations, stop=" << to_string(runResult.trace.stop) << ", rel_err_f="
              << detail::format_double(runResult.relErrF.empty() ? 0.0 : runResult.relErrF.back()) << '\n';
        out << "x* from " << r.reference << '\n';
        return kOk;
      } catch (const ExperimentFailure& e) {
        ExperimentResult partial = e.partial();
        emit(partial);
        err << "error: " << e.what() << '\n';
        return kNumerical;
      }
    }

    if (*verify) {
      std::optional<GlmObjective> model;
      Vector x;
      if (!vData.path.empty()) {
        model.emplace(vData.model());
        x = Vector::Zero(static_cast<Eigen::Index>(model->dim()));
      } else {
        SyntheticOptions o;
        o.n = vN;
        o.p = vP;
        o.family = parse_family(vData.family);
        o.seed = vSeed;
        SyntheticData d = generate_synthetic(o);
        x = d.planted;
        model.emplace(std::move(d.dataset), o.family, vData.reg);
      }
      const Replacement mode = parse_replacement(vReplacement);
      Rng rng(vSeed);
      bool pass = true;
      const double threshold = vDelta + margin;
      if (lemma == "hessian" || lemma == "both") {
        const ConditionEstimates est =
            constants == "local" ? model->local_curvature(x) : model->curvature_constants(2.0 * x.norm() + 1.0);
        const LemmaTrial t = hessian_lemma_trial(*model, x, est, vEps, vDelta, resamples, mode, rng);
        const bool ok = t.frequency() <= threshold;
        pass = pass && ok;
        out << "hessian lemma: |S|=" << t.sampleSize << (t.fullSet ? " (full set)" : "") << " kappa1="
            << detail::format_double(est.kappa1()) << " failures=" << t.failures << "/" << t.resamples
            << " frequency=" << t.frequency() << " threshold=" << threshold << (ok ? " PASS" : " FAIL") << '\n';
      }
      if (lemma == "gradient" || lemma == "both") {
        const LemmaTrial t = gradient_lemma_trial(*model, x, vEps, vDelta, resamples, mode, rng);
        const bool ok = t.frequency() <= threshold;
        pass = pass && ok;
        out << "gradient lemma: |S|=" << t.sampleSize << (t.fullSet ? " (full set)" : "")
            << " G=" << detail::format_double(model->gradient_norm_bound(x).value) << " failures=" << t.failures
            << "/" << t.resamples << " frequency=" << t.frequency() << " threshold=" << threshold
            << (ok ? " PASS" : " FAIL") << '\n';
      }
      return pass ? kOk : kVerification;
    }

    if (*rates) {
      const SolverConfig cfg = rateFlags.config();
      Json report;
      report["flags"] = echo_flags(rates);
      std::optional<RatePrediction> pred;
      if (!rateData.path.empty()) {
        const GlmObjective model = rateData.model();
        const ConditionEstimates est = model.curvature_constants(1.0);
        const std::size_t q = cfg.sampleFracH ? detail::fraction_size(*cfg.sampleFracH, model.n())
                              : est.strongly_convex()
                                  ? std::min(model.n(), hessian_sample_size(est.kappa1(), cfg.eps, cfg.delta, model.dim()))
                                  : model.n();
        report["estimates"] = estimates_summary(est, q);
        pred = predict_rates(cfg, est, q);
      } else {
        if (!rKappa || !rKappaTilde) throw InvalidArgument("rates needs --data or --kappa and --kappa-tilde");
        const double beta = cfg.lineSearch.beta;
        const double t1 = cfg.inexact ? cfg.inexact->theta1 : 0.0;
        const double t2 = cfg.inexact ? cfg.inexact->theta2 : 0.0;
        auto eval = [&](double alpha) -> RatePrediction {
          switch (cfg.variant) {
            case Variant::SsnHessian:
              return cfg.inexact ? rate_alg1_inexact(beta, cfg.eps, t1, t2, *rKappa, *rKappaTilde, alpha)
                                 : rate_alg1(beta, cfg.eps, *rKappa, *rKappaTilde, alpha);
            case Variant::SsnFull:
              return rate_alg4(beta, cfg.eps1, t1, t2, *rKappa, *rKappaTilde, alpha, cfg.inexact.has_value());
            case Variant::SsnSpectral:
            case Variant::SsnRidge: {
              if (!rGamma || !rK || !rKhat) throw InvalidArgument("spectral/ridge rates need --gamma, --K, --khat");
              return cfg.variant == Variant::SsnSpectral ? rate_spectral(beta, t2, cfg.lambdaUser, *rK, *rKhat, *rGamma, alpha)
                                                         : rate_ridge(beta, t2, cfg.lambdaUser, *rK, *rKhat, *rGamma, alpha);
            }
            default: throw InvalidArgument("no rate guarantee for " + to_string(cfg.variant));
          }
        };
        pred = eval(rAlpha ? *rAlpha : eval(1.0).alphaFloor);
        if (rLip && rGap && rRho0 && rRho1 && rGamma && rK &&
            (cfg.variant == Variant::SsnHessian || cfg.variant == Variant::SsnFull)) {
          LocalRateInputs in;
          in.fGap = *rGap;
          in.lipschitzL = *rLip;
          in.gamma = *rGamma;
          in.bigK = *rK;
          in.kappa = *rKappa;
          in.kappa1 = *rKappaTilde;
          in.kappaTilde = *rKappaTilde;
          in.beta = beta;
          in.eps = cfg.variant == Variant::SsnFull ? cfg.eps1 : cfg.eps;
          in.eps2 = cfg.eps2;
          in.rho0 = *rRho0;
          in.rho1 = *rRho1;
          in.rho2 = rRho2.value_or(0.0);
          const RatePrediction local = local_iteration_count(
              cfg.variant == Variant::SsnFull ? LocalVariant::FullySampled : LocalVariant::HessianSampled, in);
          pred->kLocal = local.kLocal;
          pred->q1 = local.q1;
          pred->q2 = local.q2;
        }
      }
      report["diagnostics"] = pred ? to_json(*pred) : Json(nullptr);
      out << report.dump(1) << '\n';
      return kOk;
    }

    if (*inspect) {
      const GlmObjective model = inspectData.model();
      const Dataset& d = model.data();
      Json report;
      report["n"] = d.n();
      report["p"] = d.p();
      report["nonzeros"] = d.nonzeros();
      report["storage"] = d.storage() == Storage::Dense ? "dense" : "sparse";
      report["gram_condition"] = detail::number(gram_condition(d));
      const ConditionEstimates est = model.curvature_constants(inspectRadius.value_or(1.0));
      report["estimates"] = estimates_summary(est, std::max<std::size_t>(1, model.n() / 10));
      out << report.dump(1) << '\n';
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace ssn::cli
