#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/Sparse>

#include "ssn/dataset.hpp"
#include "ssn/errors.hpp"
#include "ssn/model.hpp"

namespace ssn {

struct SyntheticOptions {
  std::size_t n = 1000;
  std::size_t p = 10;
  double density = 1.0;
  double conditionTarget = 1.0;  // of the Gram matrix (1/n) AᵀA
  Family family = Family::Logistic;
  std::uint64_t seed = 0;
  double signalScale = 1.0;      // standard deviation of the planted margins a_iᵀx*
  bool balancedSignal = false;   // x* weights every Gram eigendirection equally in the margins
  double ridgeNoise = 0.1;       // Gaussian label noise for ridge
  double meanRowNormSq = 1.0;    // trace of the Gram matrix
};

struct SyntheticData {
  Dataset dataset;
  Vector planted;
  double gramCondition = 0.0;
};

/// Condition number λ_max/λ_min of (1/n) AᵀA; infinite when singular.
inline double gram_condition(const Dataset& d) {
  std::vector<std::size_t> idx(d.n());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::vector<double> ones(d.n(), 1.0);
  const Matrix gram = d.weighted_gram(idx, ones);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("Gram eigensolve did not converge");
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

namespace detail {

inline Vector draw_labels(const Vector& margins, Family family, double ridgeNoise, std::mt19937_64& rng) {
  Vector b(margins.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double t = margins(i);
    switch (family) {
      case Family::Ridge: b(i) = t + ridgeNoise * noise(rng); break;
      case Family::Logistic: b(i) = unit(rng) < cumulant_d1(Family::Logistic, t) ? 1.0 : 0.0; break;
      case Family::Poisson: {
        std::poisson_distribution<long long> draw(std::exp(std::min(t, 30.0)));
        b(i) = static_cast<double>(draw(rng));
        break;
      }
    }
  }
  return b;
}

inline Matrix random_orthogonal(Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < p; ++i) z(i, j) = normal(rng);
  const Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  // Fix column signs so the distribution is Haar.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < p; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// s_j² = target^(-j/(p-1)), normalized so Σ s_j² = total.
inline Vector geometric_ladder(Eigen::Index p, double target, double total) {
  Vector s(p);
  for (Eigen::Index j = 0; j < p; ++j)
    s(j) = p > 1 ? std::pow(target, -0.5 * static_cast<double>(j) / static_cast<double>(p - 1)) : 1.0;
  s *= std::sqrt(total / s.squaredNorm());
  return s;
}

}  // namespace detail

/// Random design with a prescribed Gram spectrum and labels from a planted x*.
///
/// Dense: a Gaussian matrix is whitened to (1/n)WᵀW = I, then A = W diag(s) Vᵀ
/// with V Haar-orthogonal, so the Gram condition equals the target up to
/// rounding. Sparse (density < 1): entries are zeroed first and a geometric
/// column scaling is bisected until the measured condition is within √2 of
/// the target (or as close as the unscaled sparse design allows).
inline SyntheticData generate_synthetic(const SyntheticOptions& o) {
  if (o.p < 1 || o.n < 1) throw InvalidArgument("generate_synthetic: n and p must be >= 1");
  if (o.p > o.n) throw InvalidArgument("generate_synthetic: conditioning needs n >= p");
  if (!(o.density > 0.0 && o.density <= 1.0)) throw InvalidArgument("generate_synthetic: density must lie in (0,1]");
  if (!(o.conditionTarget >= 1.0) || !std::isfinite(o.conditionTarget))
    throw InvalidArgument("generate_synthetic: condition target must be >= 1");
  if (!(o.meanRowNormSq > 0.0)) throw InvalidArgument("generate_synthetic: mean row norm must be positive");
  if (!(o.signalScale >= 0.0)) throw InvalidArgument("generate_synthetic: signal scale must be >= 0");

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(o.n);
  const auto p = static_cast<Eigen::Index>(o.p);
  Vector direction(p);
  for (Eigen::Index j = 0; j < p; ++j) direction(j) = normal(rng);

  if (o.density == 1.0) {
    DenseRows g(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) g(i, j) = normal(rng);
    const Matrix cov = (g.transpose() * g) / static_cast<double>(n);
    const Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("generate_synthetic: degenerate Gaussian draw");
    // W = G L⁻ᵀ has (1/n) WᵀW = I.
    DenseRows w = llt.matrixU().solve<Eigen::OnTheRight>(g);
    const Matrix v = detail::random_orthogonal(p, rng);
    const Vector s = detail::geometric_ladder(p, o.conditionTarget, o.meanRowNormSq);
    DenseRows a = w * (s.asDiagonal() * v.transpose());

    // Margins are W diag(s) Vᵀx, so the Gram eigenbasis is V with eigenvalues s².
    Vector coeff = o.balancedSignal ? Vector(direction.cwiseQuotient(s)) : Vector(v.transpose() * direction);
    const double spread = std::sqrt((coeff.array() * s.array()).square().sum());
    if (spread > 0.0) coeff *= o.signalScale / spread;
    const Vector planted = v * coeff;
    const Vector margins = a * planted;
    Vector b = detail::draw_labels(margins, o.family, o.ridgeNoise, rng);
    Dataset ds(std::move(a), std::move(b));
    const double cond = gram_condition(ds);
    return {std::move(ds), planted, cond};
  }

  std::bernoulli_distribution keep(o.density);
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      if (keep(rng)) trips.emplace_back(i, j, normal(rng));
  SparseRows base(n, p);
  base.setFromTriplets(trips.begin(), trips.end());
  const Vector dummyLabels = Vector::Zero(n);

  auto scaled = [&](double t) {
    Vector c(p);
    for (Eigen::Index j = 0; j < p; ++j)
      c(j) = p > 1 ? std::pow(o.conditionTarget, -0.5 * t * static_cast<double>(j) / static_cast<double>(p - 1)) : 1.0;
    SparseRows a = base * c.asDiagonal();
    const double meanSq = a.squaredNorm() / static_cast<double>(n);
    if (meanSq > 0.0) a *= std::sqrt(o.meanRowNormSq / meanSq);
    return std::pair<SparseRows, Vector>(std::move(a), std::move(c));
  };
  auto condition_at = [&](double t) { return gram_condition(Dataset(scaled(t).first, dummyLabels)); };

  double lo = 0.0;
  double hi = 1.0;
  const double logTarget = std::log(o.conditionTarget);
  if (o.conditionTarget > 1.0) {
    while (std::log(condition_at(hi)) < logTarget && hi < 64.0) hi *= 2.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double c = std::log(condition_at(mid));
      if (std::abs(c - logTarget) <= 0.5 * std::log(2.0)) {
        lo = hi = mid;
        break;
      }
      (c < logTarget ? lo : hi) = mid;
    }
  }
  const double t = o.conditionTarget > 1.0 ? 0.5 * (lo + hi) : 0.0;
  auto [a, c] = scaled(t);
  Vector planted = o.balancedSignal ? Vector(direction.cwiseQuotient(c)) : direction;
  const double spread = std::sqrt((a * planted).squaredNorm() / static_cast<double>(n));
  if (spread > 0.0) planted *= o.signalScale / spread;
  const Vector margins = a * planted;
  Vector b = detail::draw_labels(margins, o.family, o.ridgeNoise, rng);
  Dataset ds(std::move(a), std::move(b));
  const double cond = gram_condition(ds);
  return {std::move(ds), std::move(planted), cond};
}

enum class FileFormat { Svmlight, Csv };

inline FileFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".csv") return FileFormat::Csv;
  return FileFormat::Svmlight;
}

namespace detail {

inline double parse_number(const std::string& token, std::size_t line) {
  if (token.empty()) throw ParseError("empty numeric field", line);
  const char* begin = token.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + token.size() || !std::isfinite(v)) throw ParseError("bad number '" + token + "'", line);
  return v;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// svmlight: "label idx:value ..." with 1-based indices; '#' starts a comment.
/// A leading "# features: p" line fixes p when trailing columns are all zero.
inline Dataset parse_svmlight(std::istream& in) {
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> labels;
  std::size_t declared = 0;
  std::size_t maxIndex = 0;
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    const auto hash = raw.find('#');
    if (hash != std::string::npos) {
      const std::string comment = detail::trim(raw.substr(hash + 1));
      if (comment.rfind("features:", 0) == 0)
        declared = static_cast<std::size_t>(detail::parse_number(detail::trim(comment.substr(9)), line));
      raw = raw.substr(0, hash);
    }
    std::istringstream tokens(raw);
    std::string tok;
    if (!(tokens >> tok)) continue;
    const auto row = static_cast<Eigen::Index>(labels.size());
    labels.push_back(detail::parse_number(tok, line));
    std::size_t previous = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("expected index:value, got '" + tok + "'", line);
      const std::string key = tok.substr(0, colon);
      if (key == "qid") continue;
      const double idx = detail::parse_number(key, line);
      if (idx < 1.0 || idx != std::floor(idx)) throw ParseError("feature index must be a positive integer", line);
      const auto j = static_cast<std::size_t>(idx);
      if (j <= previous) throw ParseError("feature indices must be strictly increasing", line);
      previous = j;
      maxIndex = std::max(maxIndex, j);
      const double v = detail::parse_number(tok.substr(colon + 1), line);
      if (v != 0.0) trips.emplace_back(row, static_cast<Eigen::Index>(j - 1), v);
    }
  }
  if (labels.empty()) throw ParseError("no data rows", 0);
  const std::size_t p = std::max(declared, maxIndex);
  if (p == 0) throw ParseError("no features", 0);
  SparseRows a(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(p));
  a.setFromTriplets(trips.begin(), trips.end());
  return Dataset(std::move(a), Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(labels.size())));
}

/// CSV: "b,a_1,...,a_p" per line, no header; '#' lines are skipped.
inline Dataset parse_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    raw = detail::trim(raw);
    if (raw.empty() || raw[0] == '#') continue;
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = raw.find(',', start);
      values.push_back(detail::parse_number(detail::trim(raw.substr(start, comma - start)), line));
      ++count;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (count < 2) throw ParseError("need a label and at least one feature", line);
    if (width == 0) width = count;
    if (count != width)
      throw ParseError("expected " + std::to_string(width) + " fields, got " + std::to_string(count), line);
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", 0);
  DenseRows a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width - 1));
  Vector b(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    b(static_cast<Eigen::Index>(i)) = values[i * width];
    for (std::size_t j = 1; j < width; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = values[i * width + j];
  }
  return Dataset(std::move(a), std::move(b));
}

inline Dataset load_dataset(const std::string& path, FileFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return format == FileFormat::Csv ? parse_csv(in) : parse_svmlight(in);
}

inline Dataset load_dataset(const std::string& path) { return load_dataset(path, format_from_path(path)); }

inline void write_svmlight(std::ostream& out, const Dataset& d) {
  out << "# features: " << d.p() << '\n';
  Vector row;
  for (std::size_t i = 0; i < d.n(); ++i) {
    out << detail::format_double(d.label(i));
    row = d.row(i);
    for (Eigen::Index j = 0; j < row.size(); ++j)
      if (row(j) != 0.0) out << ' ' << (j + 1) << ':' << detail::format_double(row(j));
    out << '\n';
  }
}

inline void write_csv(std::ostream& out, const Dataset& d) {
  Vector row;
  for (std::size_t i = 0; i < d.n(); ++i) {
    out << detail::format_double(d.label(i));
    row = d.row(i);
    for (Eigen::Index j = 0; j < row.size(); ++j) out << ',' << detail::format_double(row(j));
    out << '\n';
  }
}

inline void write_dataset(const std::string& path, const Dataset& d, FileFormat format) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  if (format == FileFormat::Csv) write_csv(out, d);
  else write_svmlight(out, d);
  if (!out) throw Error("write to '" + path + "' failed");
}

inline void write_dataset(const std::string& path, const Dataset& d) { write_dataset(path, d, format_from_path(path)); }

}  // namespace ssn
