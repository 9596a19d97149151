#include "drnets/drscores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drnets/error.hpp"
#include "drnets/rng.hpp"

namespace drnets {

std::vector<double> DteObservation::s2bar() const {
  std::vector<double> out(s1);
  out.insert(out.end(), s2.begin(), s2.end());
  return out;
}

namespace {

void check_binary(int v, const char* what) {
  if (v != 0 && v != 1) throw InputError(std::string(what) + " must be 0 or 1");
}

void check_finite(std::span<const double> xs, const char* what) {
  for (double v : xs)
    if (!std::isfinite(v)) throw InputError(std::string(what) + " contains a non-finite value");
}

}  // namespace

void CateData::push_back(const CateObservation& obs) {
  s.push_row(obs.s);
  t.push_back(obs.t);
  y.push_back(obs.y);
}

CateObservation CateData::at(std::size_t i) const {
  auto r = s.row(i);
  return {std::vector<double>(r.begin(), r.end()), t[i], y[i]};
}

CateData CateData::subset(std::span<const std::size_t> rows) const {
  CateData out;
  out.s = s.take_rows(rows);
  for (std::size_t i : rows) {
    out.t.push_back(t[i]);
    out.y.push_back(y[i]);
  }
  return out;
}

void CateData::validate() const {
  if (t.size() != s.rows() || y.size() != s.rows())
    throw InputError("CateData: column lengths differ");
  for (int v : t) check_binary(v, "t");
  check_finite(s.data(), "s");
  check_finite(y, "y");
}

void DteData::push_back(const DteObservation& obs) {
  if (size() > 0 && obs.m.has_value() != has_mediator())
    throw InputError("DteData: mediator present on some rows only");
  s1.push_row(obs.s1);
  s2.push_row(obs.s2);
  t1.push_back(obs.t1);
  t2.push_back(obs.t2);
  y.push_back(obs.y);
  if (obs.m) m.push_back(*obs.m);
}

DteObservation DteData::at(std::size_t i) const {
  DteObservation o;
  auto a = s1.row(i);
  auto b = s2.row(i);
  o.s1.assign(a.begin(), a.end());
  o.s2.assign(b.begin(), b.end());
  o.t1 = t1[i];
  o.t2 = t2[i];
  o.y = y[i];
  if (has_mediator()) o.m = m[i];
  return o;
}

DteData DteData::subset(std::span<const std::size_t> rows) const {
  DteData out;
  out.s1 = s1.take_rows(rows);
  out.s2 = s2.take_rows(rows);
  for (std::size_t i : rows) {
    out.t1.push_back(t1[i]);
    out.t2.push_back(t2[i]);
    out.y.push_back(y[i]);
    if (has_mediator()) out.m.push_back(m[i]);
  }
  return out;
}

Matrix DteData::s2bar() const {
  Matrix out(size(), s1.cols() + s2.cols());
  for (std::size_t i = 0; i < size(); ++i) {
    auto dst = out.row(i);
    auto a = s1.row(i);
    auto b = s2.row(i);
    std::copy(a.begin(), a.end(), dst.begin());
    std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
  }
  return out;
}

void DteData::validate() const {
  const std::size_t n = y.size();
  if (s1.rows() != n || s2.rows() != n || t1.size() != n || t2.size() != n ||
      (has_mediator() && m.size() != n))
    throw InputError("DteData: column lengths differ");
  for (int v : t1) check_binary(v, "t1");
  for (int v : t2) check_binary(v, "t2");
  check_finite(s1.data(), "s1");
  check_finite(s2.data(), "s2");
  check_finite(y, "y");
}

double clip_two_sided(double p, double clip) { return std::clamp(p, clip, 1.0 - clip); }

double clip_lower(double p, double clip) { return std::max(p, clip); }

CateNuisanceValues evaluate(const CateNuisance& n, std::span<const double> s) {
  return {n.pi(s), n.mu0(s), n.mu1(s)};
}

SequentialNuisanceValues evaluate(const SequentialNuisance& n, std::span<const double> s1,
                                  std::span<const double> s2bar) {
  return {n.pi(s1), n.rho(s2bar), n.nu(s2bar), n.mu(s1)};
}

std::vector<std::size_t> FoldPlan::fold(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_total; ++i)
    if (assignments[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::complement(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_total; ++i)
    if (assignments[i] != k) out.push_back(i);
  return out;
}

FoldPlan make_folds(std::size_t n, std::size_t K, std::uint64_t seed) {
  if (K < 2) throw ConfigError("make_folds: K must be >= 2");
  if (n < K) throw ConfigError("make_folds: need n >= K");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldPlan plan{n, K, seed, std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) plan.assignments[perm[i]] = i % K;
  return plan;
}

double cate_pseudo_outcome(int t, double y, const CateNuisanceValues& v, double clip) {
  const double pi = clip_two_sided(v.pi, clip);
  return v.mu1 + t * (y - v.mu1) / pi - v.mu0 - (1 - t) * (y - v.mu0) / (1.0 - pi);
}

double stage2_pseudo_outcome(int b, double y, double nu, double rho, double clip) {
  return nu + b * (y - nu) / clip_lower(rho, clip);
}

double sequential_score(int a, int b, double y, const SequentialNuisanceValues& v, double clip) {
  const double pi = clip_lower(v.pi, clip);
  const double rho = clip_lower(v.rho, clip);
  return v.mu + a * (v.nu - v.mu) / pi + a * b * (y - v.nu) / (pi * rho);
}

double cate_pseudo_outcome(const CateObservation& obs, const CateNuisance& nuis) {
  return cate_pseudo_outcome(obs.t, obs.y, evaluate(nuis, obs.s), nuis.propensity_clip);
}

double dte_stage2_pseudo_outcome(const DteObservation& obs, const SequentialNuisance& nuis) {
  const auto s2bar = obs.s2bar();
  return stage2_pseudo_outcome(obs.t2, obs.y, nuis.nu(s2bar), nuis.rho(s2bar),
                               nuis.propensity_clip);
}

double dte_score(const DteObservation& obs, const SequentialNuisance& nuis) {
  const auto s2bar = obs.s2bar();
  return sequential_score(obs.t1, obs.t2, obs.y, evaluate(nuis, obs.s1, s2bar),
                          nuis.propensity_clip);
}

double cde_score(const DteObservation& obs, int t, int m, const SequentialNuisance& nuis) {
  if (!obs.m) throw InputError("cde_score: observation has no mediator");
  const auto s2bar = obs.s2bar();
  const int a = obs.t1 == t ? 1 : 0;
  const int b = *obs.m == m ? 1 : 0;
  return sequential_score(a, b, obs.y, evaluate(nuis, obs.s1, s2bar), nuis.propensity_clip);
}

DeltaDecomposition delta_decomposition(int t, double y, const CateNuisanceValues& hat,
                                       const CateNuisanceValues& truth, double clip) {
  const double ph = clip_two_sided(hat.pi, clip);
  const double p0 = clip_two_sided(truth.pi, clip);
  const double T = t;
  const double e1 = hat.mu1 - truth.mu1;
  const double e0 = hat.mu0 - truth.mu0;
  const double w1 = T / ph - T / p0;
  const double w0 = (1.0 - T) / (1.0 - ph) - (1.0 - T) / (1.0 - p0);
  DeltaDecomposition d;
  d.d11 = (1.0 - T / p0) * e1;
  d.d12 = w1 * (y - truth.mu1);
  d.d13 = -(1.0 - (1.0 - T) / (1.0 - p0)) * e0;
  d.d14 = -w0 * (y - truth.mu0);
  // Signs chosen so that d1 + d2 reproduces the pseudo-outcome difference exactly.
  d.d21 = -w1 * e1;
  d.d22 = w0 * e0;
  return d;
}

DeltaDecomposition delta_decomposition(const CateObservation& obs, const CateNuisance& hat,
                                       const CateNuisance& truth) {
  return delta_decomposition(obs.t, obs.y, evaluate(hat, obs.s), evaluate(truth, obs.s),
                             hat.propensity_clip);
}

}  // namespace drnets
