#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "drnets/matrix.hpp"
#include "drnets/predictor.hpp"

namespace drnets {

inline constexpr double kDefaultPropensityClip = 0.01;

/// One (S, T, Y) observation.
struct CateObservation {
  std::vector<double> s;
  int t = 0;
  double y = 0.0;
};

/// One (S1, T1, S2, T2, Y) observation; `m` is the mediator level for CDE data.
struct DteObservation {
  std::vector<double> s1;
  std::vector<double> s2;
  int t1 = 0;
  int t2 = 0;
  double y = 0.0;
  std::optional<int> m;

  /// Stage-two covariate (s1, s2).
  std::vector<double> s2bar() const;
};

/// Column-oriented CATE/ATE dataset.
struct CateData {
  Matrix s;
  std::vector<int> t;
  std::vector<double> y;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return s.cols(); }
  void push_back(const CateObservation& obs);
  CateObservation at(std::size_t i) const;
  CateData subset(std::span<const std::size_t> rows) const;
  /// Throws InputError on non-binary treatments or non-finite values.
  void validate() const;
};

/// Column-oriented DTE/CDE dataset.
struct DteData {
  Matrix s1;
  Matrix s2;
  std::vector<int> t1;
  std::vector<int> t2;
  std::vector<double> y;
  std::vector<int> m;  // empty unless a mediator was observed

  std::size_t size() const noexcept { return y.size(); }
  bool has_mediator() const noexcept { return !m.empty(); }
  void push_back(const DteObservation& obs);
  DteObservation at(std::size_t i) const;
  DteData subset(std::span<const std::size_t> rows) const;
  /// Row-wise concatenation (s1, s2).
  Matrix s2bar() const;
  void validate() const;
};

/// Clips a propensity into [clip, 1 - clip].
double clip_two_sided(double p, double clip);
/// Lower clip only: the sequential scores divide by p but never by 1 - p.
double clip_lower(double p, double clip);

/// Fitted nuisances for the CATE/ATE representations.
struct CateNuisance {
  Predictor pi;   // P(T = 1 | S)
  Predictor mu0;  // E(Y | S, T = 0)
  Predictor mu1;  // E(Y | S, T = 1)
  double propensity_clip = kDefaultPropensityClip;
};

/// Fitted nuisances for the sequential (DTE / CDE) representations; every
/// predictor refers to the target path, e.g. (1, 1) or (t, m).
struct SequentialNuisance {
  Predictor pi;   // P(A = 1 | S1)
  Predictor rho;  // P(B = 1 | S2bar, A = 1)
  Predictor nu;   // E(Y | S2bar, A = B = 1)
  Predictor mu;   // E(Y(path) | S1, A = 1)
  double propensity_clip = kDefaultPropensityClip;
};

/// Nuisance values already evaluated at one observation.
struct CateNuisanceValues {
  double pi = 0.5;
  double mu0 = 0.0;
  double mu1 = 0.0;
};

struct SequentialNuisanceValues {
  double pi = 0.5;
  double rho = 0.5;
  double nu = 0.0;
  double mu = 0.0;
};

CateNuisanceValues evaluate(const CateNuisance& n, std::span<const double> s);
SequentialNuisanceValues evaluate(const SequentialNuisance& n, std::span<const double> s1,
                                  std::span<const double> s2bar);

/// Cross-fitting partition of {0..n-1} into K folds.
struct FoldPlan {
  std::size_t n_total = 0;
  std::size_t K = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;

  std::vector<std::size_t> fold(std::size_t k) const;
  std::vector<std::size_t> complement(std::size_t k) const;
};

/// Seeded uniform shuffle followed by round-robin assignment, so fold sizes
/// differ by at most one. Throws ConfigError when n < K or K < 2.
FoldPlan make_folds(std::size_t n, std::size_t K, std::uint64_t seed);

// Score arithmetic on evaluated nuisances.

/// mu1 + t (y - mu1) / pi - mu0 - (1 - t)(y - mu0) / (1 - pi), pi clipped on both sides.
double cate_pseudo_outcome(int t, double y, const CateNuisanceValues& v, double clip);

/// nu + b (y - nu) / rho.
double stage2_pseudo_outcome(int b, double y, double nu, double rho, double clip);

/// mu + a (nu - mu) / pi + a b (y - nu) / (pi rho), the sequential doubly robust
/// score for a two-exposure path with indicators a (first) and b (second).
double sequential_score(int a, int b, double y, const SequentialNuisanceValues& v, double clip);

// Observation-level wrappers.

double cate_pseudo_outcome(const CateObservation& obs, const CateNuisance& nuis);
double dte_stage2_pseudo_outcome(const DteObservation& obs, const SequentialNuisance& nuis);
double dte_score(const DteObservation& obs, const SequentialNuisance& nuis);

/// Controlled direct effect score for target (t, m): indicators 1{T1 = t} and
/// 1{M = m}. Throws InputError when the observation has no mediator.
double cde_score(const DteObservation& obs, int t, int m, const SequentialNuisance& nuis);

/// The error of the estimated CATE pseudo-outcome split into a part with zero
/// conditional mean (delta1) and a product-of-errors part (delta2).
struct DeltaDecomposition {
  double d11 = 0.0, d12 = 0.0, d13 = 0.0, d14 = 0.0;
  double d21 = 0.0, d22 = 0.0;
  double delta1() const noexcept { return d11 + d12 + d13 + d14; }
  double delta2() const noexcept { return d21 + d22; }
};

/// Uses the observed outcome for Y(T): every term carrying Y(1) is multiplied by
/// T and every term carrying Y(0) by 1 - T.
DeltaDecomposition delta_decomposition(int t, double y, const CateNuisanceValues& hat,
                                       const CateNuisanceValues& truth, double clip);
DeltaDecomposition delta_decomposition(const CateObservation& obs, const CateNuisance& hat,
                                       const CateNuisance& truth);

}  // namespace drnets
