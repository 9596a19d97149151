#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drnets/drscores.hpp"
#include "drnets/estimators.hpp"
#include "json.hpp"

namespace drnets::simlab {

enum class DgpKind {
  cate_linear,
  cate_sparse_smooth,
  cate_rough_outcome,
  dte_linear,
  dte_sparse_smooth,
  cde_binary
};

std::string to_string(DgpKind kind);
/// Throws ConfigError on an unknown name.
DgpKind dgp_kind_from_string(const std::string& name);
bool is_cate_kind(DgpKind kind);

struct DgpConfig {
  DgpKind kind = DgpKind::cate_linear;
  std::size_t d = 5;   // CATE covariate dimension
  std::size_t d1 = 5;  // first-stage covariates (sequential kinds)
  std::size_t d2 = 5;  // second-stage covariates
  std::size_t q = 2;   // active coordinates: the first q of each block
  double noise_sd = 1.0;
  std::uint64_t coef_seed = 0;
  double propensity_offset = 0.0;
  double propensity_strength = 1.5;
  double outcome_scale = 1.0;  // scale of the covariate part of the outcome
  double effect_scale = 1.0;   // scale of the heterogeneous CATE part
  double baseline = 0.0;       // outcome intercept
  double effect1 = 0.0;        // constant effect of T (CATE) or T1 (sequential)
  double effect2 = 0.0;        // constant effect of T2, or of M for cde_binary
  double rough_scale = 1.0;    // amplitude of the sawtooth part (cate_rough_outcome)
  int cde_t = 1;               // target path for cde_binary
  int cde_m = 1;

  /// Throws ConfigError when q exceeds a dimension or a scale is invalid.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep their defaults.
  static DgpConfig from_json(const nlohmann::json& j);
};

/// Coefficients and exact regression functions of one configured DGP.
class DgpModel {
 public:
  explicit DgpModel(const DgpConfig& config);

  const DgpConfig& config() const noexcept { return config_; }

  // CATE kinds.
  double pi(std::span<const double> s) const;
  double mu(int t, std::span<const double> s) const;
  double cate(std::span<const double> s) const;

  // Sequential kinds. pi1 = P(T1 = 1 | s1).
  double pi1(std::span<const double> s1) const;
  /// S2 given (s1, t1) and the uniform innovation u.
  void stage2(std::span<const double> s1, int t1, std::span<const double> u,
              std::span<double> s2) const;
  /// P(T2 = 1 | s2bar) for dte kinds, P(M = 1 | s2bar, T = t1) for cde_binary.
  double second_propensity(std::span<const double> s2bar, int t1) const;
  /// E{Y | s1, s2, path}; the noise is added by the generator.
  double outcome_mean(std::span<const double> s1, std::span<const double> s2, int first,
                      int second) const;

  /// Target path: (1, 1) for dte kinds, (cde_t, cde_m) for cde_binary.
  int target_first() const noexcept;
  int target_second() const noexcept;
  // Nuisances for the target path.
  double target_pi(std::span<const double> s1) const;
  double target_rho(std::span<const double> s2bar) const;
  double target_nu(std::span<const double> s2bar) const;
  double target_mu(std::span<const double> s1) const;

  /// Analytic estimand: ATE for CATE kinds, E{Y(target path)} otherwise.
  double theta() const;

  /// Bounded smooth perturbation directions used by the orthogonality study.
  double perturb_mu(int t, std::span<const double> s) const;
  double perturb_pi(std::span<const double> s) const;

 private:
  DgpConfig config_;
  std::vector<double> a_;      // propensity weights on the active set
  std::vector<double> b_;      // outcome weights
  std::vector<double> g_;      // effect weights (CATE) or T1 shift of S2
  std::vector<double> rough_;  // sawtooth weights over all d coordinates
  std::vector<double> c1_, c2_;         // second propensity weights on s1, s2
  std::vector<double> beta1_, beta2_;   // outcome weights on s1, s2
  std::vector<std::vector<double>> B_;  // d2 x d1 carry-over of S1 into S2
  double interaction_ = 0.0;
};

/// Exact nuisances and estimands of a DGP, plus the potential outcomes of the
/// rows that were generated with it.
struct GroundTruth {
  DgpConfig config;
  std::shared_ptr<const DgpModel> model;
  double theta = 0.0;        // analytic estimand (see DgpModel::theta)
  std::vector<double> y0;    // CATE kinds: Y(0) per row
  std::vector<double> y1;    // CATE kinds: Y(1) per row
  std::vector<double> y_target;  // sequential kinds: Y(target path) per row

  CateNuisance cate_nuisance(double clip = kDefaultPropensityClip) const;
  Predictor cate() const;
  SequentialNuisance sequential_nuisance(double clip = kDefaultPropensityClip) const;
};

GroundTruth make_truth(const DgpConfig& config);

struct CateSample {
  CateData data;
  GroundTruth truth;
};

struct DteSample {
  DteData data;
  GroundTruth truth;
};

/// Throws ConfigError for a sequential kind.
CateSample gen_cate(const DgpConfig& config, std::size_t n, std::uint64_t seed);
/// Throws ConfigError for a CATE kind. cde_binary stores M in both t2 and m.
DteSample gen_dte(const DgpConfig& config, std::size_t n, std::uint64_t seed);

struct OracleTheta {
  double theta = 0.0;
  double mc_se = 0.0;
};

/// Monte Carlo average of the target potential outcome (Y(1) - Y(0) for CATE
/// kinds) over n_mc fresh draws.
OracleTheta oracle_theta(const DgpConfig& config, std::size_t n_mc, std::uint64_t seed);

/// Nested Monte Carlo estimate of target_mu(s1): averages the target outcome
/// over draws of the second-stage innovation and noise.
double nested_mu(const DgpConfig& config, std::span<const double> s1, std::size_t draws,
                 std::uint64_t seed);

// Studies.

struct Moment {
  std::string name;  // "1" or "s<j>"
  double mean = 0.0;
  double se = 0.0;
};

struct OrthogonalityReport {
  double scale = 0.0;
  std::size_t n = 0;
  double mean_delta1 = 0.0;
  double se_delta1 = 0.0;
  double mean_delta2 = 0.0;
  double se_delta2 = 0.0;
  double mean_delta2_sq = 0.0;
  double mean_delta2_sq_half = 0.0;  // same draws, scale / 2
  double delta2_sq_ratio = 0.0;      // mean_delta2_sq / mean_delta2_sq_half
  double mean_abs_delta2_ratio = 0.0;
  std::vector<Moment> moments;  // delta1 * h(S) for h = 1 and each coordinate
  bool moments_pass = false;    // every moment within 4 SE of zero
  bool ratio_pass = false;      // delta2_sq_ratio in [3, 5]

  nlohmann::json to_json() const;
};

OrthogonalityReport orthogonality_study(const DgpConfig& config, double perturbation_scale,
                                        std::size_t n, std::uint64_t seed);

struct EstimatorChoice {
  std::string estimand = "dte";  // ate, dte or cde
  LearnerSpec learners;
  std::size_t K = 5;

  nlohmann::json to_json() const;
};

struct CoverageReport {
  double coverage = 0.0;
  double mean_ci_width = 0.0;
  double theta = 0.0;
  std::size_t reps = 0;
  std::size_t n = 0;
  double alpha = 0.05;
  std::vector<double> estimates;
  std::vector<double> sigmas;

  nlohmann::json to_json() const;
};

CoverageReport coverage_study(const DgpConfig& config, const EstimatorChoice& estimator,
                              std::size_t reps, std::size_t n, double alpha, std::uint64_t seed);

struct RateReport {
  std::vector<std::size_t> n_grid;
  std::vector<double> per_n_mse;
  std::vector<std::vector<double>> mse;  // [n index][rep]
  double slope = 0.0;

  nlohmann::json to_json() const;
};

/// Test-grid MSE of the CATE estimate against the truth at each n.
RateReport rate_slope_study(const DgpConfig& config, const LearnerSpec& learners,
                            const std::vector<std::size_t>& n_grid, std::size_t reps,
                            std::uint64_t seed);

enum class Misspec { mu_wrong, pi_wrong, both_wrong };
std::string to_string(Misspec m);
Misspec misspec_from_string(const std::string& name);

struct RobustnessArm {
  Misspec misspec = Misspec::mu_wrong;
  std::vector<std::vector<double>> mse;  // [n index][rep]
  std::vector<double> mean_mse;
  double fraction_decreasing = 0.0;  // reps with mse(largest n) < mse(smallest n)
  double mean_ratio = 0.0;           // mean_mse(largest) / mean_mse(smallest)
  bool pass = false;
};

struct RobustnessReport {
  std::vector<std::size_t> n_grid;
  std::vector<RobustnessArm> arms;

  bool pass() const;
  nlohmann::json to_json() const;
};

/// Replaces the designated nuisance learners with constant-function learners;
/// every arm sees the same datasets.
RobustnessReport double_robustness_study(const DgpConfig& config, const LearnerSpec& learners,
                                         const std::vector<Misspec>& arms,
                                         const std::vector<std::size_t>& n_grid,
                                         std::size_t reps, std::uint64_t seed);

/// Thresholds applied by the studies.
inline constexpr double kRobustFraction = 0.8;
inline constexpr double kBothWrongRatio = 0.5;
inline constexpr double kMomentSe = 4.0;

/// Acceptance band for the empirical coverage of a level 1 - alpha interval:
/// +-0.03 at alpha = 0.05, +-0.06 at alpha = 0.5, three binomial standard
/// errors at `reps` otherwise.
std::pair<double, double> coverage_band(double alpha, std::size_t reps);

/// Default designs of the diagnostic studies.
namespace presets {
inline constexpr double kOrthogonalityScale = 0.3;
inline constexpr std::size_t kOrthogonalityN = 100000;
inline constexpr std::size_t kCoverageN = 2000;
inline constexpr std::size_t kCoverageReps = 500;
inline constexpr std::size_t kRateReps = 20;
inline constexpr std::size_t kRobustnessReps = 30;

DgpConfig orthogonality_dgp();
DgpConfig coverage_dgp();
EstimatorChoice coverage_estimator(const DgpConfig& dgp);
DgpConfig rate_dgp();
LearnerSpec rate_learners();
std::vector<std::size_t> rate_grid();
DgpConfig robustness_dgp();
LearnerSpec robustness_learners();
std::vector<std::size_t> robustness_grid();
}  // namespace presets

/// Random test points on [-1, 1]^d.
Matrix test_grid(std::size_t d, std::size_t points, std::uint64_t seed);

}  // namespace drnets::simlab
