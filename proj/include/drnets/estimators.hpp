#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drnets/drscores.hpp"
#include "drnets/learners.hpp"
#include "json.hpp"

namespace drnets {

/// One learner per regression role. CATE/ATE use pi, mu0, mu1 (and
/// final_stage for the CATE regression); the sequential estimators use pi,
/// rho, nu and mu, where mu is the final regression of the doubly robust
/// second stage.
struct LearnerSpec {
  RoleSpec pi = RoleSpec::make_lasso();
  RoleSpec mu0 = RoleSpec::make_lasso();
  RoleSpec mu1 = RoleSpec::make_lasso();
  RoleSpec rho = RoleSpec::make_lasso();
  RoleSpec nu = RoleSpec::make_lasso();
  RoleSpec mu = RoleSpec::make_lasso();
  RoleSpec final_stage = RoleSpec::make_mlp({});
  double propensity_clip = kDefaultPropensityClip;

  /// Every role set to the same learner.
  static LearnerSpec uniform(const RoleSpec& role);

  nlohmann::json to_json() const;
  /// Missing roles keep their defaults.
  static LearnerSpec from_json(const nlohmann::json& j);
};

struct FoldSummary {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  double mean = 0.0;
};

struct EstimateReport {
  std::string estimand;
  double theta_hat = 0.0;
  double sigma_hat = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha = 0.05;
  std::size_t K = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<FoldSummary> per_fold;
  std::vector<double> scores;  // per observation, original order; not serialized
  FoldPlan plan;               // not serialized
  nlohmann::json learner_configs;

  nlohmann::json to_json() const;
};

/// z_{1 - alpha/2}.
double critical_value(double alpha);

/// Fills sigma_hat-derived CI bounds: theta_hat -/+ z sigma_hat / sqrt(n).
void attach_interval(EstimateReport& r);

EstimateReport estimate_ate(const CateData& data, const LearnerSpec& spec, std::size_t K,
                            double alpha, std::uint64_t seed);

/// Averaging estimator over the two halves.
struct CateEstimate {
  Predictor model_half1;  // final regression on half 1 with nuisances from half 2
  Predictor model_half2;
  CateNuisance nuisance_half1;  // fitted on half 2, evaluated on half 1
  CateNuisance nuisance_half2;
  std::vector<std::size_t> half1;
  std::vector<std::size_t> half2;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;

  double predict(std::span<const double> s) const;
  /// The averaged predictor as a single object.
  Predictor predictor() const;
  /// mu1 - mu0 from the nuisances, averaged over halves (plug-in comparison).
  double plug_in(std::span<const double> s) const;
  nlohmann::json to_json() const;
};

/// Algorithm with a seeded two-way split; reshuffles once with seed + 1 when a
/// half misses a treatment arm, then throws SplitError.
CateEstimate estimate_cate(const CateData& data, const LearnerSpec& spec, std::uint64_t seed);
CateEstimate estimate_cate(const CateData& data, const LearnerSpec& spec,
                           const nnet::MLPConfig& final_stage, std::uint64_t seed);

/// Same estimator on an explicit split. Fitting seeds are attached to the
/// subsamples, so exchanging `half1` and `half2` gives the same predictor.
CateEstimate estimate_cate_on_halves(const CateData& data, const LearnerSpec& spec,
                                     std::vector<std::size_t> half1,
                                     std::vector<std::size_t> half2, std::uint64_t seed);

/// Doubly robust second-stage estimate of mu(s1) = E{Y(a, b) | S1 = s1, A = 1}.
struct MuDrEstimate {
  Predictor model_half1;
  Predictor model_half2;
  std::vector<std::size_t> half1;
  std::vector<std::size_t> half2;

  double predict(std::span<const double> s1) const;
  Predictor predictor() const;
};

/// Path indicators a_i (first exposure) and b_i (second exposure).
MuDrEstimate estimate_mu_dr(const DteData& data, std::span<const int> a, std::span<const int> b,
                            const LearnerSpec& spec, std::uint64_t seed);
/// Path (1, 1): a = t1, b = t2; spec.mu is the final regression.
MuDrEstimate estimate_mu_dr(const DteData& data, const LearnerSpec& spec, std::uint64_t seed);
MuDrEstimate estimate_mu_dr(const DteData& data, const LearnerSpec& spec,
                            const nnet::MLPConfig& final_stage, std::uint64_t seed);

/// Cross-fitted sequential estimator for an arbitrary path (a, b).
EstimateReport estimate_sequential(const DteData& data, std::span<const int> a,
                                   std::span<const int> b, const LearnerSpec& spec, std::size_t K,
                                   double alpha, std::uint64_t seed, const std::string& estimand);

/// theta = E{Y(1, 1)}.
EstimateReport estimate_dte(const DteData& data, const LearnerSpec& spec, std::size_t K,
                            double alpha, std::uint64_t seed);

/// theta_{t,m} = E{Y(t, m)}; requires a mediator column.
EstimateReport estimate_cde(const DteData& data, int t, int m, const LearnerSpec& spec,
                            std::size_t K, double alpha, std::uint64_t seed);

}  // namespace drnets
