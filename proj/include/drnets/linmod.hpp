#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drnets/matrix.hpp"
#include "json.hpp"

namespace drnets::linmod {

enum class Link { identity, logistic };

std::string to_string(Link link);
Link link_from_string(const std::string& name);

/// Probabilities returned by a logistic model are clipped to this margin.
inline constexpr double kProbabilityClip = 1e-6;
inline constexpr double kKktTolerance = 1e-6;

/// l1-fitted linear or logistic model with unpenalized intercept.
struct LinearModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  Link link = Link::identity;
  double lambda = 0.0;

  double linear_predictor(std::span<const double> x) const;
  /// Identity link: the linear predictor. Logistic link: the clipped probability.
  double predict(std::span<const double> x) const;
  double predict_probability(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
};

struct FitOptions {
  int max_iterations = 10000;      // sweeps (lasso) or proximal steps (logistic)
  double tolerance = 1e-8;         // max coordinate change (lasso)
  double objective_tolerance = 1e-10;  // objective decrease (logistic)
  const LinearModel* warm_start = nullptr;
  std::vector<double>* objective_trace = nullptr;  // objective after each sweep/step
};

/// Weighted lasso by cyclic coordinate descent with soft-thresholding on
///   (1/sum w) sum w_i (y_i - b0 - x_i'b)^2 + lambda ||b||_1.
/// Zero-weight rows are ignored. Throws EmptySubgroupError when sum w == 0.
LinearModel lasso_fit(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                      double lambda, const FitOptions& options = {});

/// Weighted l1-penalized logistic regression by accelerated proximal gradient
/// (restarted whenever the objective would increase, so accepted iterates never
/// increase it). Throws SeparationError when only one class carries weight.
LinearModel logistic_lasso_fit(const Matrix& X, std::span<const double> t,
                               std::span<const double> weights, double lambda,
                               const FitOptions& options = {});

/// Penalized objective of `model` on the data (weight-normalized).
double penalized_objective(const LinearModel& model, const Matrix& X, std::span<const double> y,
                           std::span<const double> weights);

/// Largest violation of the subgradient optimality conditions of `model`.
double kkt_violation(const LinearModel& model, const Matrix& X, std::span<const double> y,
                     std::span<const double> weights);

/// Smallest lambda for which the all-zero slope vector is optimal.
double lambda_max(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                  Link link);

/// Log-spaced grid from lambda_max down to lambda_max * 1e-3.
std::vector<double> lambda_grid(double lambda_max, int grid_size);

/// Chooses lambda by a seeded 80/20 split: fits the path on the 80% part and
/// returns the grid value with the smallest held-out loss (larger lambda on ties).
double select_lambda(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                     Link link, int grid_size, std::uint64_t seed);

}  // namespace drnets::linmod
