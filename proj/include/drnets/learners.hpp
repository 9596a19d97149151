#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "drnets/matrix.hpp"
#include "drnets/nnet.hpp"
#include "drnets/predictor.hpp"
#include "json.hpp"

namespace drnets {

/// How one regression role is learned.
enum class Family {
  mlp,       // nnet::mlp_fit
  lasso,     // lasso / logistic lasso with a fixed or selected lambda
  constant,  // weighted mean of the targets; deliberately misspecified
  fixed      // a known function, e.g. the simulation truth
};

std::string to_string(Family f);
Family family_from_string(const std::string& name);

struct RoleSpec {
  Family family = Family::lasso;
  nnet::MLPConfig mlp;            // family == mlp; loss is set from the link
  std::optional<double> lambda;   // family == lasso; unset -> select_lambda
  int lambda_grid_size = 8;
  Predictor fixed;                // family == fixed

  static RoleSpec make_mlp(nnet::MLPConfig config);
  static RoleSpec make_lasso(std::optional<double> lambda = std::nullopt, int grid_size = 8);
  static RoleSpec make_constant();
  static RoleSpec make_fixed(Predictor p);

  nlohmann::json to_json() const;
  static RoleSpec from_json(const nlohmann::json& j);
};

/// Fits `spec` to (X, y) with sample weights. `link` selects square/identity or
/// logistic loss; `seed` drives every random choice made by the fit.
Predictor fit_role(const RoleSpec& spec, const Matrix& X, std::span<const double> y,
                   std::span<const double> weights, Link link, std::uint64_t seed);

}  // namespace drnets
