#include "drnets/learners.hpp"

#include "drnets/error.hpp"
#include "drnets/linmod.hpp"
#include "drnets/rng.hpp"

namespace drnets {

std::string to_string(Family f) {
  switch (f) {
    case Family::mlp: return "mlp";
    case Family::lasso: return "lasso";
    case Family::constant: return "constant";
    case Family::fixed: return "fixed";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "mlp") return Family::mlp;
  if (name == "lasso") return Family::lasso;
  if (name == "constant") return Family::constant;
  if (name == "fixed") return Family::fixed;
  throw ConfigError("unknown learner family '" + name + "'");
}

RoleSpec RoleSpec::make_mlp(nnet::MLPConfig config) {
  RoleSpec r;
  r.family = Family::mlp;
  r.mlp = config;
  return r;
}

RoleSpec RoleSpec::make_lasso(std::optional<double> lambda, int grid_size) {
  RoleSpec r;
  r.family = Family::lasso;
  r.lambda = lambda;
  r.lambda_grid_size = grid_size;
  return r;
}

RoleSpec RoleSpec::make_constant() {
  RoleSpec r;
  r.family = Family::constant;
  return r;
}

RoleSpec RoleSpec::make_fixed(Predictor p) {
  RoleSpec r;
  r.family = Family::fixed;
  r.fixed = std::move(p);
  return r;
}

nlohmann::json RoleSpec::to_json() const {
  nlohmann::json j{{"family", drnets::to_string(family)}};
  switch (family) {
    case Family::mlp: j["mlp"] = nnet::to_json(mlp); break;
    case Family::lasso:
      j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json("selected");
      j["lambda_grid_size"] = lambda_grid_size;
      break;
    case Family::constant: break;
    case Family::fixed: j["fixed"] = fixed.to_json(); break;
  }
  return j;
}

RoleSpec RoleSpec::from_json(const nlohmann::json& j) {
  RoleSpec r;
  r.family = family_from_string(j.at("family").get<std::string>());
  if (r.family == Family::fixed) throw ConfigError("fixed learners cannot be read from JSON");
  if (j.contains("mlp")) r.mlp = nnet::mlp_config_from_json(j["mlp"]);
  if (j.contains("lambda") && j["lambda"].is_number()) r.lambda = j["lambda"].get<double>();
  r.lambda_grid_size = j.value("lambda_grid_size", r.lambda_grid_size);
  return r;
}

Predictor fit_role(const RoleSpec& spec, const Matrix& X, std::span<const double> y,
                   std::span<const double> weights, Link link, std::uint64_t seed) {
  if (y.size() != X.rows() || weights.size() != X.rows())
    throw InputError("fit_role: X, y and weights must have the same number of rows");
  switch (spec.family) {
    case Family::fixed: return spec.fixed;
    case Family::constant: {
      double acc = 0.0, total = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        acc += weights[i] * y[i];
        total += weights[i];
      }
      if (!(total > 0.0)) throw EmptySubgroupError("constant learner: every weight is zero");
      return Predictor::constant(acc / total, link);
    }
    case Family::lasso: {
      const double lambda =
          spec.lambda ? *spec.lambda
                      : linmod::select_lambda(X, y, weights, link, spec.lambda_grid_size, seed);
      auto m = link == Link::identity ? linmod::lasso_fit(X, y, weights, lambda)
                                      : linmod::logistic_lasso_fit(X, y, weights, lambda);
      return {std::move(m), link};
    }
    case Family::mlp: {
      nnet::MLPConfig config = spec.mlp;
      config.loss = link == Link::identity ? nnet::Loss::square : nnet::Loss::logistic;
      config.seed = derive_seed(seed, spec.mlp.seed);
      std::vector<nnet::WeightedSample> samples;
      samples.reserve(X.rows());
      for (std::size_t i = 0; i < X.rows(); ++i) {
        if (weights[i] == 0.0) continue;
        auto r = X.row(i);
        samples.push_back({std::vector<double>(r.begin(), r.end()), y[i], weights[i]});
      }
      return {nnet::mlp_fit(samples, config), link};
    }
  }
  throw ConfigError("fit_role: unknown family");
}

}  // namespace drnets
