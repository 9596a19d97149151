#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "drnets/linmod.hpp"
#include "drnets/matrix.hpp"
#include "drnets/nnet.hpp"
#include "json.hpp"

namespace drnets {

using linmod::Link;

/// Predicts the same value everywhere (response scale).
struct ConstantModel {
  double value = 0.0;
};

/// Wraps a known function, e.g. a simulation truth injected as an oracle.
struct FunctionModel {
  std::function<double(std::span<const double>)> fn;
  std::string name = "function";
};

class Predictor;

/// Pointwise average of two fitted predictors.
struct AverageModel {
  std::shared_ptr<const Predictor> first;
  std::shared_ptr<const Predictor> second;
};

/// A fitted nuisance or target function evaluated on the response scale:
/// probabilities for the logistic link, conditional means for identity.
class Predictor {
 public:
  using Model = std::variant<nnet::MLPModel, linmod::LinearModel, ConstantModel, FunctionModel,
                             AverageModel>;

  Predictor() : model_(ConstantModel{}), link_(Link::identity) {}
  Predictor(Model model, Link link) : model_(std::move(model)), link_(link) {}

  static Predictor constant(double value, Link link = Link::identity);
  static Predictor function(std::function<double(std::span<const double>)> fn, std::string name,
                            Link link = Link::identity);
  static Predictor average(Predictor first, Predictor second);

  Link link() const noexcept { return link_; }
  const Model& model() const noexcept { return model_; }

  double operator()(std::span<const double> x) const;

  /// Writes predictions for rows [begin, end) of X into out[begin, end).
  void predict_rows(const Matrix& X, std::size_t begin, std::size_t end,
                    std::span<double> out) const;

  nlohmann::json to_json() const;

 private:
  Model model_;
  Link link_;
};

}  // namespace drnets
