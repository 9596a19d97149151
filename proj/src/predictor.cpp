#include "drnets/predictor.hpp"

#include <cmath>

#include "drnets/error.hpp"

namespace drnets {
namespace {

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

Predictor Predictor::constant(double value, Link link) { return {ConstantModel{value}, link}; }

Predictor Predictor::function(std::function<double(std::span<const double>)> fn, std::string name,
                              Link link) {
  return {FunctionModel{std::move(fn), std::move(name)}, link};
}

Predictor Predictor::average(Predictor first, Predictor second) {
  if (first.link() != second.link()) throw InputError("Predictor::average: link mismatch");
  const Link link = first.link();
  return {AverageModel{std::make_shared<const Predictor>(std::move(first)),
                       std::make_shared<const Predictor>(std::move(second))},
          link};
}

double Predictor::operator()(std::span<const double> x) const {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, nnet::MLPModel>) {
          const double f = m.predict(x);
          return link_ == Link::logistic ? logistic(f) : f;
        } else if constexpr (std::is_same_v<T, linmod::LinearModel>) {
          return m.predict(x);
        } else if constexpr (std::is_same_v<T, ConstantModel>) {
          return m.value;
        } else if constexpr (std::is_same_v<T, FunctionModel>) {
          return m.fn(x);
        } else {
          return 0.5 * ((*m.first)(x) + (*m.second)(x));
        }
      },
      model_);
}

void Predictor::predict_rows(const Matrix& X, std::size_t begin, std::size_t end,
                             std::span<double> out) const {
  if (const auto* mlp = std::get_if<nnet::MLPModel>(&model_)) {
    // One workspace for the whole range.
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    const auto f = mlp->predict_batch(X.take_rows(idx));
    for (std::size_t i = begin; i < end; ++i)
      out[i] = link_ == Link::logistic ? logistic(f[i - begin]) : f[i - begin];
    return;
  }
  if (const auto* avg = std::get_if<AverageModel>(&model_)) {
    std::vector<double> a(out.size()), b(out.size());
    avg->first->predict_rows(X, begin, end, a);
    avg->second->predict_rows(X, begin, end, b);
    for (std::size_t i = begin; i < end; ++i) out[i] = 0.5 * (a[i] + b[i]);
    return;
  }
  for (std::size_t i = begin; i < end; ++i) out[i] = (*this)(X.row(i));
}

nlohmann::json Predictor::to_json() const {
  nlohmann::json j = std::visit(
      [](const auto& m) -> nlohmann::json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, nnet::MLPModel> || std::is_same_v<T, linmod::LinearModel>) {
          return m.to_json();
        } else if constexpr (std::is_same_v<T, ConstantModel>) {
          return {{"type", "constant"}, {"value", m.value}};
        } else if constexpr (std::is_same_v<T, FunctionModel>) {
          return {{"type", "function"}, {"name", m.name}};
        } else {
          return {{"type", "average"}, {"first", m.first->to_json()}, {"second", m.second->to_json()}};
        }
      },
      model_);
  j["response_link"] = linmod::to_string(link_);
  return j;
}

}  // namespace drnets
