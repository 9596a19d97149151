#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drnets/matrix.hpp"
#include "json.hpp"

namespace drnets::nnet {

enum class Loss { square, logistic };

std::string to_string(Loss loss);
Loss loss_from_string(const std::string& name);

struct MLPConfig {
  int depth = 2;   // hidden layers
  int width = 16;  // units per hidden layer
  // Bound on |f|. Unset: mlp_fit uses 2 * 1.1 * max|target|.
  std::optional<double> clamp_bound;
  Loss loss = Loss::square;
  int epochs = 100;
  int batch_size = 32;
  double step_size = 0.02;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Fully connected layer; `weights` is out x in, row-major.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> biases;
};

struct WeightedSample {
  std::vector<double> x;
  double target = 0.0;
  double weight = 1.0;
};

/// Gradient with the same layout as MLPModel::layers().
struct MLPGradient {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  double loss = 0.0;  // weighted mean loss of the batch

  std::vector<double> flatten() const;
};

/// ReLU multilayer perceptron with `depth` hidden layers of `width` units and a
/// scalar output clamped to [-clamp_bound, clamp_bound]. Immutable once built.
class MLPModel {
 public:
  const MLPConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  double clamp_bound() const noexcept { return clamp_bound_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const std::vector<double>& training_loss_trace() const noexcept { return trace_; }

  /// Unclamped network output.
  double raw_forward(std::span<const double> x) const;

  /// Clamped output. For logistic loss this is the logit.
  double predict(std::span<const double> x) const;

  /// predict() for every row of X.
  std::vector<double> predict_batch(const Matrix& X) const;

  std::size_t parameter_count() const noexcept;

  /// Parameters flattened layer by layer (weights then biases).
  std::vector<double> parameters() const;
  /// Copy of this model with the given flattened parameters.
  MLPModel with_parameters(std::span<const double> flat) const;

  nlohmann::json to_json() const;
  static MLPModel from_json(const nlohmann::json& j);

 private:
  friend MLPModel mlp_init(const MLPConfig&, std::size_t);
  friend MLPModel mlp_fit(std::span<const WeightedSample>, const MLPConfig&);
  friend class Trainer;

  MLPConfig config_;
  std::size_t input_dim_ = 0;
  double clamp_bound_ = 0.0;
  std::vector<Layer> layers_;
  std::vector<double> trace_;
};

/// Random initialization: zero biases, weights ~ N(0, 2 / fan_in) drawn from
/// config.seed. An unset clamp bound leaves the output unbounded.
MLPModel mlp_init(const MLPConfig& config, std::size_t input_dim);

double mlp_predict(const MLPModel& model, std::span<const double> x);

/// Pointwise loss of a prediction f against target y.
double pointwise_loss(Loss loss, double f, double y);

/// Weighted mean loss (1/sum w) sum w_i loss(f(x_i), y_i).
double mlp_loss(const MLPModel& model, std::span<const WeightedSample> batch);

/// Gradient of mlp_loss with respect to every weight and bias. The clamp passes
/// the gradient through strictly inside the bound and blocks it at or beyond.
MLPGradient mlp_loss_grad(const MLPModel& model, std::span<const WeightedSample> batch);

/// Weighted empirical risk minimization by mini-batch gradient descent.
/// Zero-weight samples are dropped before anything else, and the checkpoint
/// with the lowest validation loss (earliest on ties) is returned.
MLPModel mlp_fit(std::span<const WeightedSample> samples, const MLPConfig& config);

nlohmann::json to_json(const MLPConfig& config);
MLPConfig mlp_config_from_json(const nlohmann::json& j);

}  // namespace drnets::nnet
