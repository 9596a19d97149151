#include "drnets/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "drnets/error.hpp"
#include "drnets/rng.hpp"

namespace drnets::nnet {

std::string to_string(Loss loss) { return loss == Loss::square ? "square" : "logistic"; }

Loss loss_from_string(const std::string& name) {
  if (name == "square") return Loss::square;
  if (name == "logistic") return Loss::logistic;
  throw ConfigError("unknown loss '" + name + "'");
}

void MLPConfig::validate() const {
  if (depth < 1) throw ConfigError("MLPConfig: depth must be >= 1");
  if (width < 1) throw ConfigError("MLPConfig: width must be >= 1");
  if (clamp_bound && !(*clamp_bound > 0.0)) throw ConfigError("MLPConfig: clamp_bound must be > 0");
  if (epochs < 1) throw ConfigError("MLPConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("MLPConfig: batch_size must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("MLPConfig: step_size must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5))
    throw ConfigError("MLPConfig: validation_fraction must lie in [0, 0.5]");
}

std::vector<double> MLPGradient::flatten() const {
  std::vector<double> flat;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].begin(), weights[l].end());
    flat.insert(flat.end(), biases[l].begin(), biases[l].end());
  }
  return flat;
}

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

double relu(double v) { return v > 0.0 ? v : 0.0; }

double clamp_to(double v, double bound) { return std::clamp(v, -bound, bound); }

/// Derivative of the pointwise loss with respect to the prediction.
double loss_derivative(Loss loss, double f, double y) {
  if (loss == Loss::square) return -2.0 * (y - f);
  return 1.0 / (1.0 + std::exp(-f)) - y;
}

}  // namespace

double pointwise_loss(Loss loss, double f, double y) {
  if (loss == Loss::square) {
    const double r = y - f;
    return r * r;
  }
  // -y f + log(1 + e^f), evaluated stably
  const double softplus = f > 0.0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
  return -y * f + softplus;
}

/// Forward/backward workspace shared by prediction, gradients and training.
class Trainer {
 public:
  explicit Trainer(const MLPModel& m) : model_(m) {
    const std::size_t hidden = m.layers_.size() - 1;
    pre_.resize(hidden);
    act_.resize(hidden);
    for (std::size_t l = 0; l < hidden; ++l) {
      pre_[l].assign(m.layers_[l].out, 0.0);
      act_[l].assign(m.layers_[l].out, 0.0);
    }
    const std::size_t w = static_cast<std::size_t>(m.config_.width);
    delta_.assign(w, 0.0);
    delta_prev_.assign(w, 0.0);
  }

  double forward(std::span<const double> x) {
    const auto& layers = model_.layers_;
    std::span<const double> in = x;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const Layer& layer = layers[l];
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* w = layer.weights.data() + o * layer.in;
        double z = layer.biases[o];
        for (std::size_t i = 0; i < layer.in; ++i) z += w[i] * in[i];
        pre_[l][o] = z;
        act_[l][o] = relu(z);
      }
      in = act_[l];
    }
    const Layer& last = layers.back();
    double z = last.biases[0];
    for (std::size_t i = 0; i < last.in; ++i) z += last.weights[i] * in[i];
    return z;
  }

  /// Accumulates coef * d(raw output)/d(params) into grad, using the state left
  /// by the preceding forward(x).
  void backward(std::span<const double> x, double coef, MLPGradient& grad) {
    const auto& layers = model_.layers_;
    const std::size_t out_index = layers.size() - 1;
    const Layer& last = layers[out_index];
    const auto& top = act_[out_index - 1];
    for (std::size_t i = 0; i < last.in; ++i) {
      grad.weights[out_index][i] += coef * top[i];
      delta_[i] = pre_[out_index - 1][i] > 0.0 ? coef * last.weights[i] : 0.0;
    }
    grad.biases[out_index][0] += coef;

    for (std::size_t l = out_index; l-- > 0;) {
      const Layer& layer = layers[l];
      std::span<const double> in = l == 0 ? x : std::span<const double>(act_[l - 1]);
      auto& gw = grad.weights[l];
      auto& gb = grad.biases[l];
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta_[o];
        if (d == 0.0) continue;
        double* g = gw.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) g[i] += d * in[i];
        gb[o] += d;
      }
      if (l == 0) break;
      std::fill(delta_prev_.begin(), delta_prev_.begin() + layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta_[o];
        if (d == 0.0) continue;
        const double* w = layer.weights.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) delta_prev_[i] += d * w[i];
      }
      for (std::size_t i = 0; i < layer.in; ++i)
        delta_[i] = pre_[l - 1][i] > 0.0 ? delta_prev_[i] : 0.0;
    }
  }

  static MLPGradient zero_gradient(const MLPModel& m) {
    MLPGradient g;
    for (const Layer& layer : m.layers_) {
      g.weights.emplace_back(layer.weights.size(), 0.0);
      g.biases.emplace_back(layer.biases.size(), 0.0);
    }
    return g;
  }

  /// Gradient of the weighted mean loss over `batch` (indices into samples).
  template <class Index>
  void batch_gradient(std::span<const WeightedSample> samples, const Index& batch,
                      MLPGradient& grad) {
    for (auto& v : grad.weights) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : grad.biases) std::fill(v.begin(), v.end(), 0.0);
    double total_w = 0.0;
    for (std::size_t k : batch) total_w += samples[k].weight;
    grad.loss = 0.0;
    if (total_w <= 0.0) return;
    const double bound = model_.clamp_bound_;
    const Loss loss = model_.config_.loss;
    for (std::size_t k : batch) {
      const WeightedSample& s = samples[k];
      if (s.weight == 0.0) continue;
      const double raw = forward(s.x);
      const double f = clamp_to(raw, bound);
      const double w = s.weight / total_w;
      grad.loss += w * pointwise_loss(loss, f, s.target);
      if (std::abs(raw) >= bound) continue;  // saturated clamp blocks the gradient
      backward(s.x, w * loss_derivative(loss, f, s.target), grad);
    }
  }

 private:
  const MLPModel& model_;
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> act_;
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

double MLPModel::raw_forward(std::span<const double> x) const {
  if (x.size() != input_dim_)
    throw InputError("mlp_predict: expected input of length " + std::to_string(input_dim_) +
                     ", got " + std::to_string(x.size()));
  Trainer t(*this);
  return t.forward(x);
}

double MLPModel::predict(std::span<const double> x) const {
  return clamp_to(raw_forward(x), clamp_bound_);
}

std::vector<double> MLPModel::predict_batch(const Matrix& X) const {
  if (X.cols() != input_dim_) throw InputError("mlp_predict: dimension mismatch");
  Trainer t(*this);
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = clamp_to(t.forward(X.row(i)), clamp_bound_);
  return out;
}

std::size_t MLPModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weights.size() + l.biases.size();
  return n;
}

std::vector<double> MLPModel::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Layer& l : layers_) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.biases.begin(), l.biases.end());
  }
  return flat;
}

MLPModel MLPModel::with_parameters(std::span<const double> flat) const {
  if (flat.size() != parameter_count()) throw InputError("with_parameters: size mismatch");
  MLPModel m = *this;
  std::size_t at = 0;
  for (Layer& l : m.layers_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), l.weights.size(), l.weights.begin());
    at += l.weights.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), l.biases.size(), l.biases.begin());
    at += l.biases.size();
  }
  return m;
}

nlohmann::json to_json(const MLPConfig& c) {
  nlohmann::json j;
  j["depth"] = c.depth;
  j["width"] = c.width;
  j["clamp_bound"] = c.clamp_bound ? nlohmann::json(*c.clamp_bound) : nlohmann::json(nullptr);
  j["loss"] = to_string(c.loss);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["step_size"] = c.step_size;
  j["seed"] = c.seed;
  j["validation_fraction"] = c.validation_fraction;
  return j;
}

MLPConfig mlp_config_from_json(const nlohmann::json& j) {
  MLPConfig c;
  c.depth = j.value("depth", c.depth);
  c.width = j.value("width", c.width);
  if (j.contains("clamp_bound") && !j["clamp_bound"].is_null())
    c.clamp_bound = j["clamp_bound"].get<double>();
  if (j.contains("loss")) c.loss = loss_from_string(j["loss"].get<std::string>());
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.step_size = j.value("step_size", c.step_size);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.validate();
  return c;
}

nlohmann::json MLPModel::to_json() const {
  nlohmann::json j;
  j["type"] = "mlp";
  j["config"] = nnet::to_json(config_);
  j["input_dim"] = input_dim_;
  j["clamp_bound"] = std::isfinite(clamp_bound_) ? nlohmann::json(clamp_bound_)
                                                 : nlohmann::json(nullptr);
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (const Layer& l : layers_) {
    weights.push_back(l.weights);
    biases.push_back(l.biases);
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  j["training_loss_trace"] = trace_;
  return j;
}

MLPModel MLPModel::from_json(const nlohmann::json& j) {
  if (j.value("type", std::string("mlp")) != "mlp") throw InputError("not an mlp model document");
  MLPModel m = mlp_init(mlp_config_from_json(j.at("config")), j.at("input_dim").get<std::size_t>());
  m.clamp_bound_ = j.at("clamp_bound").is_null() ? std::numeric_limits<double>::infinity()
                                                 : j.at("clamp_bound").get<double>();
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != m.layers_.size() || biases.size() != m.layers_.size())
    throw InputError("mlp model document: layer count mismatch");
  for (std::size_t l = 0; l < m.layers_.size(); ++l) {
    auto w = weights[l].get<std::vector<double>>();
    auto b = biases[l].get<std::vector<double>>();
    if (w.size() != m.layers_[l].weights.size() || b.size() != m.layers_[l].biases.size())
      throw InputError("mlp model document: layer shape mismatch");
    m.layers_[l].weights = std::move(w);
    m.layers_[l].biases = std::move(b);
  }
  if (j.contains("training_loss_trace"))
    m.trace_ = j["training_loss_trace"].get<std::vector<double>>();
  return m;
}

MLPModel mlp_init(const MLPConfig& config, std::size_t input_dim) {
  config.validate();
  if (input_dim < 1) throw ConfigError("mlp_init: input_dim must be >= 1");
  MLPModel m;
  m.config_ = config;
  m.input_dim_ = input_dim;
  m.clamp_bound_ = config.clamp_bound.value_or(std::numeric_limits<double>::infinity());

  Rng rng = make_rng(config.seed, kInitStream);
  const auto width = static_cast<std::size_t>(config.width);
  std::size_t fan_in = input_dim;
  for (int l = 0; l <= config.depth; ++l) {
    const std::size_t out = l == config.depth ? 1 : width;
    Layer layer{fan_in, out, std::vector<double>(out * fan_in), std::vector<double>(out, 0.0)};
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& w : layer.weights) w = normal(rng);
    m.layers_.push_back(std::move(layer));
    fan_in = out;
  }
  return m;
}

double mlp_predict(const MLPModel& model, std::span<const double> x) { return model.predict(x); }

double mlp_loss(const MLPModel& model, std::span<const WeightedSample> batch) {
  double total_w = 0.0, acc = 0.0;
  for (const auto& s : batch) {
    if (s.weight == 0.0) continue;
    total_w += s.weight;
    acc += s.weight * pointwise_loss(model.config().loss, model.predict(s.x), s.target);
  }
  return total_w > 0.0 ? acc / total_w : 0.0;
}

MLPGradient mlp_loss_grad(const MLPModel& model, std::span<const WeightedSample> batch) {
  if (batch.empty()) throw InputError("mlp_loss_grad: empty batch");
  for (const auto& s : batch)
    if (s.x.size() != model.input_dim()) throw InputError("mlp_loss_grad: dimension mismatch");
  Trainer t(model);
  MLPGradient g = Trainer::zero_gradient(model);
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  t.batch_gradient(batch, all, g);
  return g;
}

MLPModel mlp_fit(std::span<const WeightedSample> samples, const MLPConfig& config) {
  config.validate();
  std::vector<WeightedSample> kept;
  kept.reserve(samples.size());
  double max_abs_target = 0.0;
  for (const auto& s : samples) {
    if (!(s.weight >= 0.0) || !std::isfinite(s.weight))
      throw InputError("mlp_fit: weights must be finite and nonnegative");
    if (!std::isfinite(s.target)) throw InputError("mlp_fit: non-finite target");
    for (double v : s.x)
      if (!std::isfinite(v)) throw InputError("mlp_fit: non-finite covariate");
    if (s.weight > 0.0) {
      kept.push_back(s);
      max_abs_target = std::max(max_abs_target, std::abs(s.target));
    }
  }
  if (kept.empty()) throw EmptySubgroupError("mlp_fit: every sample weight is zero");
  const std::size_t dim = kept.front().x.size();
  for (const auto& s : kept)
    if (s.x.size() != dim) throw InputError("mlp_fit: inconsistent covariate dimension");

  MLPConfig resolved = config;
  if (!resolved.clamp_bound) {
    const double bound = 2.0 * 1.1 * max_abs_target;
    resolved.clamp_bound = bound > 0.0 ? bound : 1.0;
  }
  MLPModel model = mlp_init(resolved, dim);

  // Seeded train/validation split.
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> train, valid;
  const auto n_valid = static_cast<std::size_t>(
      std::floor(resolved.validation_fraction * static_cast<double>(kept.size()) + 0.5));
  if (n_valid > 0 && n_valid < kept.size()) {
    Rng split_rng = make_rng(resolved.seed, kSplitStream);
    std::shuffle(order.begin(), order.end(), split_rng);
    valid.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_valid));
    train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_valid), order.end());
    std::sort(valid.begin(), valid.end());
    std::sort(train.begin(), train.end());
  } else {
    train = order;
  }

  Rng shuffle_rng = make_rng(resolved.seed, kShuffleStream);
  MLPGradient grad = Trainer::zero_gradient(model);
  const auto batch = static_cast<std::size_t>(resolved.batch_size);
  const double step = resolved.step_size;

  auto validation_loss = [&](const MLPModel& m) {
    Trainer t(m);
    double acc = 0.0, total = 0.0;
    for (std::size_t k : valid) {
      const auto& s = kept[k];
      acc += s.weight * pointwise_loss(m.config_.loss, clamp_to(t.forward(s.x), m.clamp_bound_),
                                       s.target);
      total += s.weight;
    }
    return acc / total;
  };

  std::optional<MLPModel> best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> chunk;
  chunk.reserve(batch);
  for (int epoch = 1; epoch <= resolved.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), shuffle_rng);
    Trainer trainer(model);
    double epoch_loss = 0.0, epoch_w = 0.0;
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t stop = std::min(train.size(), start + batch);
      chunk.assign(train.begin() + static_cast<std::ptrdiff_t>(start),
                   train.begin() + static_cast<std::ptrdiff_t>(stop));
      trainer.batch_gradient(std::span<const WeightedSample>(kept), chunk, grad);
      double bw = 0.0;
      for (std::size_t k : chunk) bw += kept[k].weight;
      epoch_loss += bw * grad.loss;
      epoch_w += bw;
      for (std::size_t l = 0; l < model.layers_.size(); ++l) {
        auto& w = model.layers_[l].weights;
        auto& b = model.layers_[l].biases;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * grad.weights[l][i];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * grad.biases[l][i];
      }
    }
    const double train_loss = epoch_loss / epoch_w;
    if (!std::isfinite(train_loss))
      throw DivergenceError("mlp_fit: non-finite loss at epoch " + std::to_string(epoch), epoch);
    model.trace_.push_back(train_loss);
    if (!valid.empty()) {
      const double vl = validation_loss(model);
      if (!std::isfinite(vl))
        throw DivergenceError("mlp_fit: non-finite validation loss at epoch " +
                                  std::to_string(epoch),
                              epoch);
      if (vl < best_loss) {
        best_loss = vl;
        best = model;
      }
    }
  }
  if (!best) return model;
  best->trace_ = model.trace_;
  return *best;
}

}  // namespace drnets::nnet
