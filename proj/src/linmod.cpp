#include "drnets/linmod.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drnets/error.hpp"
#include "drnets/rng.hpp"

namespace drnets::linmod {

std::string to_string(Link link) { return link == Link::identity ? "identity" : "logistic"; }

Link link_from_string(const std::string& name) {
  if (name == "identity") return Link::identity;
  if (name == "logistic") return Link::logistic;
  throw ConfigError("unknown link '" + name + "'");
}

namespace {

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double l1_norm(std::span<const double> b) {
  double s = 0.0;
  for (double v : b) s += std::abs(v);
  return s;
}

/// Positive-weight rows in column-major order with weights normalized to sum 1.
struct Problem {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> cols;  // cols[j * n + i]
  std::vector<double> y;
  std::vector<double> v;

  const double* col(std::size_t j) const { return cols.data() + j * n; }
};

Problem compact(const Matrix& X, std::span<const double> y, std::span<const double> w,
                const char* who) {
  if (y.size() != X.rows() || w.size() != X.rows())
    throw InputError(std::string(who) + ": X, y and weights must have the same number of rows");
  Problem P;
  P.p = X.cols();
  double total = 0.0;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
      throw InputError(std::string(who) + ": weights must be finite and nonnegative");
    if (w[i] > 0.0) {
      keep.push_back(i);
      total += w[i];
    }
  }
  if (keep.empty() || !(total > 0.0))
    throw EmptySubgroupError(std::string(who) + ": every weight is zero");
  P.n = keep.size();
  P.cols.resize(P.n * P.p);
  P.y.resize(P.n);
  P.v.resize(P.n);
  for (std::size_t k = 0; k < P.n; ++k) {
    const std::size_t i = keep[k];
    P.y[k] = y[i];
    P.v[k] = w[i] / total;
    if (!std::isfinite(y[i])) throw InputError(std::string(who) + ": non-finite response");
    for (std::size_t j = 0; j < P.p; ++j) {
      const double x = X(i, j);
      if (!std::isfinite(x)) throw InputError(std::string(who) + ": non-finite covariate");
      P.cols[j * P.n + k] = x;
    }
  }
  return P;
}

void check_warm_start(const FitOptions& o, std::size_t p, Link link) {
  if (o.warm_start == nullptr) return;
  if (o.warm_start->coefficients.size() != p || o.warm_start->link != link)
    throw InputError("warm start model does not match the problem");
}

void assert_kkt(const LinearModel& m, const Matrix& X, std::span<const double> y,
                std::span<const double> w, const char* who) {
  const double v = kkt_violation(m, X, y, w);
  if (!(v <= kKktTolerance))
    throw Error(std::string(who) + ": KKT conditions violated by " + std::to_string(v) +
                " after the iteration limit");
}

/// Largest eigenvalue of the weighted Gram matrix of (1, x) by power iteration.
double gram_top_eigenvalue(const Problem& P) {
  const std::size_t q = P.p + 1;
  std::vector<double> G(q * q, 0.0);
  auto z = [&](std::size_t j, std::size_t i) { return j == 0 ? 1.0 : P.col(j - 1)[i]; };
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t b = a; b < q; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < P.n; ++i) s += P.v[i] * z(a, i) * z(b, i);
      G[a * q + b] = G[b * q + a] = s;
    }
  std::vector<double> x(q, 1.0), nx(q);
  double eig = 0.0;
  for (int it = 0; it < 500; ++it) {
    for (std::size_t a = 0; a < q; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < q; ++b) s += G[a * q + b] * x[b];
      nx[a] = s;
    }
    const double norm = std::sqrt(std::inner_product(nx.begin(), nx.end(), nx.begin(), 0.0));
    if (norm == 0.0) return 0.0;
    for (std::size_t a = 0; a < q; ++a) x[a] = nx[a] / norm;
    if (std::abs(norm - eig) <= 1e-12 * norm) {
      eig = norm;
      break;
    }
    eig = norm;
  }
  return eig;
}

}  // namespace

double LinearModel::linear_predictor(std::span<const double> x) const {
  if (x.size() != coefficients.size()) throw InputError("LinearModel: dimension mismatch");
  double u = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) u += coefficients[j] * x[j];
  return u;
}

double LinearModel::predict_probability(std::span<const double> x) const {
  return std::clamp(sigmoid(linear_predictor(x)), kProbabilityClip, 1.0 - kProbabilityClip);
}

double LinearModel::predict(std::span<const double> x) const {
  return link == Link::identity ? linear_predictor(x) : predict_probability(x);
}

nlohmann::json LinearModel::to_json() const {
  return {{"type", "linear"},
          {"coefficients", coefficients},
          {"intercept", intercept},
          {"link", to_string(link)},
          {"lambda", lambda}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  if (j.value("type", std::string("linear")) != "linear")
    throw InputError("not a linear model document");
  LinearModel m;
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  m.intercept = j.at("intercept").get<double>();
  m.link = link_from_string(j.at("link").get<std::string>());
  m.lambda = j.at("lambda").get<double>();
  return m;
}

double penalized_objective(const LinearModel& m, const Matrix& X, std::span<const double> y,
                           std::span<const double> w) {
  double total = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    if (w[i] == 0.0) continue;
    const double u = m.linear_predictor(X.row(i));
    const double loss = m.link == Link::identity ? (y[i] - u) * (y[i] - u) : softplus(u) - y[i] * u;
    acc += w[i] * loss;
    total += w[i];
  }
  return acc / total + m.lambda * l1_norm(m.coefficients);
}

double kkt_violation(const LinearModel& m, const Matrix& X, std::span<const double> y,
                     std::span<const double> w) {
  const std::size_t p = X.cols();
  std::vector<double> g(p, 0.0);
  double g0 = 0.0, total = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) total += w[i];
  for (std::size_t i = 0; i < X.rows(); ++i) {
    if (w[i] == 0.0) continue;
    const double u = m.linear_predictor(X.row(i));
    const double e = m.link == Link::identity ? -2.0 * (y[i] - u) : sigmoid(u) - y[i];
    const double c = w[i] / total * e;
    g0 += c;
    for (std::size_t j = 0; j < p; ++j) g[j] += c * X(i, j);
  }
  double worst = std::abs(g0);
  for (std::size_t j = 0; j < p; ++j) {
    const double b = m.coefficients[j];
    const double v = b == 0.0 ? std::max(0.0, std::abs(g[j]) - m.lambda)
                              : std::abs(g[j] + m.lambda * (b > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

LinearModel lasso_fit(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                      double lambda, const FitOptions& options) {
  if (!(lambda >= 0.0)) throw ConfigError("lasso_fit: lambda must be >= 0");
  const Problem P = compact(X, y, weights, "lasso_fit");
  check_warm_start(options, P.p, Link::identity);
  const std::size_t n = P.n, p = P.p;

  std::vector<double> a(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    const double* x = P.col(j);
    for (std::size_t i = 0; i < n; ++i) a[j] += P.v[i] * x[i] * x[i];
  }

  LinearModel m;
  m.link = Link::identity;
  m.lambda = lambda;
  m.coefficients.assign(p, 0.0);
  if (options.warm_start != nullptr) {
    m.coefficients = options.warm_start->coefficients;
    m.intercept = options.warm_start->intercept;
  }
  std::vector<double> r(P.y);
  for (std::size_t i = 0; i < n; ++i) r[i] -= m.intercept;
  for (std::size_t j = 0; j < p; ++j) {
    if (m.coefficients[j] == 0.0) continue;
    const double* x = P.col(j);
    for (std::size_t i = 0; i < n; ++i) r[i] -= m.coefficients[j] * x[i];
  }

  auto objective = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += P.v[i] * r[i] * r[i];
    return s + lambda * l1_norm(m.coefficients);
  };

  const double half_lambda = 0.5 * lambda;
  for (int sweep = 0; sweep < options.max_iterations; ++sweep) {
    double d0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d0 += P.v[i] * r[i];
    m.intercept += d0;
    for (std::size_t i = 0; i < n; ++i) r[i] -= d0;
    double max_change = std::abs(d0);

    for (std::size_t j = 0; j < p; ++j) {
      const double* x = P.col(j);
      double& b = m.coefficients[j];
      if (a[j] == 0.0) {
        b = 0.0;
        continue;
      }
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += P.v[i] * x[i] * r[i];
      c += a[j] * b;
      const double nb = soft_threshold(c, half_lambda) / a[j];
      const double delta = nb - b;
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) r[i] -= delta * x[i];
        b = nb;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    if (options.objective_trace != nullptr) options.objective_trace->push_back(objective());
    if (max_change < options.tolerance) break;
  }
  assert_kkt(m, X, y, weights, "lasso_fit");
  return m;
}

LinearModel logistic_lasso_fit(const Matrix& X, std::span<const double> t,
                               std::span<const double> weights, double lambda,
                               const FitOptions& options) {
  if (!(lambda >= 0.0)) throw ConfigError("logistic_lasso_fit: lambda must be >= 0");
  for (double v : t)
    if (v != 0.0 && v != 1.0) throw InputError("logistic_lasso_fit: labels must be 0 or 1");
  const Problem P = compact(X, t, weights, "logistic_lasso_fit");
  check_warm_start(options, P.p, Link::logistic);
  const std::size_t n = P.n, p = P.p;

  double tbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) tbar += P.v[i] * P.y[i];
  bool has0 = false, has1 = false;
  for (double v : P.y) (v == 1.0 ? has1 : has0) = true;
  if (!has0 || !has1) throw SeparationError("logistic_lasso_fit: labels contain a single class");

  const double L = 0.25 * gram_top_eigenvalue(P) * (1.0 + 1e-9) + 1e-12;

  // Current iterate x (intercept + coefficients) and its linear predictor.
  std::vector<double> bx(p, 0.0), by(p), bz(p);
  double b0x = std::log(tbar / (1.0 - tbar));
  if (options.warm_start != nullptr) {
    bx = options.warm_start->coefficients;
    b0x = options.warm_start->intercept;
  }
  std::vector<double> ux(n, b0x), uy(n), uz(n), e(n), g(p);
  for (std::size_t j = 0; j < p; ++j) {
    if (bx[j] == 0.0) continue;
    const double* x = P.col(j);
    for (std::size_t i = 0; i < n; ++i) ux[i] += bx[j] * x[i];
  }
  auto smooth = [&](const std::vector<double>& u) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += P.v[i] * (softplus(u[i]) - P.y[i] * u[i]);
    return s;
  };
  auto gradient = [&](const std::vector<double>& u, double& g0) {
    g0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = P.v[i] * (sigmoid(u[i]) - P.y[i]);
      g0 += e[i];
    }
    for (std::size_t j = 0; j < p; ++j) {
      const double* x = P.col(j);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += e[i] * x[i];
      g[j] = s;
    }
  };
  auto kkt_at = [&](const std::vector<double>& u, const std::vector<double>& b) {
    double g0;
    gradient(u, g0);
    double worst = std::abs(g0);
    for (std::size_t j = 0; j < p; ++j) {
      const double v = b[j] == 0.0 ? std::max(0.0, std::abs(g[j]) - lambda)
                                   : std::abs(g[j] + lambda * (b[j] > 0.0 ? 1.0 : -1.0));
      worst = std::max(worst, v);
    }
    return worst;
  };

  double Fx = smooth(ux) + lambda * l1_norm(bx);
  by = bx;
  double b0y = b0x;
  uy = ux;
  double tk = 1.0;
  bool at_x = true;  // y coincides with x (no momentum)
  for (int it = 0; it < options.max_iterations; ++it) {
    double g0;
    gradient(uy, g0);
    const double b0z = b0y - g0 / L;
    for (std::size_t j = 0; j < p; ++j) bz[j] = soft_threshold(by[j] - g[j] / L, lambda / L);
    std::fill(uz.begin(), uz.end(), b0z);
    for (std::size_t j = 0; j < p; ++j) {
      if (bz[j] == 0.0) continue;
      const double* x = P.col(j);
      for (std::size_t i = 0; i < n; ++i) uz[i] += bz[j] * x[i];
    }
    const double Fz = smooth(uz) + lambda * l1_norm(bz);
    if (!(Fz <= Fx)) {
      if (at_x) break;  // a plain proximal step cannot improve: numerical optimum
      by = bx;
      b0y = b0x;
      uy = ux;
      tk = 1.0;
      at_x = true;
      continue;
    }
    const double decrease = Fx - Fz;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    const double mom = (tk - 1.0) / tn;
    for (std::size_t j = 0; j < p; ++j) by[j] = bz[j] + mom * (bz[j] - bx[j]);
    b0y = b0z + mom * (b0z - b0x);
    for (std::size_t i = 0; i < n; ++i) uy[i] = uz[i] + mom * (uz[i] - ux[i]);
    at_x = mom == 0.0;
    std::swap(bx, bz);
    std::swap(ux, uz);
    b0x = b0z;
    Fx = Fz;
    tk = tn;
    if (options.objective_trace != nullptr) options.objective_trace->push_back(Fx);
    if (decrease < options.objective_tolerance && kkt_at(ux, bx) <= 1e-2 * kKktTolerance) break;
  }

  LinearModel m;
  m.link = Link::logistic;
  m.lambda = lambda;
  m.coefficients = bx;
  m.intercept = b0x;
  assert_kkt(m, X, t, weights, "logistic_lasso_fit");
  return m;
}

double lambda_max(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                  Link link) {
  const Problem P = compact(X, y, weights, "lambda_max");
  double ybar = 0.0;
  for (std::size_t i = 0; i < P.n; ++i) ybar += P.v[i] * P.y[i];
  const double scale = link == Link::identity ? 2.0 : 1.0;
  double best = 0.0;
  for (std::size_t j = 0; j < P.p; ++j) {
    const double* x = P.col(j);
    double s = 0.0;
    for (std::size_t i = 0; i < P.n; ++i) s += P.v[i] * x[i] * (P.y[i] - ybar);
    best = std::max(best, scale * std::abs(s));
  }
  return best;
}

std::vector<double> lambda_grid(double lmax, int grid_size) {
  if (grid_size < 2) throw ConfigError("lambda_grid: grid_size must be >= 2");
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  const double lo = std::log(1e-3);
  for (int k = 0; k < grid_size; ++k)
    grid[static_cast<std::size_t>(k)] =
        lmax * std::exp(lo * static_cast<double>(k) / static_cast<double>(grid_size - 1));
  return grid;
}

double select_lambda(const Matrix& X, std::span<const double> y, std::span<const double> weights,
                     Link link, int grid_size, std::uint64_t seed) {
  if (grid_size < 2) throw ConfigError("select_lambda: grid_size must be >= 2");
  const std::size_t n = X.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n)));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> held(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());

  const Matrix Xt = X.take_rows(train);
  std::vector<double> yt, wt;
  for (std::size_t i : train) {
    yt.push_back(y[i]);
    wt.push_back(weights[i]);
  }
  double held_w = 0.0;
  for (std::size_t i : held) held_w += weights[i];
  if (!(held_w > 0.0)) throw EmptySubgroupError("select_lambda: held-out rows carry no weight");

  // Grid anchored on all provided rows so the candidates do not depend on the split.
  const auto grid = lambda_grid(lambda_max(X, y, weights, link), grid_size);
  double best_loss = std::numeric_limits<double>::infinity();
  double best_lambda = grid.front();
  LinearModel prev;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    FitOptions o;
    if (k > 0) o.warm_start = &prev;
    LinearModel m = link == Link::identity ? lasso_fit(Xt, yt, wt, grid[k], o)
                                           : logistic_lasso_fit(Xt, yt, wt, grid[k], o);
    double loss = 0.0;
    for (std::size_t i : held) {
      if (weights[i] == 0.0) continue;
      const double u = m.linear_predictor(X.row(i));
      loss += weights[i] *
              (link == Link::identity ? (y[i] - u) * (y[i] - u) : softplus(u) - y[i] * u);
    }
    loss /= held_w;
    if (loss < best_loss) {
      best_loss = loss;
      best_lambda = grid[k];
    }
    prev = std::move(m);
  }
  return best_lambda;
}

}  // namespace drnets::linmod
