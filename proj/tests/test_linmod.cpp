#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "drnets/error.hpp"
#include "drnets/linmod.hpp"

using namespace drnets;
using namespace drnets::linmod;

namespace {

struct Problem {
  Matrix X;
  std::vector<double> y, w;
};

Problem random_problem(std::uint64_t seed, std::size_t n, std::size_t p, bool binary,
                       bool unit_weights = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0), wd(0.2, 2.0);
  Problem P{Matrix(n, p), {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    double lin = 0.3;
    for (std::size_t j = 0; j < p; ++j) {
      P.X(i, j) = u(rng);
      if (j < 3) lin += (j + 1.0) * P.X(i, j);
    }
    if (binary) {
      P.y.push_back(u(rng) * 0.5 + 0.5 < 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : 0.0);
    } else {
      P.y.push_back(lin + 0.5 * u(rng));
    }
    P.w.push_back(unit_weights ? 1.0 : wd(rng));
  }
  return P;
}

// Subgradient conditions evaluated directly from the data, slopes and intercept.
double kkt_oracle(const LinearModel& m, const Problem& P) {
  const std::size_t n = P.X.rows(), p = P.X.cols();
  double W = 0.0;
  for (double v : P.w) W += v;
  std::vector<double> g(p, 0.0);
  double g0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = m.intercept;
    for (std::size_t j = 0; j < p; ++j) u += m.coefficients[j] * P.X(i, j);
    const double r = m.link == Link::identity ? -2.0 * (P.y[i] - u)
                                              : 1.0 / (1.0 + std::exp(-u)) - P.y[i];
    g0 += P.w[i] * r / W;
    for (std::size_t j = 0; j < p; ++j) g[j] += P.w[i] * r * P.X(i, j) / W;
  }
  double worst = std::abs(g0);
  for (std::size_t j = 0; j < p; ++j) {
    const double b = m.coefficients[j];
    const double v = b == 0.0 ? std::max(0.0, std::abs(g[j]) - m.lambda)
                              : std::abs(g[j] + m.lambda * (b > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace

TEST(Lasso, OneDimensionalMatchesGridSearch) {
  Matrix X(2, 1);
  X(0, 0) = 1.0;
  X(1, 0) = -1.0;
  const std::vector<double> y{2.0, -2.0}, w{1.0, 1.0};
  const auto m = lasso_fit(X, y, w, 1.0);
  // Brute force over (b0, b) of mean (y - b0 - x b)^2 + |b|.
  double best = 1e300, arg = 0.0;
  for (int k = -40000; k <= 40000; ++k) {
    const double b = k * 1e-4;
    const double obj = 0.5 * ((2 - b) * (2 - b) + (-2 + b) * (-2 + b)) + std::abs(b);
    if (obj < best) {
      best = obj;
      arg = b;
    }
  }
  EXPECT_NEAR(arg, 1.5, 1e-4);
  EXPECT_NEAR(m.coefficients[0], arg, 1e-4);
  EXPECT_NEAR(m.intercept, 0.0, 1e-12);
}

TEST(Lasso, LambdaZeroOnOrthogonalDesignIsLeastSquares) {
  // Columns are orthogonal and centered, so least squares is per-column.
  Matrix X(4, 2);
  const double c[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) X(i, j) = c[i][j];
  const std::vector<double> y{3.0, 1.0, 0.5, -2.0}, w(4, 1.0);
  const auto m = lasso_fit(X, y, w, 0.0);
  double b1 = 0, b2 = 0, ybar = 0;
  for (int i = 0; i < 4; ++i) {
    b1 += c[i][0] * y[i] / 4;
    b2 += c[i][1] * y[i] / 4;
    ybar += y[i] / 4;
  }
  EXPECT_NEAR(m.coefficients[0], b1, 1e-6);
  EXPECT_NEAR(m.coefficients[1], b2, 1e-6);
  EXPECT_NEAR(m.intercept, ybar, 1e-6);
}

TEST(Lasso, LambdaMaxZeroesEverySlope) {
  const auto P = random_problem(1, 80, 6, false);
  // Null-fit gradient bound computed here from scratch.
  double W = 0, ybar = 0;
  for (std::size_t i = 0; i < P.y.size(); ++i) {
    W += P.w[i];
    ybar += P.w[i] * P.y[i];
  }
  ybar /= W;
  double bound = 0;
  for (std::size_t j = 0; j < P.X.cols(); ++j) {
    double s = 0;
    for (std::size_t i = 0; i < P.y.size(); ++i) s += P.w[i] * P.X(i, j) * (P.y[i] - ybar);
    bound = std::max(bound, 2.0 * std::abs(s) / W);
  }
  EXPECT_NEAR(lambda_max(P.X, P.y, P.w, Link::identity), bound, 1e-12);
  const auto m = lasso_fit(P.X, P.y, P.w, bound * (1 + 1e-9));
  for (double b : m.coefficients) EXPECT_EQ(b, 0.0);
  EXPECT_NEAR(m.intercept, ybar, 1e-10);
  const auto below = lasso_fit(P.X, P.y, P.w, 0.9 * bound);
  EXPECT_TRUE(std::any_of(below.coefficients.begin(), below.coefficients.end(),
                          [](double b) { return b != 0.0; }));
}

TEST(Lasso, KktHoldsOnRandomProblems) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto P = random_problem(100 + s, 60 + 5 * s, 1 + s % 8, false);
    const double lmax = lambda_max(P.X, P.y, P.w, Link::identity);
    for (double frac : {0.0, 0.01, 0.2, 0.7}) {
      const auto m = lasso_fit(P.X, P.y, P.w, frac * lmax);
      EXPECT_LE(kkt_oracle(m, P), 1e-6) << "seed " << s << " frac " << frac;
      EXPECT_NEAR(kkt_violation(m, P.X, P.y, P.w), kkt_oracle(m, P), 1e-9);
    }
  }
}

TEST(Lasso, ObjectiveNeverIncreases) {
  const auto P = random_problem(7, 120, 10, false);
  std::vector<double> trace;
  FitOptions o;
  o.objective_trace = &trace;
  lasso_fit(P.X, P.y, P.w, 0.05, o);
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1] + 1e-14);
}

TEST(Lasso, JointScalingOfTargetAndPenalty) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto P = random_problem(300 + s, 90, 5, false);
    const double lambda = 0.1 * lambda_max(P.X, P.y, P.w, Link::identity);
    const double c = 0.5 + s;
    const auto a = lasso_fit(P.X, P.y, P.w, lambda);
    for (double& v : P.y) v *= c;
    const auto b = lasso_fit(P.X, P.y, P.w, c * lambda);
    for (std::size_t j = 0; j < a.coefficients.size(); ++j)
      EXPECT_NEAR(b.coefficients[j], c * a.coefficients[j], 1e-8 * std::max(1.0, c));
    EXPECT_NEAR(b.intercept, c * a.intercept, 1e-8 * std::max(1.0, c));
  }
}

TEST(Lasso, ZeroWeightRowsIgnored) {
  auto P = random_problem(9, 50, 4, false);
  const auto base = lasso_fit(P.X, P.y, P.w, 0.02);
  Problem Q = P;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0, 100);
  for (int k = 0; k < 10; ++k) {
    std::vector<double> r{nd(rng), nd(rng), nd(rng), nd(rng)};
    Q.X.push_row(r);
    Q.y.push_back(nd(rng));
    Q.w.push_back(0.0);
  }
  const auto m = lasso_fit(Q.X, Q.y, Q.w, 0.02);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m.coefficients[j], base.coefficients[j], 1e-12);
}

TEST(Lasso, AllZeroWeightsThrow) {
  const auto P = random_problem(1, 10, 2, false);
  EXPECT_THROW(lasso_fit(P.X, P.y, std::vector<double>(10, 0.0), 0.1), EmptySubgroupError);
}

TEST(LogisticLasso, NullDesignGivesHalf) {
  Matrix X(10, 3, 0.0);
  std::vector<double> t, w(10, 1.0);
  for (int i = 0; i < 10; ++i) t.push_back(i % 2);
  const auto m = logistic_lasso_fit(X, t, w, 0.01);
  for (double b : m.coefficients) EXPECT_EQ(b, 0.0);
  EXPECT_NEAR(m.intercept, 0.0, 1e-6);
  EXPECT_NEAR(m.predict_probability(std::vector<double>{0, 0, 0}), 0.5, 1e-6);
}

TEST(LogisticLasso, HugePenaltyGivesInterceptOnlyModel) {
  const auto P = random_problem(2, 200, 5, true);
  double W = 0, tw = 0;
  for (std::size_t i = 0; i < P.y.size(); ++i) {
    W += P.w[i];
    tw += P.w[i] * P.y[i];
  }
  const double phat = tw / W;
  const auto m = logistic_lasso_fit(P.X, P.y, P.w, 1e6);
  for (double b : m.coefficients) EXPECT_EQ(b, 0.0);
  EXPECT_NEAR(m.intercept, std::log(phat / (1 - phat)), 1e-4);
}

TEST(LogisticLasso, KktHoldsOnRandomProblems) {
  for (std::uint64_t s = 0; s < 15; ++s) {
    const auto P = random_problem(500 + s, 100 + 10 * s, 1 + s % 6, true);
    const double lmax = lambda_max(P.X, P.y, P.w, Link::logistic);
    for (double frac : {0.02, 0.3, 0.8}) {
      const auto m = logistic_lasso_fit(P.X, P.y, P.w, frac * lmax);
      EXPECT_LE(kkt_oracle(m, P), 1e-6) << "seed " << s << " frac " << frac;
    }
  }
}

TEST(LogisticLasso, ObjectiveNeverIncreases) {
  const auto P = random_problem(8, 150, 6, true);
  std::vector<double> trace;
  FitOptions o;
  o.objective_trace = &trace;
  logistic_lasso_fit(P.X, P.y, P.w, 0.01, o);
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1] + 1e-14);
}

TEST(LogisticLasso, ProbabilitiesStayInsideUnitInterval) {
  auto P = random_problem(4, 100, 2, true);
  const auto m = logistic_lasso_fit(P.X, P.y, P.w, 0.0);
  for (double x : {-1e6, -50.0, 0.0, 50.0, 1e6}) {
    const double p = m.predict_probability(std::vector<double>{x, x});
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(LogisticLasso, SingleClassThrows) {
  auto P = random_problem(3, 30, 2, true);
  std::fill(P.y.begin(), P.y.end(), 1.0);
  EXPECT_THROW(logistic_lasso_fit(P.X, P.y, P.w, 0.1), SeparationError);
  // A class that only appears with zero weight does not count.
  P.y[0] = 0.0;
  P.w[0] = 0.0;
  EXPECT_THROW(logistic_lasso_fit(P.X, P.y, P.w, 0.1), SeparationError);
  EXPECT_THROW(logistic_lasso_fit(P.X, P.y, std::vector<double>(30, 0.0), 0.1), EmptySubgroupError);
}

TEST(LinearModelJson, RoundTrip) {
  const auto P = random_problem(5, 40, 3, true);
  const auto m = logistic_lasso_fit(P.X, P.y, P.w, 0.01);
  const auto back = LinearModel::from_json(m.to_json());
  EXPECT_EQ(back.to_json().dump(), m.to_json().dump());
  EXPECT_EQ(back.link, Link::logistic);
}

TEST(SelectLambda, PureNoisePicksHeavyShrinkage) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::uniform_real_distribution<double> u(-1, 1);
    std::normal_distribution<double> nd;
    const std::size_t n = 200, p = 10;
    Matrix X(n, p);
    std::vector<double> y, w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) X(i, j) = u(rng);
      y.push_back(nd(rng));
    }
    const int G = 8;
    const auto grid = lambda_grid(lambda_max(X, y, w, Link::identity), G);
    const double chosen = select_lambda(X, y, w, Link::identity, G, s);
    const auto pos = std::find(grid.begin(), grid.end(), chosen) - grid.begin();
    if (pos < G / 4) ++hits;
  }
  EXPECT_GE(hits, 40);
}

TEST(SelectLambda, ExactLinearSignalPicksLightShrinkage) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::mt19937_64 rng(2000 + s);
    std::uniform_real_distribution<double> u(-1, 1);
    const std::size_t n = 500, p = 10;
    Matrix X(n, p);
    std::vector<double> y, w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) X(i, j) = u(rng);
      y.push_back(2.0 * X(i, 0));
    }
    const int G = 8;
    const auto grid = lambda_grid(lambda_max(X, y, w, Link::identity), G);
    const double chosen = select_lambda(X, y, w, Link::identity, G, s);
    const auto pos = std::find(grid.begin(), grid.end(), chosen) - grid.begin();
    if (pos >= G / 2) ++hits;
  }
  EXPECT_GE(hits, 40);
}

TEST(SelectLambda, TwoPointGrid) {
  const auto P = random_problem(6, 100, 4, false);
  const auto grid = lambda_grid(lambda_max(P.X, P.y, P.w, Link::identity), 2);
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_NEAR(grid[1], grid[0] * 1e-3, 1e-12 * grid[0]);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const double l = select_lambda(P.X, P.y, P.w, Link::identity, 2, s);
    EXPECT_TRUE(l == grid[0] || l == grid[1]);
  }
  EXPECT_THROW(select_lambda(P.X, P.y, P.w, Link::identity, 1, 0), ConfigError);
}

TEST(SelectLambda, Deterministic) {
  const auto P = random_problem(6, 100, 4, true);
  EXPECT_EQ(select_lambda(P.X, P.y, P.w, Link::logistic, 6, 3),
            select_lambda(P.X, P.y, P.w, Link::logistic, 6, 3));
}
