#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "drnets/kernels.hpp"
#include "drnets/nnet.hpp"
#include "drnets/parallel.hpp"

using namespace drnets;

namespace {

struct Fixture {
  CateData cate;
  DteData dte;
  Matrix s2bar;
  std::vector<int> a, b;
};

Fixture make_fixture(std::size_t n) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  Fixture f;
  for (std::size_t i = 0; i < n; ++i) {
    f.cate.push_back({{u(rng), u(rng), u(rng)}, u(rng) > 0 ? 1 : 0, u(rng)});
    f.dte.push_back({{u(rng), u(rng)}, {u(rng)}, u(rng) > 0 ? 1 : 0, u(rng) > 0 ? 1 : 0, u(rng)});
  }
  f.s2bar = f.dte.s2bar();
  f.a = f.dte.t1;
  f.b = f.dte.t2;
  return f;
}

Predictor mlp_predictor(std::size_t dim, std::uint64_t seed, Link link) {
  nnet::MLPConfig c;
  c.seed = seed;
  c.clamp_bound = 3.0;
  auto m = nnet::mlp_init(c, dim);
  auto p = m.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += 0.01 * std::sin(double(i));
  return {m.with_parameters(p), link};
}

Predictor smooth(double shift, Link link = Link::identity) {
  return Predictor::function(
      [shift](std::span<const double> x) {
        double s = shift;
        for (double v : x) s += 0.3 * v;
        return 0.5 + 0.4 * std::tanh(s);
      },
      "smooth", link);
}

class KernelsAgree : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { set_worker_count(GetParam()); }
  void TearDown() override { set_worker_count(0); }
};

}  // namespace

TEST_P(KernelsAgree, Predict) {
  const auto f = make_fixture(1500);
  for (const auto& p : {mlp_predictor(3, 1, Link::identity), mlp_predictor(3, 2, Link::logistic),
                        smooth(0.1), Predictor::average(mlp_predictor(3, 3, Link::identity), smooth(0.2))})
    EXPECT_EQ(kernels::serial::predict(p, f.cate.s), kernels::parallel::predict(p, f.cate.s));
}

TEST_P(KernelsAgree, CatePseudoOutcomes) {
  const auto f = make_fixture(1500);
  const CateNuisance n{mlp_predictor(3, 4, Link::logistic), mlp_predictor(3, 5, Link::identity),
                       smooth(-0.3), 0.02};
  const auto s = kernels::serial::cate_pseudo_outcomes(f.cate, n);
  EXPECT_EQ(s, kernels::parallel::cate_pseudo_outcomes(f.cate, n));
  for (std::size_t i = 0; i < s.size(); i += 97) EXPECT_EQ(s[i], cate_pseudo_outcome(f.cate.at(i), n));
}

TEST_P(KernelsAgree, SequentialScoresAndStageTwo) {
  const auto f = make_fixture(1500);
  const kernels::SequentialBatch batch{f.dte.s1, f.s2bar, f.a, f.b, f.dte.y};
  const SequentialNuisance n{smooth(0.0), mlp_predictor(3, 6, Link::logistic),
                             mlp_predictor(3, 7, Link::identity), mlp_predictor(2, 8, Link::identity),
                             0.01};
  const auto s = kernels::serial::sequential_scores(batch, n);
  EXPECT_EQ(s, kernels::parallel::sequential_scores(batch, n));
  for (std::size_t i = 0; i < s.size(); i += 89) EXPECT_EQ(s[i], dte_score(f.dte.at(i), n));
  EXPECT_EQ(kernels::serial::stage2_pseudo_outcomes(batch, n.nu, n.rho, 0.01),
            kernels::parallel::stage2_pseudo_outcomes(batch, n.nu, n.rho, 0.01));
}

TEST_P(KernelsAgree, DeltaTerms) {
  const auto f = make_fixture(1500);
  const CateNuisance hat{smooth(0.3), smooth(-0.1), mlp_predictor(3, 9, Link::identity), 0.01};
  const CateNuisance truth{smooth(0.0), smooth(0.0), smooth(0.5), 0.01};
  const auto s = kernels::serial::delta_terms(f.cate, hat, truth);
  const auto p = kernels::parallel::delta_terms(f.cate, hat, truth);
  EXPECT_EQ(s.delta1, p.delta1);
  EXPECT_EQ(s.delta2, p.delta2);
}

INSTANTIATE_TEST_SUITE_P(Workers, KernelsAgree, ::testing::Values(1, 2, 4));

TEST(ParallelFor, LowestIndexErrorWins) {
  set_worker_count(4);
  try {
    parallel_for(100, [](std::size_t i) {
      if (i == 40 || i == 70) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "40");
  }
  set_worker_count(0);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  set_worker_count(3);
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  set_worker_count(0);
}
