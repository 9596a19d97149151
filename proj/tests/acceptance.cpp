// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failures. Pass a list of criterion numbers to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "drnets/cli.hpp"
#include "drnets/drscores.hpp"
#include "drnets/estimators.hpp"
#include "drnets/linmod.hpp"
#include "drnets/nnet.hpp"
#include "drnets/parallel.hpp"
#include "drnets/simlab.hpp"

using namespace drnets;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kGradRelTol = 1e-5;
constexpr double kFdStep = 1e-6;
constexpr double kKinkGap = 1e-4;
constexpr int kGradPairs = 20;
constexpr double kGradSeconds = 10.0;
constexpr double kKktTol = 1e-6;
constexpr double kOneDimTol = 1e-4;
constexpr double kDecompTol = 1e-10;
constexpr int kDecompInputs = 10000;
constexpr double kOrthScale = 0.3;
constexpr std::size_t kOrthN = 100000;
constexpr double kOrthSe = 4.0;
constexpr double kOrthRatioLo = 3.0;
constexpr double kOrthRatioHi = 5.0;
constexpr double kOrthSeconds = 60.0;
constexpr double kOracleTol = 1e-10;
constexpr std::size_t kCoverageN = 2000;
constexpr std::size_t kCoverageReps = 500;
constexpr double kCoverageLo = 0.92;
constexpr double kCoverageHi = 0.98;
constexpr std::size_t kRobustReps = 30;
constexpr double kRobustFraction = 0.8;
constexpr double kBothWrongRatio = 0.5;
constexpr std::size_t kRateReps = 20;
constexpr double kMaxSlope = -0.3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Forward pass and loss recomputed from the layer arrays.
double ref_raw(const nnet::MLPModel& m, const std::vector<double>& x, double* min_gap) {
  std::vector<double> h = x;
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> z(L.out);
    for (std::size_t i = 0; i < L.out; ++i) {
      double acc = L.biases[i];
      for (std::size_t j = 0; j < L.in; ++j) acc += L.weights[i * L.in + j] * h[j];
      if (l + 1 < layers.size()) {
        if (min_gap) *min_gap = std::min(*min_gap, std::abs(acc));
        acc = std::max(acc, 0.0);
      }
      z[i] = acc;
    }
    h = z;
  }
  if (min_gap) *min_gap = std::min(*min_gap, std::abs(std::abs(h[0]) - m.clamp_bound()));
  return h[0];
}

double ref_loss(const nnet::MLPModel& m, const std::vector<nnet::WeightedSample>& batch) {
  double acc = 0.0, tw = 0.0;
  for (const auto& s : batch) {
    const double f = std::clamp(ref_raw(m, s.x, nullptr), -m.clamp_bound(), m.clamp_bound());
    const double l = m.config().loss == nnet::Loss::square ? (s.target - f) * (s.target - f)
                                                           : -s.target * f + std::log1p(std::exp(f));
    acc += s.weight * l;
    tw += s.weight;
  }
  return acc / tw;
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(771);
  std::uniform_int_distribution<int> depth(1, 3), width(1, 8), dim(1, 5), size(1, 10);
  std::uniform_real_distribution<double> u(-1.0, 1.0), wd(0.1, 2.0);
  std::normal_distribution<double> jitter(0.0, 0.3);
  double worst = 0.0;
  int checked = 0, tries = 0;
  while (checked < kGradPairs && tries < 1000) {
    ++tries;
    nnet::MLPConfig c;
    c.depth = depth(rng);
    c.width = width(rng);
    c.loss = checked % 2 ? nnet::Loss::logistic : nnet::Loss::square;
    c.clamp_bound = 3.0;
    c.seed = rng();
    const auto p = static_cast<std::size_t>(dim(rng));
    auto m = nnet::mlp_init(c, p);
    auto params = m.parameters();
    for (double& v : params) v += jitter(rng);
    m = m.with_parameters(params);
    std::vector<nnet::WeightedSample> batch(static_cast<std::size_t>(size(rng)));
    for (auto& s : batch) {
      for (std::size_t j = 0; j < p; ++j) s.x.push_back(u(rng));
      s.target = c.loss == nnet::Loss::logistic ? (u(rng) > 0 ? 1.0 : 0.0) : 2.0 * u(rng);
      s.weight = wd(rng);
    }
    double gap = 1e300;
    for (const auto& s : batch) ref_raw(m, s.x, &gap);
    if (gap < kKinkGap) continue;

    const auto analytic = nnet::mlp_loss_grad(m, batch).flatten();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto up = params, down = params;
      up[i] += kFdStep;
      down[i] -= kFdStep;
      const double num =
          (ref_loss(m.with_parameters(up), batch) - ref_loss(m.with_parameters(down), batch)) /
          (2 * kFdStep);
      diff += (analytic[i] - num) * (analytic[i] - num);
      na += analytic[i] * analytic[i];
      nn += num * num;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12}));
    ++checked;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {checked == kGradPairs && worst <= kGradRelTol && secs < kGradSeconds,
          std::to_string(checked) + " pairs, max relative error " + fmt("%.2e", worst) + ", " +
              fmt("%.2f s", secs)};
}

Outcome kkt() {
  using namespace linmod;
  double worst = 0.0;
  int fits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (bool binary : {false, true}) {
      std::mt19937_64 rng(900 + seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0), wd(0.2, 2.0);
      const std::size_t n = 150, p = 12;
      Matrix X(n, p);
      std::vector<double> y, w;
      for (std::size_t i = 0; i < n; ++i) {
        double lin = 0.2;
        for (std::size_t j = 0; j < p; ++j) {
          X(i, j) = u(rng);
          if (j < 3) lin += (1.0 + j) * X(i, j);
        }
        y.push_back(binary ? (0.5 + 0.5 * u(rng) < 1 / (1 + std::exp(-lin)) ? 1.0 : 0.0)
                           : lin + 0.5 * u(rng));
        w.push_back(wd(rng));
      }
      const Link link = binary ? Link::logistic : Link::identity;
      const double lmax = lambda_max(X, y, w, link);
      for (double frac : {0.01, 0.1, 0.5}) {
        const auto m = binary ? logistic_lasso_fit(X, y, w, frac * lmax)
                              : lasso_fit(X, y, w, frac * lmax);
        // Subgradient stationarity computed here from the data.
        double W = 0.0, g0 = 0.0;
        std::vector<double> g(p, 0.0);
        for (double v : w) W += v;
        for (std::size_t i = 0; i < n; ++i) {
          double lin = m.intercept;
          for (std::size_t j = 0; j < p; ++j) lin += m.coefficients[j] * X(i, j);
          const double r = binary ? 1 / (1 + std::exp(-lin)) - y[i] : -2 * (y[i] - lin);
          g0 += w[i] * r / W;
          for (std::size_t j = 0; j < p; ++j) g[j] += w[i] * r * X(i, j) / W;
        }
        double v = std::abs(g0);
        for (std::size_t j = 0; j < p; ++j) {
          const double b = m.coefficients[j];
          v = std::max(v, b == 0.0 ? std::max(0.0, std::abs(g[j]) - m.lambda)
                                   : std::abs(g[j] + m.lambda * (b > 0 ? 1 : -1)));
        }
        worst = std::max(worst, v);
        ++fits;
      }
    }
  }
  // One predictor with x = +-1 and y = +-2: the lasso slope is 2 - lambda / 2.
  Matrix X(2, 1);
  X(0, 0) = 1.0;
  X(1, 0) = -1.0;
  const std::vector<double> y{2.0, -2.0}, w{1.0, 1.0};
  double one_dim = 0.0;
  for (double lambda : {0.0, 0.5, 1.0, 2.5, 3.9}) {
    double best = 1e300, arg = 0.0;
    for (int k = -40000; k <= 40000; ++k) {
      const double b = k * 1e-4;
      const double obj = (2 - b) * (2 - b) + lambda * std::abs(b);
      if (obj < best) {
        best = obj;
        arg = b;
      }
    }
    const double fit = lasso_fit(X, y, w, lambda).coefficients[0];
    one_dim = std::max({one_dim, std::abs(fit - arg), std::abs(fit - (2 - lambda / 2))});
  }
  return {worst <= kKktTol && one_dim <= kOneDimTol,
          std::to_string(fits) + " fits, max KKT violation " + fmt("%.2e", worst) +
              ", 1-D error " + fmt("%.2e", one_dim)};
}

Outcome decomposition() {
  std::mt19937_64 rng(313);
  std::uniform_real_distribution<double> p(0.02, 0.98), m(-3.0, 3.0), yd(-5.0, 5.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int i = 0; i < kDecompInputs; ++i) {
    const CateNuisanceValues hat{p(rng), m(rng), m(rng)}, truth{p(rng), m(rng), m(rng)};
    const int t = coin(rng);
    const double y = yd(rng);
    const auto d = delta_decomposition(t, y, hat, truth, 0.01);
    // Direct difference of the two pseudo-outcomes.
    const auto direct = [&](const CateNuisanceValues& v) {
      return v.mu1 + t * (y - v.mu1) / v.pi - v.mu0 - (1 - t) * (y - v.mu0) / (1 - v.pi);
    };
    worst = std::max(worst, std::abs(d.delta1() + d.delta2() - (direct(hat) - direct(truth))));
  }
  return {worst <= kDecompTol,
          std::to_string(kDecompInputs) + " inputs, max error " + fmt("%.2e", worst)};
}

Outcome orthogonality() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = simlab::orthogonality_study(simlab::presets::orthogonality_dgp(), kOrthScale, kOrthN, 404);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst_z = 0.0;
  for (const auto& mo : r.moments) worst_z = std::max(worst_z, std::abs(mo.mean) / mo.se);
  const bool moments = worst_z <= kOrthSe;
  const bool ratio = r.delta2_sq_ratio >= kOrthRatioLo && r.delta2_sq_ratio <= kOrthRatioHi;
  return {moments && ratio && secs < kOrthSeconds,
          "max |moment|/SE " + fmt("%.2f", worst_z) + ", mean(delta2^2) ratio " +
              fmt("%.2f", r.delta2_sq_ratio) + " (band [3, 5]), " + fmt("%.1f s", secs)};
}

Outcome oracle_shortcut() {
  using namespace simlab;
  DgpConfig c;
  c.kind = DgpKind::cate_linear;
  c.noise_sd = 0.0;
  c.effect_scale = 0.0;
  c.effect1 = 0.7;
  auto cs = gen_cate(c, 1000, 5);
  const auto cn = cs.truth.cate_nuisance();
  LearnerSpec a;
  a.pi = RoleSpec::make_fixed(cn.pi);
  a.mu0 = RoleSpec::make_fixed(cn.mu0);
  a.mu1 = RoleSpec::make_fixed(cn.mu1);
  const auto ate = estimate_ate(cs.data, a, 5, 0.05, 1);

  DgpConfig d;
  d.kind = DgpKind::dte_linear;
  d.noise_sd = 0.0;
  d.outcome_scale = 0.0;
  d.baseline = 0.4;
  d.effect1 = 0.8;
  d.effect2 = -0.3;
  auto ds = gen_dte(d, 1000, 6);
  const auto sn = ds.truth.sequential_nuisance();
  LearnerSpec s;
  s.pi = RoleSpec::make_fixed(sn.pi);
  s.rho = RoleSpec::make_fixed(sn.rho);
  s.nu = RoleSpec::make_fixed(sn.nu);
  s.mu = RoleSpec::make_fixed(sn.mu);
  const auto dte = estimate_dte(ds.data, s, 5, 0.05, 1);

  const double ea = std::abs(ate.theta_hat - cs.truth.theta);
  const double ed = std::abs(dte.theta_hat - ds.truth.theta);
  return {ea <= kOracleTol && ed <= kOracleTol && ate.sigma_hat <= kOracleTol &&
              dte.sigma_hat <= kOracleTol,
          "ATE error " + fmt("%.1e", ea) + " sigma " + fmt("%g", ate.sigma_hat) + ", DTE error " +
              fmt("%.1e", ed) + " sigma " + fmt("%g", dte.sigma_hat)};
}

Outcome coverage() {
  namespace P = simlab::presets;
  const auto dgp = P::coverage_dgp();
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = simlab::coverage_study(dgp, P::coverage_estimator(dgp), kCoverageReps, kCoverageN, 0.05, 606);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {r.coverage >= kCoverageLo && r.coverage <= kCoverageHi,
          "coverage " + fmt("%.3f", r.coverage) + " over " + std::to_string(r.reps) + " reps, " +
              fmt("%.0f s", secs)};
}

Outcome robustness() {
  namespace P = simlab::presets;
  using simlab::Misspec;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = simlab::double_robustness_study(
      P::robustness_dgp(), P::robustness_learners(),
      {Misspec::mu_wrong, Misspec::pi_wrong, Misspec::both_wrong}, P::robustness_grid(), kRobustReps, 707);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = true;
  std::string detail;
  for (const auto& arm : r.arms) {
    const bool ok = arm.misspec == Misspec::both_wrong ? arm.mean_ratio > kBothWrongRatio
                                                      : arm.fraction_decreasing >= kRobustFraction;
    pass = pass && ok;
    detail += simlab::to_string(arm.misspec) + " decreasing " + fmt("%.2f", arm.fraction_decreasing) +
              " ratio " + fmt("%.2f", arm.mean_ratio) + "; ";
  }
  return {pass, detail + fmt("%.0f s", secs)};
}

Outcome rate() {
  namespace P = simlab::presets;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = simlab::rate_slope_study(P::rate_dgp(), P::rate_learners(), P::rate_grid(), kRateReps, 808);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string mses;
  for (double v : r.per_n_mse) mses += fmt("%.4f ", v);
  return {r.slope <= kMaxSlope, "slope " + fmt("%.3f", r.slope) + ", MSE " + mses + fmt("(%.0f s)", secs)};
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

// Runs a fixed set of commands with a given worker cap; returns every output
// file and every stdout stream.
std::map<std::string, std::string> command_outputs(int workers, const fs::path& dir) {
  set_worker_count(workers);
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& f) { return (dir / f).string(); };
  const std::vector<std::vector<std::string>> cmds{
      {"simulate", "--dgp", "cate_sparse_smooth", "--n", "400", "--seed", "3", "--out", p("cate.csv")},
      {"simulate", "--dgp", "dte_sparse_smooth", "--n", "400", "--seed", "4", "--out", p("dte.csv")},
      {"simulate", "--dgp", "cde_binary", "--n", "400", "--seed", "5", "--out", p("cde.csv")},
      {"estimate", "--data", p("cate.csv"), "--estimand", "ate", "--seed", "1", "--out", p("ate.json")},
      {"estimate", "--data", p("cate.csv"), "--estimand", "cate", "--seed", "1", "--out", p("cate.json")},
      {"estimate", "--data", p("dte.csv"), "--estimand", "dte", "--seed", "1", "--out", p("dte.json")},
      {"estimate", "--data", p("cde.csv"), "--estimand", "cde", "--seed", "1", "--out", p("cde.json")},
      {"diagnose", "orthogonality", "--n", "5000", "--seed", "2"},
      {"diagnose", "coverage", "--n", "300", "--reps", "4", "--seed", "2"},
      {"diagnose", "rate_slope", "--reps", "1", "--seed", "2"},
      {"diagnose", "double_robustness", "--reps", "1", "--seed", "2"},
      {"diagnose", "ci_check", "--report", p("dte.json"), "--truth", p("dte.csv.json")},
  };
  auto files = std::map<std::string, std::string>{};
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    std::ostringstream out, err;
    const int code = cli::run(cmds[i], out, err);
    files["cmd" + std::to_string(i)] = std::to_string(code) + "\n" + out.str() + err.str();
  }
  for (auto& [name, body] : read_dir(dir)) files[name] = body;
  set_worker_count(0);
  return files;
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / ("drnets_accept_" + std::to_string(::getpid()));
  const auto one = command_outputs(1, base / "w1");
  const auto four = command_outputs(4, base / "w4");
  fs::remove_all(base);
  std::size_t differing = 0, failed = 0;
  std::string names;
  for (const auto& [name, body] : one) {
    // Paths embedded in the recorded configs differ by directory only.
    auto other = four.count(name) ? four.at(name) : std::string("<missing>");
    auto mine = body;
    for (auto* s : {&mine, &other}) {
      for (const std::string dir : {"/w1/", "/w4/"}) {
        for (std::size_t pos; (pos = s->find(dir)) != std::string::npos;) s->replace(pos, dir.size(), "/w_/");
      }
    }
    if (mine != other) {
      ++differing;
      names += " " + name;
    }
    if (name.rfind("cmd", 0) == 0 && body.rfind("0\n", 0) != 0 && body.rfind("5\n", 0) != 0) {
      ++failed;
      names += " " + name + "(" + body.substr(0, body.find('\n')) + ")";
    }
  }
  return {differing == 0 && failed == 0 && one.size() == four.size(),
          std::to_string(one.size()) + " outputs compared at 1 vs 4 workers, " +
              std::to_string(differing) + " differ" + names + ", " + std::to_string(failed) +
              " commands failed"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"lasso KKT and 1-D case", kkt},
      {"decomposition identity", decomposition},
      {"orthogonality", orthogonality},
      {"oracle shortcut", oracle_shortcut},
      {"DTE interval coverage", coverage},
      {"double robustness", robustness},
      {"rate slope", rate},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[k].first << ": "
              << o.detail << std::endl;
  }
  return failures;
}
