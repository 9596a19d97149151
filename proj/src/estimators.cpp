#include "drnets/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drnets/error.hpp"
#include "drnets/kernels.hpp"
#include "drnets/parallel.hpp"
#include "drnets/rng.hpp"
#include "drnets/stats.hpp"

namespace drnets {
namespace {

// Child streams of a master seed.
constexpr std::uint64_t kFoldStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kPerFoldStream = 100;
constexpr std::uint64_t kNuisanceStream = 0x1000;
constexpr std::uint64_t kFinalStream = 0x2000;

std::vector<double> as_double(std::span<const int> v) { return {v.begin(), v.end()}; }

std::vector<double> product(std::span<const int> a, std::span<const int> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<double>(a[i] * b[i]);
  return out;
}

template <class T>
std::vector<T> take(std::span<const T> v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(v[i]);
  return out;
}

bool has_arm(std::span<const int> t, std::span<const std::size_t> rows, int arm) {
  return std::any_of(rows.begin(), rows.end(), [&](std::size_t i) { return t[i] == arm; });
}

std::size_t subsample_key(std::span<const std::size_t> rows) {
  return *std::min_element(rows.begin(), rows.end());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> two_way_split(std::size_t n,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(seed, kSplitStream);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t first = (n + 1) / 2;
  std::vector<std::size_t> h1(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<std::size_t> h2(perm.begin() + static_cast<std::ptrdiff_t>(first), perm.end());
  std::sort(h1.begin(), h1.end());
  std::sort(h2.begin(), h2.end());
  return {std::move(h1), std::move(h2)};
}

CateNuisance fit_cate_nuisance(const CateData& train, const LearnerSpec& spec, std::uint64_t seed) {
  const auto t = as_double(train.t);
  std::vector<double> w1(t), w0(t.size()), ones(t.size(), 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) w0[i] = 1.0 - t[i];
  CateNuisance n;
  n.pi = fit_role(spec.pi, train.s, t, ones, Link::logistic, derive_seed(seed, 1));
  n.mu0 = fit_role(spec.mu0, train.s, train.y, w0, Link::identity, derive_seed(seed, 2));
  n.mu1 = fit_role(spec.mu1, train.s, train.y, w1, Link::identity, derive_seed(seed, 3));
  n.propensity_clip = spec.propensity_clip;
  return n;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

void check_clip(double clip) {
  if (!(clip >= 0.0 && clip < 0.5)) throw ConfigError("propensity_clip must lie in [0, 0.5)");
}

void finish_report(EstimateReport& r, std::vector<std::vector<double>> fold_scores,
                   const FoldPlan& plan, bool mean_of_fold_means) {
  r.scores.assign(plan.n_total, 0.0);
  std::vector<double> means;
  for (std::size_t k = 0; k < plan.K; ++k) {
    const auto rows = plan.fold(k);
    for (std::size_t j = 0; j < rows.size(); ++j) r.scores[rows[j]] = fold_scores[k][j];
    r.per_fold[k].mean = stats::mean(fold_scores[k]);
    means.push_back(r.per_fold[k].mean);
  }
  r.theta_hat = mean_of_fold_means ? stats::mean(means) : stats::mean(r.scores);
  r.sigma_hat = std::sqrt(stats::mean_sq_dev(r.scores, r.theta_hat));
  attach_interval(r);
}

}  // namespace

LearnerSpec LearnerSpec::uniform(const RoleSpec& role) {
  LearnerSpec s;
  s.pi = s.mu0 = s.mu1 = s.rho = s.nu = s.mu = s.final_stage = role;
  return s;
}

nlohmann::json LearnerSpec::to_json() const {
  return {{"pi", pi.to_json()},       {"mu0", mu0.to_json()}, {"mu1", mu1.to_json()},
          {"rho", rho.to_json()},     {"nu", nu.to_json()},   {"mu", mu.to_json()},
          {"final_stage", final_stage.to_json()}, {"propensity_clip", propensity_clip}};
}

LearnerSpec LearnerSpec::from_json(const nlohmann::json& j) {
  LearnerSpec s;
  if (j.contains("all")) s = uniform(RoleSpec::from_json(j["all"]));
  auto role = [&](const char* key, RoleSpec& r) {
    if (j.contains(key)) r = RoleSpec::from_json(j[key]);
  };
  role("pi", s.pi);
  role("mu0", s.mu0);
  role("mu1", s.mu1);
  role("rho", s.rho);
  role("nu", s.nu);
  role("mu", s.mu);
  role("final_stage", s.final_stage);
  s.propensity_clip = j.value("propensity_clip", s.propensity_clip);
  check_clip(s.propensity_clip);
  return s;
}

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : per_fold)
    folds.push_back({{"fold", f.fold}, {"n_train", f.n_train}, {"n_eval", f.n_eval},
                     {"mean", f.mean}});
  return {{"estimand", estimand}, {"theta_hat", theta_hat}, {"sigma_hat", sigma_hat},
          {"ci", {ci_lower, ci_upper}}, {"alpha", alpha},   {"K", K},
          {"n", n},               {"seed", seed},           {"per_fold", folds},
          {"learner_configs", learner_configs}};
}

double critical_value(double alpha) {
  check_alpha(alpha);
  return stats::normal_quantile(1.0 - alpha / 2.0);
}

void attach_interval(EstimateReport& r) {
  const double half = critical_value(r.alpha) * r.sigma_hat / std::sqrt(static_cast<double>(r.n));
  r.ci_lower = r.theta_hat - half;
  r.ci_upper = r.theta_hat + half;
}

EstimateReport estimate_ate(const CateData& data, const LearnerSpec& spec, std::size_t K,
                            double alpha, std::uint64_t seed) {
  data.validate();
  check_alpha(alpha);
  check_clip(spec.propensity_clip);
  if (K > data.size()) throw ConfigError("K exceeds the number of observations");
  const FoldPlan plan = make_folds(data.size(), K, derive_seed(seed, kFoldStream));

  EstimateReport r;
  r.estimand = "ate";
  r.alpha = alpha;
  r.K = K;
  r.n = data.size();
  r.seed = seed;
  r.learner_configs = spec.to_json();
  r.plan = plan;
  r.per_fold.resize(K);

  for (std::size_t k = 0; k < K; ++k) {
    const auto train = plan.complement(k);
    if (!has_arm(data.t, train, 0) || !has_arm(data.t, train, 1))
      throw FoldError("fold " + std::to_string(k) + ": training data lack a treatment arm",
                      static_cast<int>(k));
  }

  std::vector<std::vector<double>> scores(K);
  parallel_for(K, [&](std::size_t k) {
    const auto train_rows = plan.complement(k);
    const auto eval_rows = plan.fold(k);
    const auto nuis = fit_cate_nuisance(data.subset(train_rows), spec,
                                        derive_seed(seed, kPerFoldStream + k));
    scores[k] = kernels::parallel::cate_pseudo_outcomes(data.subset(eval_rows), nuis);
    r.per_fold[k] = {k, train_rows.size(), eval_rows.size(), 0.0};
  });
  finish_report(r, std::move(scores), plan, false);
  return r;
}

double CateEstimate::predict(std::span<const double> s) const {
  return 0.5 * (model_half1(s) + model_half2(s));
}

Predictor CateEstimate::predictor() const { return Predictor::average(model_half1, model_half2); }

double CateEstimate::plug_in(std::span<const double> s) const {
  return 0.5 * ((nuisance_half1.mu1(s) - nuisance_half1.mu0(s)) +
                (nuisance_half2.mu1(s) - nuisance_half2.mu0(s)));
}

nlohmann::json CateEstimate::to_json() const {
  return {{"estimand", "cate"},
          {"seed", seed},
          {"split_seed", split_seed},
          {"half_sizes", {half1.size(), half2.size()}},
          {"model_half1", model_half1.to_json()},
          {"model_half2", model_half2.to_json()}};
}

CateEstimate estimate_cate_on_halves(const CateData& data, const LearnerSpec& spec,
                                     std::vector<std::size_t> half1,
                                     std::vector<std::size_t> half2, std::uint64_t seed) {
  check_clip(spec.propensity_clip);
  if (half1.empty() || half2.empty()) throw SplitError("estimate_cate: empty half");
  const std::vector<std::size_t>* halves[2] = {&half1, &half2};
  Predictor models[2];
  CateNuisance nuis[2];
  parallel_for(2, [&](std::size_t h) {
    const auto& eval = *halves[h];
    const auto& train = *halves[1 - h];
    nuis[h] = fit_cate_nuisance(data.subset(train), spec,
                                derive_seed(seed, kNuisanceStream + subsample_key(train)));
    const CateData eval_data = data.subset(eval);
    const auto pseudo = kernels::parallel::cate_pseudo_outcomes(eval_data, nuis[h]);
    const std::vector<double> ones(pseudo.size(), 1.0);
    models[h] = fit_role(spec.final_stage, eval_data.s, pseudo, ones, Link::identity,
                         derive_seed(seed, kFinalStream + subsample_key(eval)));
  });
  CateEstimate est;
  est.model_half1 = std::move(models[0]);
  est.model_half2 = std::move(models[1]);
  est.nuisance_half1 = std::move(nuis[0]);
  est.nuisance_half2 = std::move(nuis[1]);
  est.half1 = std::move(half1);
  est.half2 = std::move(half2);
  est.seed = seed;
  return est;
}

CateEstimate estimate_cate(const CateData& data, const LearnerSpec& spec, std::uint64_t seed) {
  data.validate();
  if (data.size() < 4) throw ConfigError("estimate_cate: need at least 4 observations");
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    auto [h1, h2] = two_way_split(data.size(), seed + attempt);
    const bool ok = has_arm(data.t, h1, 0) && has_arm(data.t, h1, 1) && has_arm(data.t, h2, 0) &&
                    has_arm(data.t, h2, 1);
    if (!ok) continue;
    auto est = estimate_cate_on_halves(data, spec, std::move(h1), std::move(h2), seed);
    est.split_seed = seed + attempt;
    return est;
  }
  throw SplitError("estimate_cate: a half lacks a treatment arm after reshuffling");
}

CateEstimate estimate_cate(const CateData& data, const LearnerSpec& spec,
                           const nnet::MLPConfig& final_stage, std::uint64_t seed) {
  LearnerSpec s = spec;
  s.final_stage = RoleSpec::make_mlp(final_stage);
  return estimate_cate(data, s, seed);
}

double MuDrEstimate::predict(std::span<const double> s1) const {
  return 0.5 * (model_half1(s1) + model_half2(s1));
}

Predictor MuDrEstimate::predictor() const { return Predictor::average(model_half1, model_half2); }

MuDrEstimate estimate_mu_dr(const DteData& data, std::span<const int> a, std::span<const int> b,
                            const LearnerSpec& spec, std::uint64_t seed) {
  check_clip(spec.propensity_clip);
  const std::size_t n = data.size();
  if (a.size() != n || b.size() != n) throw InputError("estimate_mu_dr: indicator length mismatch");
  if (n < 2) throw StratumError("estimate_mu_dr: fewer than two observations");
  auto [h1, h2] = two_way_split(n, seed);
  const std::vector<int> ab = [&] {
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a[i] * b[i];
    return v;
  }();
  for (const auto* half : {&h1, &h2}) {
    if (!has_arm(a, *half, 1))
      throw StratumError("estimate_mu_dr: a half has no rows on the first exposure of the path");
    if (!has_arm(ab, *half, 1))
      throw StratumError("estimate_mu_dr: a half has no rows on the full treatment path");
  }
  const std::vector<std::size_t>* halves[2] = {&h1, &h2};
  Predictor models[2];
  parallel_for(2, [&](std::size_t h) {
    const auto& eval = *halves[h];
    const auto& train = *halves[1 - h];
    const std::uint64_t s = derive_seed(seed, kNuisanceStream + subsample_key(train));
    const DteData tr = data.subset(train);
    const Matrix s2bar = tr.s2bar();
    const auto at = take(a, train), bt = take(b, train);
    const Predictor rho = fit_role(spec.rho, s2bar, as_double(bt), as_double(at), Link::logistic,
                                   derive_seed(s, 1));
    const Predictor nu =
        fit_role(spec.nu, s2bar, tr.y, product(at, bt), Link::identity, derive_seed(s, 2));

    const DteData ev = data.subset(eval);
    const Matrix ev_s2bar = ev.s2bar();
    const auto ae = take(a, eval), be = take(b, eval);
    const kernels::SequentialBatch batch{ev.s1, ev_s2bar, ae, be, ev.y};
    const auto pseudo = kernels::parallel::stage2_pseudo_outcomes(batch, nu, rho,
                                                                  spec.propensity_clip);
    models[h] = fit_role(spec.mu, ev.s1, pseudo, as_double(ae), Link::identity,
                         derive_seed(seed, kFinalStream + subsample_key(eval)));
  });
  return {std::move(models[0]), std::move(models[1]), std::move(h1), std::move(h2)};
}

MuDrEstimate estimate_mu_dr(const DteData& data, const LearnerSpec& spec, std::uint64_t seed) {
  data.validate();
  return estimate_mu_dr(data, data.t1, data.t2, spec, seed);
}

MuDrEstimate estimate_mu_dr(const DteData& data, const LearnerSpec& spec,
                            const nnet::MLPConfig& final_stage, std::uint64_t seed) {
  LearnerSpec s = spec;
  s.mu = RoleSpec::make_mlp(final_stage);
  return estimate_mu_dr(data, s, seed);
}

EstimateReport estimate_sequential(const DteData& data, std::span<const int> a,
                                   std::span<const int> b, const LearnerSpec& spec, std::size_t K,
                                   double alpha, std::uint64_t seed, const std::string& estimand) {
  data.validate();
  check_alpha(alpha);
  check_clip(spec.propensity_clip);
  const std::size_t n = data.size();
  if (a.size() != n || b.size() != n) throw InputError("path indicators: length mismatch");
  if (K > n) throw ConfigError("K exceeds the number of observations");
  const FoldPlan plan = make_folds(n, K, derive_seed(seed, kFoldStream));

  std::vector<int> ab(n);
  for (std::size_t i = 0; i < n; ++i) ab[i] = a[i] * b[i];
  for (std::size_t k = 0; k < K; ++k) {
    const auto train = plan.complement(k);
    if (!has_arm(a, train, 1))
      throw StratumError("fold " + std::to_string(k) +
                         ": no training rows on the first exposure of the path");
    if (!has_arm(ab, train, 1))
      throw StratumError("fold " + std::to_string(k) +
                         ": no training rows on the full treatment path");
  }

  EstimateReport r;
  r.estimand = estimand;
  r.alpha = alpha;
  r.K = K;
  r.n = n;
  r.seed = seed;
  r.learner_configs = spec.to_json();
  r.plan = plan;
  r.per_fold.resize(K);

  std::vector<std::vector<double>> scores(K);
  parallel_for(K, [&](std::size_t k) {
    const auto train_rows = plan.complement(k);
    const auto eval_rows = plan.fold(k);
    const std::uint64_t fs = derive_seed(seed, kPerFoldStream + k);

    const DteData tr = data.subset(train_rows);
    const Matrix tr_s2bar = tr.s2bar();
    const auto at = take(a, train_rows), bt = take(b, train_rows);
    const std::vector<double> ones(train_rows.size(), 1.0);

    SequentialNuisance nuis;
    nuis.propensity_clip = spec.propensity_clip;
    nuis.pi = fit_role(spec.pi, tr.s1, as_double(at), ones, Link::logistic, derive_seed(fs, 1));
    nuis.rho = fit_role(spec.rho, tr_s2bar, as_double(bt), as_double(at), Link::logistic,
                        derive_seed(fs, 2));
    nuis.nu = fit_role(spec.nu, tr_s2bar, tr.y, product(at, bt), Link::identity,
                       derive_seed(fs, 3));
    nuis.mu = estimate_mu_dr(tr, at, bt, spec, derive_seed(fs, 4)).predictor();

    const DteData ev = data.subset(eval_rows);
    const Matrix ev_s2bar = ev.s2bar();
    const auto ae = take(a, eval_rows), be = take(b, eval_rows);
    scores[k] = kernels::parallel::sequential_scores({ev.s1, ev_s2bar, ae, be, ev.y}, nuis);
    r.per_fold[k] = {k, train_rows.size(), eval_rows.size(), 0.0};
  });
  finish_report(r, std::move(scores), plan, true);
  return r;
}

EstimateReport estimate_dte(const DteData& data, const LearnerSpec& spec, std::size_t K,
                            double alpha, std::uint64_t seed) {
  data.validate();
  return estimate_sequential(data, data.t1, data.t2, spec, K, alpha, seed, "dte");
}

EstimateReport estimate_cde(const DteData& data, int t, int m, const LearnerSpec& spec,
                            std::size_t K, double alpha, std::uint64_t seed) {
  data.validate();
  if (!data.has_mediator()) throw InputError("estimate_cde: data have no mediator column");
  std::vector<int> a(data.size()), b(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    a[i] = data.t1[i] == t ? 1 : 0;
    b[i] = data.m[i] == m ? 1 : 0;
  }
  return estimate_sequential(data, a, b, spec, K, alpha, seed,
                             "cde_t" + std::to_string(t) + "_m" + std::to_string(m));
}

}  // namespace drnets
