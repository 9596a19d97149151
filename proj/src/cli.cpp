#include "drnets/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "drnets/csvio.hpp"
#include "drnets/error.hpp"
#include "drnets/estimators.hpp"
#include "drnets/kernels.hpp"
#include "drnets/simlab.hpp"
#include "json.hpp"

namespace drnets::cli {
namespace {

using json = nlohmann::json;

struct Flags {
  std::uint64_t seed = 0;
  std::string out, data, estimand, dgp, probe, config, report, truth, study;
  std::size_t n = 0, K = 0, reps = 0;
  double alpha = 0.0, scale = 0.0;
};

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// defaults <- config file <- explicit flags.
json resolve(json cfg, const CLI::App& sub, const Flags& f) {
  if (!f.config.empty()) {
    json file = load_json_file(f.config);
    // An output document carries its resolved config under "config".
    if (file.contains("config") && file["config"].is_object()) file = file["config"];
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (auto& [key, value] : file.items())
      if (key != "command") cfg[key] = value;
  }
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--seed")) cfg["seed"] = f.seed;
  if (given("--out")) cfg["out"] = f.out;
  if (given("--data")) cfg["data"] = f.data;
  if (given("--estimand")) cfg["estimand"] = f.estimand;
  if (given("--dgp")) cfg["dgp"] = f.dgp;
  if (given("--probe")) cfg["probe"] = f.probe;
  if (given("--n")) cfg["n"] = f.n;
  if (given("--K")) cfg["K"] = f.K;
  if (given("--reps")) cfg["reps"] = f.reps;
  if (given("--alpha")) cfg["alpha"] = f.alpha;
  if (given("--scale")) cfg["scale"] = f.scale;
  if (given("--report")) cfg["report"] = f.report;
  if (given("--truth")) cfg["truth"] = f.truth;
  return cfg;
}

template <class T>
T require(const json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg[key].is_null())
    throw ConfigError(std::string("missing required setting '") + key + "'");
  return cfg[key].get<T>();
}

simlab::DgpConfig dgp_from(const json& cfg, simlab::DgpConfig base) {
  if (cfg.contains("dgp_config")) {
    json merged = base.to_json();
    for (auto& [k, v] : cfg["dgp_config"].items()) merged[k] = v;
    base = simlab::DgpConfig::from_json(merged);
  }
  if (cfg.contains("dgp")) base.kind = simlab::dgp_kind_from_string(cfg["dgp"].get<std::string>());
  base.validate();
  return base;
}

void emit(const json& doc, const json& cfg, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  const std::string path = cfg.value("out", std::string());
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path + "' failed");
}

int cmd_simulate(json cfg) {
  const auto dgp = dgp_from(cfg, {});
  cfg["dgp"] = simlab::to_string(dgp.kind);
  cfg["dgp_config"] = dgp.to_json();
  const auto n = require<std::size_t>(cfg, "n");
  if (n < 1) throw ConfigError("--n must be >= 1");
  const auto seed = cfg.value("seed", std::uint64_t{0});
  cfg["seed"] = seed;
  const auto path = require<std::string>(cfg, "out");

  json side{{"config", cfg}, {"dgp", dgp.to_json()}, {"n", n}, {"seed", seed}};
  if (simlab::is_cate_kind(dgp.kind)) {
    const auto sample = simlab::gen_cate(dgp, n, seed);
    csvio::write_cate_file(path, sample.data);
    side["estimand"] = "ate";
    side["theta"] = sample.truth.theta;
  } else {
    const auto sample = simlab::gen_dte(dgp, n, seed);
    csvio::write_dte_file(path, sample.data);
    side["estimand"] = dgp.kind == simlab::DgpKind::cde_binary
                           ? "cde_t" + std::to_string(dgp.cde_t) + "_m" + std::to_string(dgp.cde_m)
                           : "dte";
    side["theta"] = sample.truth.theta;
  }
  json out_cfg{{"out", path + ".json"}};
  std::ostringstream ignored;
  emit(side, out_cfg, ignored);
  return kOk;
}

int cmd_estimate(json cfg, std::ostream& out) {
  const auto estimand = require<std::string>(cfg, "estimand");
  if (estimand != "ate" && estimand != "cate" && estimand != "dte" && estimand != "cde")
    throw ConfigError("unknown estimand '" + estimand + "' (expected ate, cate, dte or cde)");
  const auto data_path = require<std::string>(cfg, "data");
  const auto seed = cfg.value("seed", std::uint64_t{0});
  const auto K = cfg.value("K", std::size_t{5});
  const auto alpha = cfg.value("alpha", 0.05);
  const LearnerSpec spec =
      cfg.contains("learners") ? LearnerSpec::from_json(cfg["learners"]) : LearnerSpec{};
  cfg["seed"] = seed;
  cfg["learners"] = spec.to_json();

  json doc;
  if (estimand == "ate" || estimand == "cate") {
    const CateData data = csvio::read_cate_file(data_path);
    if (estimand == "ate") {
      cfg["K"] = K;
      cfg["alpha"] = alpha;
      doc = estimate_ate(data, spec, K, alpha, seed).to_json();
    } else {
      const auto est = estimate_cate(data, spec, seed);
      doc = est.to_json();
      if (cfg.contains("probe")) {
        const Matrix probe = csvio::read_points_file(cfg["probe"].get<std::string>());
        if (probe.cols() != data.dim())
          throw InputError("probe points have " + std::to_string(probe.cols()) +
                           " columns, data have " + std::to_string(data.dim()));
        const auto pred = kernels::parallel::predict(est.predictor(), probe);
        json rows = json::array();
        for (std::size_t i = 0; i < probe.rows(); ++i) {
          auto r = probe.row(i);
          rows.push_back({{"s", std::vector<double>(r.begin(), r.end())}, {"theta", pred[i]}});
        }
        doc["predictions"] = rows;
      }
    }
  } else {
    const bool cde = estimand == "cde";
    const DteData data = csvio::read_dte_file(data_path, cde);
    cfg["K"] = K;
    cfg["alpha"] = alpha;
    if (cde) {
      const int t = cfg.value("cde_t", 1), m = cfg.value("cde_m", 1);
      cfg["cde_t"] = t;
      cfg["cde_m"] = m;
      doc = estimate_cde(data, t, m, spec, K, alpha, seed).to_json();
    } else {
      doc = estimate_dte(data, spec, K, alpha, seed).to_json();
    }
  }
  doc["config"] = cfg;
  emit(doc, cfg, out);
  return kOk;
}

std::vector<std::size_t> grid_from(const json& cfg, std::vector<std::size_t> fallback) {
  return cfg.contains("n_grid") ? cfg["n_grid"].get<std::vector<std::size_t>>() : fallback;
}

int cmd_diagnose(json cfg, std::ostream& out) {
  namespace P = simlab::presets;
  const auto study = require<std::string>(cfg, "study");
  const auto seed = cfg.value("seed", std::uint64_t{0});
  cfg["seed"] = seed;
  json doc;
  bool pass = false;

  if (study == "orthogonality") {
    const auto dgp = dgp_from(cfg, P::orthogonality_dgp());
    const double scale = cfg.value("scale", P::kOrthogonalityScale);
    const auto n = cfg.value("n", P::kOrthogonalityN);
    cfg["dgp_config"] = dgp.to_json();
    cfg["scale"] = scale;
    cfg["n"] = n;
    const auto r = simlab::orthogonality_study(dgp, scale, n, seed);
    doc = r.to_json();
    pass = r.moments_pass && r.ratio_pass;
  } else if (study == "coverage") {
    const auto dgp = dgp_from(cfg, P::coverage_dgp());
    auto est = P::coverage_estimator(dgp);
    if (cfg.contains("estimand")) est.estimand = cfg["estimand"].get<std::string>();
    if (cfg.contains("learners")) est.learners = LearnerSpec::from_json(cfg["learners"]);
    est.K = cfg.value("K", est.K);
    const auto reps = cfg.value("reps", P::kCoverageReps);
    const auto n = cfg.value("n", P::kCoverageN);
    const double alpha = cfg.value("alpha", 0.05);
    auto band = simlab::coverage_band(alpha, reps);
    if (cfg.contains("coverage_band")) band = cfg["coverage_band"].get<std::pair<double, double>>();
    cfg["dgp_config"] = dgp.to_json();
    cfg["estimator"] = est.to_json();
    cfg["reps"] = reps;
    cfg["n"] = n;
    cfg["alpha"] = alpha;
    cfg["coverage_band"] = {band.first, band.second};
    const auto r = simlab::coverage_study(dgp, est, reps, n, alpha, seed);
    doc = r.to_json();
    pass = r.coverage >= band.first && r.coverage <= band.second;
  } else if (study == "rate_slope") {
    const auto dgp = dgp_from(cfg, P::rate_dgp());
    const LearnerSpec learners =
        cfg.contains("learners") ? LearnerSpec::from_json(cfg["learners"]) : P::rate_learners();
    const auto grid = grid_from(cfg, P::rate_grid());
    const auto reps = cfg.value("reps", P::kRateReps);
    const double max_slope = cfg.value("max_slope", -0.3);
    cfg["dgp_config"] = dgp.to_json();
    cfg["learners"] = learners.to_json();
    cfg["n_grid"] = grid;
    cfg["reps"] = reps;
    cfg["max_slope"] = max_slope;
    const auto r = simlab::rate_slope_study(dgp, learners, grid, reps, seed);
    doc = r.to_json();
    pass = r.slope <= max_slope;
  } else if (study == "double_robustness") {
    const auto dgp = dgp_from(cfg, P::robustness_dgp());
    const LearnerSpec learners = cfg.contains("learners")
                                     ? LearnerSpec::from_json(cfg["learners"])
                                     : P::robustness_learners();
    const auto grid = grid_from(cfg, P::robustness_grid());
    const auto reps = cfg.value("reps", P::kRobustnessReps);
    std::vector<simlab::Misspec> arms{simlab::Misspec::mu_wrong, simlab::Misspec::pi_wrong,
                                      simlab::Misspec::both_wrong};
    if (cfg.contains("arms")) {
      arms.clear();
      for (const auto& a : cfg["arms"]) arms.push_back(simlab::misspec_from_string(a));
    }
    cfg["dgp_config"] = dgp.to_json();
    cfg["learners"] = learners.to_json();
    cfg["n_grid"] = grid;
    cfg["reps"] = reps;
    const auto r = simlab::double_robustness_study(dgp, learners, arms, grid, reps, seed);
    doc = r.to_json();
    pass = r.pass();
  } else if (study == "ci_check") {
    const json report = load_json_file(require<std::string>(cfg, "report"));
    const json truth = load_json_file(require<std::string>(cfg, "truth"));
    const double theta = truth.at("theta").get<double>();
    const auto ci = report.at("ci").get<std::pair<double, double>>();
    pass = ci.first <= theta && theta <= ci.second;
    doc = {{"study", "ci_check"}, {"theta", theta}, {"ci", {ci.first, ci.second}},
           {"covered", pass}};
  } else {
    throw ConfigError("unknown study '" + study +
                      "' (expected orthogonality, coverage, rate_slope, double_robustness or "
                      "ci_check)");
  }
  doc["pass"] = pass;
  doc["config"] = cfg;
  emit(doc, cfg, out);
  return pass ? kOk : kDiagnostic;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--out", f.out, "Output path");
  sub->add_option("--config", f.config, "JSON config file; explicit flags take precedence");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust estimation and simulation toolkit", "drnets"};
  app.require_subcommand(1);
  Flags f;

  auto* sim = app.add_subcommand("simulate", "Write a simulated dataset and its truth sidecar");
  add_common(sim, f);
  sim->add_option("--dgp", f.dgp, "Data-generating process");
  sim->add_option("--n", f.n, "Number of rows");
  // Accepted everywhere so a config can be shared; unused by this command.
  for (auto* name : {"--data", "--estimand", "--probe", "--report", "--truth"})
    sim->add_option(name, f.data)->group("");
  for (auto* name : {"--K", "--reps"}) sim->add_option(name, f.K)->group("");
  for (auto* name : {"--alpha", "--scale"}) sim->add_option(name, f.alpha)->group("");

  auto* est = app.add_subcommand("estimate", "Run an estimator on a CSV dataset");
  add_common(est, f);
  est->add_option("--data", f.data, "Input CSV");
  est->add_option("--estimand", f.estimand, "ate, cate, dte or cde");
  est->add_option("--K", f.K, "Cross-fitting folds");
  est->add_option("--alpha", f.alpha, "Interval level is 1 - alpha");
  est->add_option("--probe", f.probe, "CSV of points for CATE predictions");
  for (auto* name : {"--dgp", "--report", "--truth"}) est->add_option(name, f.dgp)->group("");
  for (auto* name : {"--n", "--reps"}) est->add_option(name, f.n)->group("");
  est->add_option("--scale", f.scale)->group("");

  auto* diag = app.add_subcommand("diagnose", "Run a diagnostic study");
  add_common(diag, f);
  diag->add_option("study", f.study,
                   "orthogonality, coverage, rate_slope, double_robustness or ci_check");
  diag->add_option("--dgp", f.dgp, "Data-generating process");
  diag->add_option("--n", f.n, "Sample size");
  diag->add_option("--reps", f.reps, "Replications");
  diag->add_option("--K", f.K, "Cross-fitting folds");
  diag->add_option("--alpha", f.alpha, "Interval level is 1 - alpha");
  diag->add_option("--estimand", f.estimand, "Estimator for the coverage study");
  diag->add_option("--scale", f.scale, "Perturbation scale (orthogonality)");
  diag->add_option("--report", f.report, "Estimate report (ci_check)");
  diag->add_option("--truth", f.truth, "Simulation sidecar (ci_check)");
  for (auto* name : {"--data", "--probe"}) diag->add_option(name, f.data)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(resolve({{"command", "simulate"}}, *sim, f));
    if (est->parsed()) return cmd_estimate(resolve({{"command", "estimate"}}, *est, f), out);
    json base{{"command", "diagnose"}};
    if (!f.study.empty()) base["study"] = f.study;
    return cmd_diagnose(resolve(base, *diag, f), out);
  } catch (const IoError& e) {
    err << "drnets: " << e.what() << "\n";
    return kIo;
  } catch (const SchemaError& e) {
    err << "drnets: schema mismatch at column '" << e.column() << "': " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "drnets: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    err << "drnets: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    err << "drnets: bad configuration value: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "drnets: estimation failed: " << e.what() << "\n";
    return kEstimation;
  }
}

}  // namespace drnets::cli
