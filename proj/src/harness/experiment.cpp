#include "ivope/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ivope/evaluation.hpp"
#include "ivope/harness/pool.hpp"
#include "ivope/projected_rmse.hpp"

namespace ivope::harness {

namespace {

EnvSpec parse_env(const Json& j) {
  EnvSpec e;
  if (j.is_null()) return e;
  JsonFields r(j, "env");
  const auto kind = r.get<std::string>("kind", "chain");
  if (kind != "chain") throw ConfigError("env.kind: only 'chain' is supported, got '" + kind + "'");
  e.n_states = r.count("n_states", e.n_states);
  e.p_advance = r.get<double>("p_advance", e.p_advance);
  e.discount = r.get<double>("discount", e.discount);
  r.finish();
  if (e.n_states < 2) throw ConfigError("env.n_states must be at least 2");
  if (!(e.p_advance > 0.0 && e.p_advance <= 1.0)) throw ConfigError("env.p_advance must lie in (0, 1]");
  if (!(e.discount >= 0.0 && e.discount < 1.0)) throw ConfigError("env.discount must lie in [0, 1)");
  return e;
}

DatasetSpec parse_dataset(const Json& j) {
  DatasetSpec d;
  if (j.is_null()) return d;
  JsonFields r(j, "dataset");
  d.n_transitions = r.count("n_transitions", d.n_transitions);
  const Json& alpha = r.raw("alpha");
  if (!alpha.is_null()) {
    if (!alpha.is_number()) throw ConfigError("dataset.alpha: expected a number or null");
    d.alpha = alpha.get<double>();
  }
  d.seed = r.get<std::uint64_t>("seed", 0);
  const Json& path = r.raw("path");
  if (!path.is_null()) {
    if (!path.is_string()) throw ConfigError("dataset.path: expected a string");
    d.path = path.get<std::string>();
  }
  r.finish();
  if (d.n_transitions < 2 && !d.path) throw ConfigError("dataset.n_transitions must be at least 2");
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Json curve_json(const std::vector<neural::CurvePoint>& curve) {
  Json out = Json::array();
  for (const auto& p : curve) out.push_back(Json::array({p.step, p.train_loss, p.valid_metric, p.value_estimate}));
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const Json& j) {
  JsonFields r(j, "");
  ExperimentConfig c;
  c.env = parse_env(r.raw("env"));
  c.dataset = parse_dataset(r.raw("dataset"));
  {
    JsonFields e(r.raw("estimator").is_null() ? Json::object() : r.raw("estimator"), "estimator");
    c.estimator.name = e.require<std::string>("name");
    const Json& params = e.raw("params");
    c.estimator.params = params.is_null() ? Json::object() : params;
    e.finish();
  }
  c.n_seeds = r.count("n_seeds", 1);
  c.seed = r.get<std::uint64_t>("seed", 0);
  c.step_scale = r.get<double>("step_scale", 1.0);
  c.workers = r.count("workers", 1);
  c.output = r.get<std::string>("output", "");
  c.label = r.get<std::string>("label", "");
  const Json& tags = r.raw("tags");
  if (!tags.is_null()) {
    if (!tags.is_object()) throw ConfigError("tags: expected an object");
    c.tags = tags;
  }
  r.finish();
  if (c.n_seeds == 0) throw ConfigError("n_seeds must be positive");
  if (!(c.step_scale > 0.0)) throw ConfigError("step_scale must be positive");
  // Parse the estimator now so bad names and keys fail before any compute.
  c.estimator.params = make_estimator(c.estimator.name, c.estimator.params)->params();
  if (c.label.empty()) c.label = c.estimator.name;
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["env"] = {{"kind", "chain"}, {"n_states", c.env.n_states}, {"p_advance", c.env.p_advance}, {"discount", c.env.discount}};
  j["dataset"] = {{"n_transitions", c.dataset.n_transitions},
                  {"alpha", c.dataset.alpha ? Json(*c.dataset.alpha) : Json(nullptr)},
                  {"seed", c.dataset.seed},
                  {"path", c.dataset.path ? Json(*c.dataset.path) : Json(nullptr)}};
  j["estimator"] = {{"name", c.estimator.name}, {"params", c.estimator.params}};
  j["n_seeds"] = c.n_seeds;
  j["seed"] = c.seed;
  j["step_scale"] = c.step_scale;
  j["workers"] = c.workers;
  j["output"] = c.output;
  j["label"] = c.label;
  j["tags"] = c.tags;
  return j;
}

env::TabularMdp build_mdp(const EnvSpec& e) { return env::make_chain_mdp(e.n_states, e.p_advance, e.discount); }

data::TransitionDataset build_dataset(const ExperimentConfig& c, const env::TabularMdp& mdp, std::size_t i) {
  if (c.dataset.path) return data::load(*c.dataset.path);
  const std::uint64_t seed = c.dataset.seed + i;
  if (c.dataset.alpha)
    return data::resample_shifted(mdp, env::chain_policy(mdp), *c.dataset.alpha, c.dataset.n_transitions, seed);
  return data::generate_chain_dataset(mdp, c.dataset.n_transitions, seed);
}

Eigen::MatrixXd behavior_weights(const ExperimentConfig& c, const env::TabularMdp& mdp) {
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  if (c.dataset.path) {
    const data::TransitionDataset ds = data::load(*c.dataset.path);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(S, A);
    for (std::size_t i = 0; i < ds.size(); ++i)
      w(static_cast<Eigen::Index>(ds.state_index(i)), static_cast<Eigen::Index>(ds.action(i))) += 1.0;
    return w / w.sum();
  }
  if (!c.dataset.alpha) return env::chain_behavior_distribution(mdp);
  const std::vector<double> s = data::shifted_state_weights(mdp, *c.dataset.alpha);
  Eigen::MatrixXd w(S, A);
  for (Eigen::Index i = 0; i < S; ++i) w.row(i).setConstant(s[static_cast<std::size_t>(i)] / static_cast<double>(A));
  return w;
}

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  a.mean = mean_of(v);
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return a;
}

Json ExperimentReport::to_json() const {
  Json j;
  j["schema"] = kReportSchema;
  j["version"] = IVOPE_VERSION;
  j["label"] = config.label;
  j["estimator"] = config.estimator.name;
  j["tags"] = config.tags;
  j["config"] = harness::to_json(config);
  j["config"].erase("output");  // so the bytes do not depend on where they land
  j["rho_bounds"] = Json::array({rho_min, rho_max});
  j["oracle_q"] = oracle_q;
  Json rows = Json::array();
  std::vector<double> err, rho, q0, prmse;
  for (const auto& s : seeds) {
    Json row;
    row["index"] = s.index;
    row["seed"] = s.seed;
    row["rho_hat"] = s.rho_hat;
    row["rho_true"] = s.rho_true;
    row["normalized_error"] = s.normalized_error;
    row["q0_hat"] = s.q0_hat;
    row["q0_true"] = s.q0_true;
    row["q0_abs_error"] = s.q0_abs_error;
    row["q0_relative_error"] = s.q0_relative_error;
    row["projected_rmse"] = s.projected_rmse;
    row["validation_metric"] = s.validation_metric;
    row["abort_reason"] = s.abort_reason ? Json(*s.abort_reason) : Json(nullptr);
    row["diagnostics"] = Json(s.diagnostics);
    row["curve_path"] = s.curve_path;
    row["curve"] = curve_json(s.curve);
    row["q_values"] = s.q_values;
    rows.push_back(row);
    err.push_back(s.normalized_error);
    rho.push_back(s.rho_hat);
    q0.push_back(s.q0_abs_error);
    prmse.push_back(s.projected_rmse);
  }
  j["seeds"] = rows;
  auto agg = [](const std::vector<double>& v) {
    const Aggregate a = aggregate(v);
    return Json{{"mean", a.mean}, {"std", a.std}};
  };
  j["aggregate"] = {{"n_seeds", seeds.size()},
                    {"normalized_error", agg(err)},
                    {"rho_hat", agg(rho)},
                    {"q0_abs_error", agg(q0)},
                    {"projected_rmse", agg(prmse)}};
  return j;
}

std::string report_text(const ExperimentReport& report) { return report.to_json().dump(2) + "\n"; }

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto estimator = make_estimator(config.estimator.name, config.estimator.params);
  const env::TabularMdp mdp = build_mdp(config.env);
  const env::Policy policy = env::chain_policy(mdp);
  const env::QTable oracle = env::exact_q(mdp, policy);
  const double rho_true = env::policy_value_exact(mdp, policy, oracle);
  const evaluation::ValueBounds bounds = evaluation::chain_value_bounds(mdp);
  const Eigen::MatrixXd mu = behavior_weights(config, mdp);

  ExperimentReport report;
  report.config = config;
  report.estimator_params = estimator->params();
  report.rho_min = bounds.rho_min;
  report.rho_max = bounds.rho_max;
  report.oracle_q.assign(oracle.col(0).data(), oracle.col(0).data() + oracle.rows());
  report.seeds.resize(config.n_seeds);

  parallel_for(config.n_seeds, config.workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    SeedResult& out = report.seeds[i];
    out.index = i;
    out.seed = config.seed + i;
    try {
      const data::TransitionDataset ds = build_dataset(config, mdp, i);
      const auto [train, valid] = data::split(ds, data::kTrainValidRatio, out.seed);
      const RunContext ctx{mdp, policy, train, valid, out.seed, config.step_scale};
      FitOutcome fit = estimator->fit(ctx);
      const auto q = [&fit](std::size_t s, std::size_t a) {
        return fit.q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
      };
      out.rho_hat = evaluation::estimate_policy_value(q, mdp, policy);
      out.rho_true = rho_true;
      out.normalized_error = *evaluation::make_value_estimate(out.rho_hat, rho_true, bounds).normalized_error;
      out.q0_hat = fit.q(0, 0);
      out.q0_true = oracle(0, 0);
      out.q0_abs_error = std::abs(out.q0_hat - out.q0_true);
      out.q0_relative_error = out.q0_abs_error / std::abs(out.q0_true);
      out.projected_rmse = evaluation::projected_rmse(fit.q, oracle, mdp, policy, mu);
      out.validation_metric = fit.validation_metric;
      out.q_values.assign(fit.q.col(0).data(), fit.q.col(0).data() + fit.q.rows());
      out.curve = std::move(fit.curve);
      out.diagnostics = std::move(fit.diagnostics);
      out.abort_reason = std::move(fit.abort_reason);
    } catch (const Error& e) {
      throw SeedFailure(i, e.kind(), e.what());
    } catch (const std::exception& e) {
      throw SeedFailure(i, "error", e.what());
    }
    if (!out.curve.empty()) out.curve_path = "curves/" + config.label + "_seed" + std::to_string(i) + ".csv";
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  if (!config.output.empty()) write_report(report, config.output);
  return report;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "report.json").string());
    out << report_text(report);
  }
  {
    std::ofstream out(dir / "timing.csv", std::ios::binary);
    out << "seed_index,seed,wall_seconds\n";
    for (const auto& s : report.seeds) out << s.index << "," << s.seed << "," << data::format_real(s.wall_seconds) << "\n";
  }
  for (const auto& s : report.seeds) {
    if (s.curve_path.empty()) continue;
    std::filesystem::create_directories((dir / s.curve_path).parent_path());
    neural::save_curve_csv(s.curve, dir / s.curve_path);
  }
}

}  // namespace ivope::harness
