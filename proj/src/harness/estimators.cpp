#include "ivope/harness/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "ivope/evaluation.hpp"
#include "ivope/features.hpp"
#include "ivope/linear_estimators.hpp"
#include "ivope/neural/estimators.hpp"
#include "ivope/rng.hpp"

namespace ivope::harness {

std::size_t scaled_steps(std::size_t base, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(base) * scale)));
}

double td_objective(const env::QTable& q, const data::TransitionDataset& ds, const env::Policy& policy,
                    double discount, std::uint64_t seed) {
  if (ds.empty()) return 0.0;
  const auto next = linear::draw_next_actions(ds, policy, seed, 7);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto s = static_cast<Eigen::Index>(ds.state_index(i));
    double e = ds.reward(i) - q(s, static_cast<Eigen::Index>(ds.action(i)));
    if (!ds.terminal(i)) e += discount * q(static_cast<Eigen::Index>(ds.next_state_index(i)), static_cast<Eigen::Index>(next[i]));
    total += e * e;
  }
  return total / static_cast<double>(ds.size());
}

namespace {

Eigen::MatrixXd train_positions(const env::TabularMdp& mdp, const data::TransitionDataset& ds) {
  Eigen::MatrixXd pos(static_cast<Eigen::Index>(ds.size()), 1);
  for (std::size_t i = 0; i < ds.size(); ++i) pos(static_cast<Eigen::Index>(i), 0) = mdp.position(ds.state_index(i));
  return pos;
}

// ---- linear -------------------------------------------------------------

struct FeatureSpec {
  std::string kind = "gaussian_grid";
  std::size_t dim = 90;
  double width = 0.1;
  std::optional<double> bandwidth;

  static FeatureSpec parse(const Json& j, const std::string& where, Json& echo) {
    FeatureSpec f;
    if (j.is_null()) {
      echo = Json{{"kind", f.kind}, {"dim", f.dim}, {"width", f.width}};
      return f;
    }
    JsonFields r(j, where);
    f.kind = r.get<std::string>("kind", f.kind);
    if (f.kind == "gaussian_grid") {
      f.dim = r.count("dim", f.dim);
      f.width = r.get<double>("width", f.width);
      if (f.dim == 0 || !(f.width > 0.0)) throw ConfigError(where + ": dim and width must be positive");
    } else if (f.kind == "rff") {
      f.dim = r.count("dim", 512);
      const Json& bw = r.raw("bandwidth");
      if (!bw.is_null() && bw != "median") {
        if (!bw.is_number() || !(bw.get<double>() > 0.0)) throw ConfigError(where + ".bandwidth: expected a positive number");
        f.bandwidth = bw.get<double>();
      }
      r.record("bandwidth", f.bandwidth ? Json(*f.bandwidth) : Json("median"));
      if (f.dim == 0) throw ConfigError(where + ".dim must be positive");
    } else if (f.kind != "tabular") {
      throw ConfigError(where + ".kind: expected gaussian_grid, rff or tabular, got '" + f.kind + "'");
    }
    r.finish();
    echo = r.echo();
    return f;
  }

  features::FeatureMap build(const env::TabularMdp& mdp, const data::TransitionDataset& train, std::uint64_t seed,
                             std::uint64_t index) const {
    if (kind == "tabular") return features::state_action_features(features::tabular_features(mdp.terminal_mask()),
                                                                  mdp.n_actions());
    features::FeatureMap inner = [&] {
      if (kind == "gaussian_grid") return features::gaussian_grid_features(dim, width);
      const double bw = bandwidth ? *bandwidth : features::median_heuristic_bandwidth(train_positions(mdp, train), seed);
      return features::rff_features(features::RffSpec::sample(dim, 1, bw, derive_seed(seed, Stream::features, index)));
    }();
    return features::state_action_features(features::embed_states(inner, mdp.positions()), mdp.n_actions());
  }
};

FitOutcome linear_outcome(const linear::LinearQ& q, const RunContext& ctx) {
  FitOutcome out;
  out.q = q.table(ctx.mdp.n_states(), ctx.mdp.n_actions());
  out.validation_metric = td_objective(out.q, ctx.valid, ctx.policy, ctx.mdp.discount(), ctx.seed);
  return out;
}

class LinearEstimator : public Estimator {
 public:
  LinearEstimator(std::string name, const Json& params) : name_(std::move(name)) {
    JsonFields r(params.is_null() ? Json::object() : params, "estimator.params");
    Json feature_echo;
    features_ = FeatureSpec::parse(r.raw("features"), "estimator.params.features", feature_echo);
    r.record("features", feature_echo);
    if (name_ != "dbrm_linear") ridge_ = r.get<double>("ridge", 0.0);
    if (name_ == "fqe_linear") iterations_ = r.count("n_iterations", 500);
    if (ridge_ < 0.0) throw ConfigError("estimator.params.ridge must be non-negative");
    r.finish();
    echo_ = r.echo();
  }
  std::string name() const override { return name_; }
  Json params() const override { return echo_; }

  FitOutcome fit(const RunContext& ctx) const override {
    const auto phi = features_.build(ctx.mdp, ctx.train, ctx.seed, 0);
    const linear::LinearOptions opt{ctx.mdp.discount(), ctx.seed, ridge_};
    if (name_ == "lstd") return linear_outcome(linear::lstd_q(ctx.train, ctx.policy, phi, opt), ctx);
    if (name_ == "dbrm_linear") return linear_outcome(linear::linear_dbrm(ctx.train, ctx.policy, phi, opt), ctx);
    std::vector<neural::CurvePoint> curve;
    auto observe = [&](std::size_t k, const Eigen::VectorXd& theta) {
      const linear::LinearQ qk(phi, theta);
      const double v = evaluation::estimate_policy_value([&](std::size_t s, std::size_t a) { return qk.q(s, a); },
                                                         ctx.mdp, ctx.policy);
      curve.push_back({k, 0.0, 0.0, v});
    };
    FitOutcome out = linear_outcome(linear::linear_fqe(ctx.train, ctx.policy, phi, iterations_, opt, observe), ctx);
    out.curve = std::move(curve);
    return out;
  }

 private:
  std::string name_;
  FeatureSpec features_;
  double ridge_ = 0.0;
  std::size_t iterations_ = 500;
  Json echo_;
};

class KivEstimator : public Estimator {
 public:
  explicit KivEstimator(const Json& params) {
    JsonFields r(params.is_null() ? Json::object() : params, "estimator.params");
    n_features_ = r.count("n_features", 512);
    lambda1_ = r.get<double>("lambda1", 1e-4);
    lambda2_ = r.get<double>("lambda2", 1e-4);
    const Json& bw = r.raw("bandwidth");
    if (!bw.is_null() && bw != "median") {
      if (!bw.is_number() || !(bw.get<double>() > 0.0)) throw ConfigError("estimator.params.bandwidth: expected a positive number");
      bandwidth_ = bw.get<double>();
    }
    r.record("bandwidth", bandwidth_ ? Json(*bandwidth_) : Json("median"));
    if (n_features_ == 0 || !(lambda1_ > 0.0) || !(lambda2_ > 0.0))
      throw ConfigError("estimator.params: n_features, lambda1 and lambda2 must be positive");
    r.finish();
    echo_ = r.echo();
  }
  std::string name() const override { return "kiv"; }
  Json params() const override { return echo_; }

  FitOutcome fit(const RunContext& ctx) const override {
    FeatureSpec rff;
    rff.kind = "rff";
    rff.dim = n_features_;
    rff.bandwidth = bandwidth_;
    const auto phi = rff.build(ctx.mdp, ctx.train, ctx.seed, 1);
    const auto psi = rff.build(ctx.mdp, ctx.train, ctx.seed, 2);
    const linear::KivFit fit =
        linear::kernel_iv(ctx.train, ctx.policy, phi, psi, {ctx.mdp.discount(), ctx.seed, lambda1_, lambda2_});
    FitOutcome out;
    out.q = fit.q.table(ctx.mdp.n_states(), ctx.mdp.n_actions());
    out.validation_metric = linear::kiv_stage2_loss(fit, ctx.valid, ctx.policy, psi, ctx.mdp.discount(), ctx.seed);
    return out;
  }

 private:
  std::size_t n_features_ = 512;
  double lambda1_ = 1e-4;
  double lambda2_ = 1e-4;
  std::optional<double> bandwidth_;
  Json echo_;
};

// ---- neural -------------------------------------------------------------

struct CommonSpec {
  std::optional<std::size_t> n_steps;
  std::size_t base_steps = kTwoStageSteps;
  std::size_t batch_size = kDefaultBatch;
  std::vector<std::size_t> hidden = {50, 50};
  nn::Activation activation = nn::Activation::relu;
  bool layer_norm = false;
  std::size_t log_interval = 100;

  static CommonSpec parse(JsonFields& r, std::size_t base_steps, std::size_t batch) {
    CommonSpec c;
    c.base_steps = base_steps;
    const Json& steps = r.raw("n_steps");
    if (!steps.is_null() && steps != "default") c.n_steps = as_count(steps, r.path("n_steps"));
    r.record("n_steps", c.n_steps ? Json(*c.n_steps) : Json("default"));
    c.batch_size = r.count("batch_size", batch);
    c.hidden = r.counts("hidden", c.hidden);
    const auto act = r.get<std::string>("activation", "relu");
    try {
      c.activation = nn::parse_activation(act);
    } catch (const InvalidArgument& e) {
      throw ConfigError(r.path("activation") + ": " + e.what());
    }
    c.layer_norm = r.get<bool>("layer_norm", false);
    c.log_interval = r.count("log_interval", 100);
    if (c.batch_size == 0) throw ConfigError(r.path("batch_size") + " must be positive");
    return c;
  }

  neural::CommonConfig build(const RunContext& ctx) const {
    neural::CommonConfig c;
    c.seed = ctx.seed;
    c.n_steps = n_steps ? *n_steps : scaled_steps(base_steps, ctx.step_scale);
    c.batch_size = batch_size;
    c.hidden = hidden;
    c.activation = activation;
    c.layer_norm = layer_norm;
    c.log_interval = log_interval;
    return c;
  }
};

double positive(JsonFields& r, const std::string& key, double fallback, bool allow_zero = false) {
  const double v = r.get<double>(key, fallback);
  if (!(allow_zero ? v >= 0.0 : v > 0.0)) throw ConfigError(r.path(key) + " must be " + (allow_zero ? "non-negative" : "positive"));
  return v;
}

neural::Problem make_problem(const RunContext& ctx) {
  return neural::Problem{ctx.train, ctx.valid, ctx.policy, neural::positional_input_space(ctx.mdp), ctx.mdp.discount(),
                         &ctx.mdp};
}

FitOutcome neural_outcome(neural::FitResult&& fit, const RunContext& ctx) {
  FitOutcome out;
  out.q = fit.q.table(ctx.mdp.n_states(), ctx.mdp.n_actions());
  out.validation_metric = fit.validation_metric;
  out.curve = std::move(fit.curve);
  out.diagnostics = std::move(fit.diagnostics);
  out.abort_reason = std::move(fit.abort_reason);
  return out;
}

class DbrmFqeEstimator : public Estimator {
 public:
  DbrmFqeEstimator(std::string name, const Json& params) : name_(std::move(name)) {
    JsonFields r(params.is_null() ? Json::object() : params, "estimator.params");
    common_ = CommonSpec::parse(r, kTwoStageSteps, kDefaultBatch);
    optimizer_.learning_rate = positive(r, "learning_rate", 1e-3, true);
    if (name_ == "fqe") target_period_ = r.count("target_update_period", 50);
    if (target_period_ == 0) throw ConfigError("estimator.params.target_update_period must be positive");
    r.finish();
    echo_ = r.echo();
  }
  std::string name() const override { return name_; }
  Json params() const override { return echo_; }
  FitOutcome fit(const RunContext& ctx) const override {
    const neural::Problem p = make_problem(ctx);
    if (name_ == "dbrm") return neural_outcome(neural::fit_dbrm_neural(p, {common_.build(ctx), optimizer_}), ctx);
    return neural_outcome(neural::fit_fqe(p, {common_.build(ctx), optimizer_, target_period_}), ctx);
  }

 private:
  std::string name_;
  CommonSpec common_;
  nn::OptimizerConfig optimizer_{};
  std::size_t target_period_ = 50;
  Json echo_;
};

struct Stage1Spec {
  neural::TreatmentKind kind = neural::TreatmentKind::categorical;
  CommonSpec common;
  double learning_rate = 1e-3;
  std::size_t n_components = 3;

  static Stage1Spec parse(const Json& j, Json& echo) {
    Stage1Spec s;
    JsonFields r(j.is_null() ? Json::object() : j, "estimator.params.stage1");
    const auto kind = r.get<std::string>("kind", "categorical");
    if (kind == "categorical") s.kind = neural::TreatmentKind::categorical;
    else if (kind == "mixture") s.kind = neural::TreatmentKind::mixture;
    else if (kind == "oracle") s.kind = neural::TreatmentKind::oracle;
    else throw ConfigError("estimator.params.stage1.kind: expected categorical, mixture or oracle");
    const bool explicit_hidden = r.has("hidden");
    s.common = CommonSpec::parse(r, kTwoStageSteps, kDefaultBatch);
    if (!explicit_hidden) {
      s.common.hidden = {64, 64};
      r.record("hidden", s.common.hidden);
    }
    s.learning_rate = positive(r, "learning_rate", 1e-3, true);
    s.n_components = r.count("n_components", 3);
    if (s.n_components == 0) throw ConfigError("estimator.params.stage1.n_components must be positive");
    r.finish();
    echo = r.echo();
    return s;
  }

  neural::TreatmentModel fit(const neural::Problem& p, const RunContext& ctx) const {
    neural::TreatmentConfig t;
    t.common = common.build(ctx);
    t.optimizer.learning_rate = learning_rate;
    t.kind = kind;
    t.n_components = n_components;
    return neural::fit_treatment(p, ctx.mdp, t);
  }
};

class DeepIvEstimator : public Estimator {
 public:
  explicit DeepIvEstimator(const Json& params) {
    JsonFields r(params.is_null() ? Json::object() : params, "estimator.params");
    Json stage1_echo;
    stage1_ = Stage1Spec::parse(r.raw("stage1"), stage1_echo);
    r.record("stage1", stage1_echo);
    common_ = CommonSpec::parse(r, kTwoStageSteps, kDefaultBatch);
    optimizer_.learning_rate = positive(r, "learning_rate", 1e-3, true);
    n_mc_ = r.count("n_mc_samples", 3);
    if (n_mc_ == 0) throw ConfigError("estimator.params.n_mc_samples must be positive");
    r.finish();
    echo_ = r.echo();
  }
  std::string name() const override { return "deep_iv"; }
  Json params() const override { return echo_; }
  const Stage1Spec& stage1() const { return stage1_; }

  FitOutcome fit(const RunContext& ctx) const override {
    const neural::Problem p = make_problem(ctx);
    const neural::TreatmentModel model = stage1_.fit(p, ctx);
    return neural_outcome(neural::fit_deep_iv(p, model, {common_.build(ctx), optimizer_, n_mc_}), ctx);
  }

 private:
  Stage1Spec stage1_;
  CommonSpec common_;
  nn::OptimizerConfig optimizer_{};
  std::size_t n_mc_ = 3;
  Json echo_;
};

class DfivEstimator : public Estimator {
 public:
  explicit DfivEstimator(const Json& params) {
    JsonFields r(params.is_null() ? Json::object() : params, "estimator.params");
    common_ = CommonSpec::parse(r, kTwoStageSteps, kDfivBatch);
    cfg_.instrument_hidden = r.counts("instrument_hidden", cfg_.instrument_hidden);
    cfg_.lambda1 = positive(r, "lambda1", cfg_.lambda1);
    cfg_.lambda2 = positive(r, "lambda2", cfg_.lambda2);
    cfg_.value_l2 = positive(r, "value_l2", 0.0, true);
    cfg_.instrument_l2 = positive(r, "instrument_l2", 0.0, true);
    cfg_.value_optimizer.learning_rate = positive(r, "value_learning_rate", 1e-3, true);
    cfg_.instrument_optimizer.learning_rate = positive(r, "instrument_learning_rate", 1e-3, true);
    if (common_.hidden.empty() || cfg_.instrument_hidden.empty())
      throw ConfigError("estimator.params: DFIV feature networks need at least one hidden layer");
    r.finish();
    echo_ = r.echo();
  }
  std::string name() const override { return "dfiv"; }
  Json params() const override { return echo_; }
  FitOutcome fit(const RunContext& ctx) const override {
    neural::DfivConfig cfg = cfg_;
    cfg.common = common_.build(ctx);
    neural::DfivFit fit = neural::fit_dfiv(make_problem(ctx), cfg);
    return neural_outcome(std::move(fit.fit), ctx);
  }

 private:
  CommonSpec common_;
  neural::DfivConfig cfg_;
  Json echo_;
};

class AdversarialEstimator : public Estimator {
 public:
  AdversarialEstimator(const std::string& name, const Json& params) {
    cfg_.method = neural::parse_adversarial_method(name);
    JsonFields r(params.is_null() ? Json::object() : params, "estimator.params");
    common_ = CommonSpec::parse(r, kAdversarialSteps, kDefaultBatch);
    cfg_.g_hidden = r.counts("g_hidden", cfg_.g_hidden);
    cfg_.optimizer.learning_rate = positive(r, "learning_rate", cfg_.optimizer.learning_rate, true);
    cfg_.g_lr_multiplier = positive(r, "g_lr_multiplier", 1.0);
    const auto betas = r.get<std::vector<double>>("betas", {cfg_.optimizer.beta1, cfg_.optimizer.beta2});
    if (betas.size() != 2 || betas[0] < 0.0 || betas[0] >= 1.0 || betas[1] < 0.0 || betas[1] >= 1.0)
      throw ConfigError("estimator.params.betas: expected two values in [0, 1)");
    cfg_.optimizer.beta1 = betas[0];
    cfg_.optimizer.beta2 = betas[1];
    const auto opt = r.get<std::string>("optimizer", "oadam");
    try {
      cfg_.optimizer.kind = nn::parse_optimizer(opt);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("estimator.params.optimizer: ") + e.what());
    }
    if (cfg_.method != neural::AdversarialMethod::deepgmm) {
      cfg_.constants.a = positive(r, "a", 0.0, true);
      cfg_.constants.b = positive(r, "b", 0.0, true);
    }
    if (cfg_.method == neural::AdversarialMethod::asem) cfg_.constants.alpha = positive(r, "alpha", 0.0, true);
    cfg_.checkpoint_interval = r.count("checkpoint_interval", cfg_.checkpoint_interval);
    cfg_.max_checkpoints = r.count("max_checkpoints", cfg_.max_checkpoints);
    cfg_.use_selected_checkpoint = r.get<bool>("use_selected_checkpoint", false);
    if (cfg_.checkpoint_interval == 0 || cfg_.max_checkpoints == 0)
      throw ConfigError("estimator.params: checkpoint_interval and max_checkpoints must be positive");
    r.finish();
    echo_ = r.echo();
  }
  std::string name() const override { return neural::to_string(cfg_.method); }
  Json params() const override { return echo_; }
  const neural::AdversarialConfig& config() const { return cfg_; }
  FitOutcome fit(const RunContext& ctx) const override {
    neural::AdversarialConfig cfg = cfg_;
    cfg.common = common_.build(ctx);
    return neural_outcome(neural::fit_adversarial(make_problem(ctx), cfg), ctx);
  }

 private:
  CommonSpec common_;
  neural::AdversarialConfig cfg_;
  Json echo_;
};

}  // namespace

std::vector<std::string> estimator_names() {
  return {"lstd", "dbrm_linear", "fqe_linear", "kiv", "dbrm", "fqe", "deep_iv", "dfiv", "deepgmm", "agmm", "asem"};
}

bool is_linear_estimator(const std::string& name) {
  return name == "lstd" || name == "dbrm_linear" || name == "fqe_linear";
}

bool is_adversarial_estimator(const std::string& name) {
  return name == "deepgmm" || name == "agmm" || name == "asem";
}

std::unique_ptr<Estimator> make_estimator(const std::string& name, const Json& params) {
  if (!params.is_null() && !params.is_object()) throw ConfigError("estimator.params: expected an object");
  if (is_linear_estimator(name)) return std::make_unique<LinearEstimator>(name, params);
  if (name == "kiv") return std::make_unique<KivEstimator>(params);
  if (name == "dbrm" || name == "fqe") return std::make_unique<DbrmFqeEstimator>(name, params);
  if (name == "deep_iv") return std::make_unique<DeepIvEstimator>(params);
  if (name == "dfiv") return std::make_unique<DfivEstimator>(params);
  if (is_adversarial_estimator(name)) return std::make_unique<AdversarialEstimator>(name, params);
  std::string known;
  for (const auto& n : estimator_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown estimator '" + name + "' (known: " + known + ")");
}

double deep_iv_stage1_metric(const Json& params, const RunContext& ctx) {
  const DeepIvEstimator est(params);
  const neural::Problem p = make_problem(ctx);
  return -est.stage1().fit(p, ctx).valid_log_likelihood;
}

}  // namespace ivope::harness
