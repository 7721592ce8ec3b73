#include <cmath>

#include "internal.hpp"
#include "ivope/error.hpp"
#include "ivope/neural/estimators.hpp"
#include "ivope/nn/heads.hpp"

namespace ivope::neural {

using namespace detail;

namespace {

struct NextDraw {
  Matrix x;
  std::vector<std::size_t> actions;
  Eigen::VectorXd not_done;
};

/// Stage-1 network outputs for a batch, computed once and reused across draws.
Matrix stage1_output(const TreatmentModel& model, const Problem& p, const EncodedData& d) {
  if (model.kind == TreatmentKind::oracle) return {};
  const InputSpace& in = *model.input;
  if (model.kind == TreatmentKind::categorical) {
    Matrix x(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(in.state_dim()));
    for (std::size_t i = 0; i < d.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = in.state_codes[d.states[i]];
    return model.net->predict(in.q_input(x, d.actions));
  }
  (void)p;
  return model.net->predict(in.q_input(d.x, d.actions));
}

NextDraw draw_next(const TreatmentModel& model, const Problem& p, const EncodedData& d, const Matrix& out,
                   Rng& rng) {
  const auto n = static_cast<Eigen::Index>(d.size());
  NextDraw draw{Matrix(n, static_cast<Eigen::Index>(p.space.state_dim())), std::vector<std::size_t>(d.size(), 0),
                Eigen::VectorXd::Zero(n)};
  const std::vector<bool>& terminal = model.mdp->terminal_mask();
  auto place_state = [&](Eigen::Index i, std::size_t s) {
    draw.x.row(i) = p.space.state_codes[s];
    if (!terminal[s]) {
      draw.not_done(i) = 1.0;
      draw.actions[static_cast<std::size_t>(i)] = p.policy.sample(s, rng);
    }
  };
  switch (model.kind) {
    case TreatmentKind::oracle:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        place_state(i, model.mdp->sample_next(d.states[k], d.actions[k], rng));
      }
      break;
    case TreatmentKind::categorical:
      for (Eigen::Index i = 0; i < n; ++i) place_state(i, nn::sample_categorical(out.row(i), rng));
      break;
    case TreatmentKind::mixture: {
      const std::size_t dim = p.space.state_dim();
      const Eigen::Index width = static_cast<Eigen::Index>(nn::mixture_output_width(model.n_components, dim));
      const nn::MixtureOutput mix =
          nn::split_mixture(nn::Tensor::constant(out.leftCols(width)), model.n_components, dim);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p_done = 1.0 / (1.0 + std::exp(-out(i, width)));
        draw.x.row(i) = nn::sample_mixture(mix, i, rng).transpose();
        if (unit(rng) >= p_done) {
          draw.not_done(i) = 1.0;
          draw.actions[static_cast<std::size_t>(i)] = p.policy.sample(p.space.nearest_state(draw.x.row(i).transpose()), rng);
        }
      }
      break;
    }
  }
  return draw;
}

Matrix stage1_targets(const EncodedData& d) {
  Matrix nd(d.not_done);
  return nd;
}

double treatment_loss_value(const TreatmentModel& model, const EncodedData& d) {
  const InputSpace& in = *model.input;
  if (model.kind == TreatmentKind::categorical) {
    Matrix x(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(in.state_dim()));
    for (std::size_t i = 0; i < d.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = in.state_codes[d.states[i]];
    const nn::Tensor logits = nn::Tensor::constant(model.net->predict(in.q_input(x, d.actions)));
    return categorical_treatment_loss(logits, d.next_states).item();
  }
  const nn::Tensor raw = nn::Tensor::constant(model.net->predict(in.q_input(d.x, d.actions)));
  return mixture_treatment_loss(raw, model.n_components, d.x_next, stage1_targets(d)).item();
}

}  // namespace

TreatmentModel fit_treatment(const Problem& p, const env::TabularMdp& mdp, const TreatmentConfig& config) {
  const CommonConfig& c = config.common;
  if (config.kind == TreatmentKind::oracle) return oracle_treatment(mdp);
  TreatmentModel model;
  model.kind = config.kind;
  model.mdp = &mdp;
  model.n_components = config.n_components;
  const bool categorical = config.kind == TreatmentKind::categorical;
  if (!categorical && config.n_components == 0) throw InvalidArgument("mixture needs at least one component");
  model.input = categorical ? one_hot_input_space(mdp) : p.space;
  const InputSpace& in = *model.input;

  nn::MlpSpec spec;
  spec.layer_sizes.push_back(in.input_dim());
  spec.layer_sizes.insert(spec.layer_sizes.end(), c.hidden.begin(), c.hidden.end());
  spec.layer_sizes.push_back(categorical ? mdp.n_states()
                                         : nn::mixture_output_width(config.n_components, in.state_dim()) + 1);
  spec.activation = c.activation;
  spec.layer_norm = c.layer_norm;
  Rng init = make_rng(c.seed, Stream::init, 10);
  model.net.emplace(spec, init);

  // The categorical model encodes (s, a) in its own one-hot space, the mixture
  // model in the Q input space; next-state targets always use the Q encoding.
  const EncodedData train = encode(p.train, p.space);
  const EncodedData valid = encode(p.valid, p.space);
  auto stage1_input = [&](const EncodedData& d) {
    if (!categorical) return in.q_input(d.x, d.actions);
    Matrix x(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(in.state_dim()));
    for (std::size_t i = 0; i < d.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = in.state_codes[d.states[i]];
    return in.q_input(x, d.actions);
  };

  nn::Optimizer opt(config.optimizer, model.net->parameters());
  BatchSampler sampler(train.size(), c.batch_size, c.seed, 10);
  double last = 0.0;
  for (std::size_t step = 0; step < c.n_steps; ++step) {
    const EncodedData b = train.gather(sampler.next());
    const nn::Tensor out = model.net->forward(nn::Tensor::constant(stage1_input(b)));
    const nn::Tensor loss = categorical ? categorical_treatment_loss(out, b.next_states)
                                        : mixture_treatment_loss(out, config.n_components, b.x_next,
                                                                 stage1_targets(b));
    last = loss.item();
    require_finite(last, step, "treatment loss");
    if (c.log_interval > 0 && step % c.log_interval == 0) {
      model.curve.push_back({step, last, treatment_loss_value(model, valid), 0.0});
    }
    opt.step(nn::gradient(loss, model.net->parameters()));
  }
  model.valid_log_likelihood = -treatment_loss_value(model, valid);
  if (c.log_interval > 0) model.curve.push_back({c.n_steps, last, -model.valid_log_likelihood, 0.0});
  return model;
}

TreatmentModel oracle_treatment(const env::TabularMdp& mdp) {
  TreatmentModel model;
  model.kind = TreatmentKind::oracle;
  model.mdp = &mdp;
  return model;
}

Eigen::VectorXd next_state_distribution(const TreatmentModel& model, std::size_t state, std::size_t action) {
  if (model.kind == TreatmentKind::oracle) {
    const auto row = model.mdp->transition_row(state, action);
    return Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  }
  if (model.kind != TreatmentKind::categorical) throw InvalidArgument("mixture models have no tabular distribution");
  const InputSpace& in = *model.input;
  Matrix x = in.state_codes.at(state).transpose();
  const Eigen::RowVectorXd logits = model.net->predict(in.q_input(x, {action})).row(0);
  const Eigen::RowVectorXd w = (logits.array() - logits.maxCoeff()).exp();
  return (w / w.sum()).transpose();
}

namespace {

double stage2_objective(const nn::Mlp& net, const TreatmentModel& model, const Problem& p, const EncodedData& d,
                        std::size_t n_mc, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::evaluation, 3);
  const Matrix out = stage1_output(model, p, d);
  const Eigen::VectorXd q = net.predict(p.space.q_input(d.x, d.actions)).col(0);
  Eigen::VectorXd boot = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.size()));
  for (std::size_t m = 0; m < n_mc; ++m) {
    const NextDraw draw = draw_next(model, p, d, out, rng);
    boot += net.predict(p.space.q_input(draw.x, draw.actions)).col(0).cwiseProduct(draw.not_done);
  }
  boot /= static_cast<double>(n_mc);
  return (d.reward - q + p.discount * boot).squaredNorm() / static_cast<double>(d.size());
}

}  // namespace

FitResult fit_deep_iv(const Problem& p, const TreatmentModel& model, const DeepIvConfig& config) {
  const CommonConfig& c = config.common;
  if (config.n_mc_samples == 0) throw InvalidArgument("n_mc_samples must be positive");
  if (model.mdp == nullptr) throw InvalidArgument("treatment model carries no MDP");
  if (model.kind != TreatmentKind::oracle && !model.net) throw InvalidArgument("treatment model is not fitted");
  const EncodedData train = encode(p.train, p.space);
  const EncodedData valid = encode(p.valid, p.space);
  Rng init = make_rng(c.seed, Stream::init, 0);
  nn::Mlp net(q_network_spec(p.space, c), init);
  nn::Optimizer opt(config.optimizer, net.parameters());
  BatchSampler sampler(train.size(), c.batch_size, c.seed);
  Rng act = make_rng(c.seed, Stream::target_actions, 102);

  std::vector<CurvePoint> curve;
  CurveLogger logger(p, c, curve);
  double last = 0.0;
  for (std::size_t step = 0; step < c.n_steps; ++step) {
    const EncodedData b = train.gather(sampler.next());
    const Matrix out = stage1_output(model, p, b);
    std::vector<nn::Tensor> samples;
    Matrix nd(static_cast<Eigen::Index>(b.size()), static_cast<Eigen::Index>(config.n_mc_samples));
    for (std::size_t m = 0; m < config.n_mc_samples; ++m) {
      const NextDraw draw = draw_next(model, p, b, out, act);
      samples.push_back(net.forward(input_tensor(p.space, draw.x, draw.actions)));
      nd.col(static_cast<Eigen::Index>(m)) = draw.not_done;
    }
    const nn::Tensor q = net.forward(input_tensor(p.space, b.x, b.actions));
    const nn::Tensor loss = deep_iv_stage2_loss(q, nn::concat_cols(samples), nd, column(b.reward), p.discount);
    last = loss.item();
    require_finite(last, step, "Deep IV loss");
    if (logger.due(step)) {
      logger.record(step, last, stage2_objective(net, model, p, valid, config.n_mc_samples, c.seed),
                    logger.value(net));
    }
    opt.step(nn::gradient(loss, net.parameters()));
  }
  const double metric = stage2_objective(net, model, p, valid, config.n_mc_samples, c.seed);
  if (logger.due(c.n_steps)) logger.record(c.n_steps, last, metric, logger.value(net));
  FitResult result{NeuralQ(p.space, std::move(net)), std::move(curve), metric, {}, {}, std::nullopt};
  if (model.kind != TreatmentKind::oracle) result.diagnostics["stage1_valid_log_likelihood"] = model.valid_log_likelihood;
  return result;
}

}  // namespace ivope::neural
