#include "internal.hpp"
#include "ivope/error.hpp"
#include "ivope/linalg.hpp"
#include "ivope/neural/estimators.hpp"

namespace ivope::neural {

using namespace detail;

namespace {

nn::MlpSpec feature_spec(const InputSpace& space, const std::vector<std::size_t>& hidden, const CommonConfig& c) {
  if (hidden.empty()) throw InvalidArgument("feature networks need at least one hidden layer");
  nn::MlpSpec spec;
  spec.layer_sizes.push_back(space.input_dim());
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.activation = c.activation;
  spec.layer_norm = c.layer_norm;
  spec.activate_output = true;
  return spec;
}

Matrix with_ones(const Matrix& m) {
  Matrix out(m.rows(), m.cols() + 1);
  out << m, Matrix::Ones(m.rows(), 1);
  return out;
}

/// phi(s, a) - g nd phi(s', a') with the ones column appended to each feature.
nn::Tensor feature_target(const nn::Mlp& value_net, const InputSpace& space, const EncodedData& b,
                          const std::vector<std::size_t>& next_actions, double discount) {
  const nn::Tensor phi = nn::append_ones(value_net.forward(input_tensor(space, b.x, b.actions)));
  const nn::Tensor phi_next = nn::append_ones(value_net.forward(input_tensor(space, b.x_next, next_actions)));
  return phi - discount * nn::mul_col(phi_next, nn::Tensor::constant(column(b.not_done)));
}

/// The value network with theta as a final linear layer.
nn::Mlp absorb_theta(const nn::Mlp& value_net, const Eigen::VectorXd& theta) {
  nn::MlpSpec spec = value_net.spec();
  const std::size_t d = spec.layer_sizes.back();
  if (static_cast<std::size_t>(theta.size()) != d + 1) throw InvalidArgument("theta width differs from features");
  spec.layer_sizes.push_back(1);
  spec.activate_output = false;
  Rng unused(0);
  nn::Mlp q(spec, unused);
  std::vector<Matrix> values = value_net.values();
  values.push_back(theta.head(static_cast<Eigen::Index>(d)));
  values.push_back(Matrix::Constant(1, 1, theta(static_cast<Eigen::Index>(d))));
  q.set_values(values);
  return q;
}

double stage2_error(const nn::Mlp& value_net, const nn::Mlp& instrument_net, const DfivSolution& sol,
                    const InputSpace& space, const EncodedData& d) {
  (void)value_net;
  const Matrix psi = with_ones(instrument_net.predict(space.q_input(d.x, d.actions)));
  return (d.reward - psi * sol.v * sol.theta).squaredNorm() / static_cast<double>(d.size());
}

}  // namespace

DfivSolution dfiv_closed_form(const nn::Mlp& value_net, const nn::Mlp& instrument_net, const EncodedData& data,
                              const InputSpace& space, const env::Policy& policy, double discount, double lambda1,
                              double lambda2, std::uint64_t action_seed) {
  Rng rng = make_rng(action_seed, Stream::target_actions, 103);
  const auto next_actions = sample_actions(policy, data.next_states, data.not_done, rng);
  const Matrix phi = with_ones(value_net.predict(space.q_input(data.x, data.actions)));
  const Matrix phi_next = with_ones(value_net.predict(space.q_input(data.x_next, next_actions)));
  const Matrix target = phi - discount * (data.not_done.asDiagonal() * phi_next);
  const Matrix psi = with_ones(instrument_net.predict(space.q_input(data.x, data.actions)));
  DfivSolution sol;
  sol.v = linalg::ridge(psi, target, lambda1);
  sol.theta = linalg::ridge(psi * sol.v, column(data.reward), lambda2).col(0);
  return sol;
}

DfivFit fit_dfiv(const Problem& p, const DfivConfig& config) {
  const CommonConfig& c = config.common;
  const EncodedData train = encode(p.train, p.space);
  const EncodedData valid = encode(p.valid, p.space);
  Rng init = make_rng(c.seed, Stream::init, 0);
  nn::Mlp value_net(feature_spec(p.space, c.hidden, c), init);
  nn::Mlp instrument_net(feature_spec(p.space, config.instrument_hidden, c), init);
  nn::Optimizer value_opt(config.value_optimizer, value_net.parameters());
  nn::Optimizer instrument_opt(config.instrument_optimizer, instrument_net.parameters());
  BatchSampler stage1_batches(train.size(), c.batch_size, c.seed, 0);
  BatchSampler stage2_batches(train.size(), c.batch_size, c.seed, 1);
  Rng act = make_rng(c.seed, Stream::target_actions, 104);

  std::vector<CurvePoint> curve;
  CurveLogger logger(p, c, curve);
  auto log_point = [&](std::size_t step, double loss) {
    const DfivSolution sol = dfiv_closed_form(value_net, instrument_net, train, p.space, p.policy, p.discount,
                                              config.lambda1, config.lambda2, c.seed);
    logger.record(step, loss, stage2_error(value_net, instrument_net, sol, p.space, valid),
                  logger.value(absorb_theta(value_net, sol.theta)));
  };

  double last = 0.0;
  for (std::size_t step = 0; step < c.n_steps; ++step) {
    const EncodedData b1 = train.gather(stage1_batches.next());
    const EncodedData b2 = train.gather(stage2_batches.next());
    const auto next1 = sample_actions(p.policy, b1.next_states, b1.not_done, act);

    // Instrument step: fit psi to the current (fixed) feature target.
    const nn::Tensor target = feature_target(value_net, p.space, b1, next1, p.discount);
    {
      const nn::Tensor psi1 = nn::append_ones(instrument_net.forward(input_tensor(p.space, b1.x, b1.actions)));
      nn::Tensor loss1 = dfiv_stage1(psi1, nn::detach(target), config.lambda1).loss;
      if (config.instrument_l2 > 0.0) loss1 = loss1 + config.instrument_l2 * instrument_net.l2();
      require_finite(loss1.item(), step, "DFIV stage-1 loss");
      instrument_opt.step(nn::gradient(loss1, instrument_net.parameters()));
    }

    // Value step: differentiate the stage-2 loss through V-hat(phi) and theta.
    const nn::Tensor psi1 = nn::Tensor::constant(with_ones(instrument_net.predict(p.space.q_input(b1.x, b1.actions))));
    const nn::Tensor psi2 = nn::Tensor::constant(with_ones(instrument_net.predict(p.space.q_input(b2.x, b2.actions))));
    const DfivStage1 st1 = dfiv_stage1(psi1, target, config.lambda1);
    const DfivStage2 st2 = dfiv_stage2(psi2, st1.v, column(b2.reward), config.lambda2);
    nn::Tensor loss2 = st2.loss;
    if (config.value_l2 > 0.0) loss2 = loss2 + config.value_l2 * value_net.l2();
    last = st2.loss.item();
    require_finite(last, step, "DFIV stage-2 loss");
    if (logger.due(step)) log_point(step, last);
    value_opt.step(nn::gradient(loss2, value_net.parameters()));
  }

  const DfivSolution sol = dfiv_closed_form(value_net, instrument_net, train, p.space, p.policy, p.discount,
                                            config.lambda1, config.lambda2, c.seed);
  const double metric = stage2_error(value_net, instrument_net, sol, p.space, valid);
  nn::Mlp q_net = absorb_theta(value_net, sol.theta);
  if (logger.due(c.n_steps)) logger.record(c.n_steps, last, metric, logger.value(q_net));
  FitResult fit{NeuralQ(p.space, std::move(q_net)), std::move(curve), metric, {}, {}, std::nullopt};
  return DfivFit{std::move(fit), std::move(value_net), std::move(instrument_net), sol.v, sol.theta};
}

}  // namespace ivope::neural
