#include "internal.hpp"
#include "ivope/neural/estimators.hpp"

namespace ivope::neural {

using namespace detail;

namespace {

double dbrm_objective(const nn::Mlp& net, const Problem& p, const EncodedData& d, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::evaluation, 1);
  const auto a1 = sample_actions(p.policy, d.next_states, d.not_done, rng);
  const auto a2 = sample_actions(p.policy, d.next_states, d.not_done, rng);
  const Eigen::VectorXd q = net.predict(p.space.q_input(d.x, d.actions)).col(0);
  const Eigen::VectorXd q1 = net.predict(p.space.q_input(d.x_next, a1)).col(0);
  const Eigen::VectorXd q2 = net.predict(p.space.q_input(d.x_next, a2)).col(0);
  const Eigen::VectorXd boot = p.discount * d.not_done;
  const Eigen::VectorXd r1 = d.reward - q + boot.cwiseProduct(q1);
  const Eigen::VectorXd r2 = d.reward - q + boot.cwiseProduct(q2);
  return r1.cwiseProduct(r2).mean();
}

}  // namespace

FitResult fit_dbrm_neural(const Problem& p, const DbrmConfig& config) {
  const CommonConfig& c = config.common;
  const EncodedData train = encode(p.train, p.space);
  const EncodedData valid = encode(p.valid, p.space);
  Rng init = make_rng(c.seed, Stream::init, 0);
  nn::Mlp net(q_network_spec(p.space, c), init);
  nn::Optimizer opt(config.optimizer, net.parameters());
  BatchSampler sampler(train.size(), c.batch_size, c.seed);
  Rng act = make_rng(c.seed, Stream::target_actions, 100);

  std::vector<CurvePoint> curve;
  CurveLogger logger(p, c, curve);
  double last = 0.0;
  for (std::size_t step = 0; step < c.n_steps; ++step) {
    const EncodedData b = train.gather(sampler.next());
    const auto a1 = sample_actions(p.policy, b.next_states, b.not_done, act);
    const auto a2 = sample_actions(p.policy, b.next_states, b.not_done, act);
    const nn::Tensor q = net.forward(input_tensor(p.space, b.x, b.actions));
    const nn::Tensor q1 = net.forward(input_tensor(p.space, b.x_next, a1));
    const nn::Tensor q2 = net.forward(input_tensor(p.space, b.x_next, a2));
    const nn::Tensor loss = dbrm_loss(q, q1, q2, column(b.reward), column(b.not_done), p.discount);
    last = loss.item();
    require_finite(last, step, "DBRM loss");
    if (logger.due(step)) logger.record(step, last, dbrm_objective(net, p, valid, c.seed), logger.value(net));
    opt.step(nn::gradient(loss, net.parameters()));
  }
  const double metric = dbrm_objective(net, p, valid, c.seed);
  if (logger.due(c.n_steps)) logger.record(c.n_steps, last, metric, logger.value(net));
  return FitResult{NeuralQ(p.space, std::move(net)), std::move(curve), metric, {}, {}, std::nullopt};
}

}  // namespace ivope::neural
