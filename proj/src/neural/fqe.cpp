#include "internal.hpp"
#include "ivope/neural/estimators.hpp"

#include "ivope/error.hpp"

namespace ivope::neural {

using namespace detail;

namespace {

double td_objective(const nn::Mlp& net, const Problem& p, const EncodedData& d, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::evaluation, 2);
  const auto an = sample_actions(p.policy, d.next_states, d.not_done, rng);
  const Eigen::VectorXd q = net.predict(p.space.q_input(d.x, d.actions)).col(0);
  const Eigen::VectorXd qn = net.predict(p.space.q_input(d.x_next, an)).col(0);
  return (d.reward + p.discount * d.not_done.cwiseProduct(qn) - q).squaredNorm() / static_cast<double>(d.size());
}

}  // namespace

FitResult fit_fqe(const Problem& p, const FqeConfig& config) {
  const CommonConfig& c = config.common;
  if (config.target_update_period == 0) throw InvalidArgument("target_update_period must be positive");
  const EncodedData train = encode(p.train, p.space);
  const EncodedData valid = encode(p.valid, p.space);
  Rng init = make_rng(c.seed, Stream::init, 0);
  nn::Mlp net(q_network_spec(p.space, c), init);
  nn::Mlp target = net;
  nn::Optimizer opt(config.optimizer, net.parameters());
  BatchSampler sampler(train.size(), c.batch_size, c.seed);
  Rng act = make_rng(c.seed, Stream::target_actions, 101);

  std::vector<CurvePoint> curve;
  CurveLogger logger(p, c, curve);
  double last = 0.0;
  for (std::size_t step = 0; step < c.n_steps; ++step) {
    if (step % config.target_update_period == 0) target = net;
    const EncodedData b = train.gather(sampler.next());
    const auto an = sample_actions(p.policy, b.next_states, b.not_done, act);
    const Matrix q_next = target.predict(p.space.q_input(b.x_next, an));
    const Matrix y = fqe_target(column(b.reward), column(b.not_done), q_next, p.discount);
    const nn::Tensor loss = fqe_loss(net.forward(input_tensor(p.space, b.x, b.actions)), y);
    last = loss.item();
    require_finite(last, step, "FQE loss");
    if (logger.due(step)) logger.record(step, last, td_objective(net, p, valid, c.seed), logger.value(net));
    opt.step(nn::gradient(loss, net.parameters()));
  }
  const double metric = td_objective(net, p, valid, c.seed);
  if (logger.due(c.n_steps)) logger.record(c.n_steps, last, metric, logger.value(net));
  return FitResult{NeuralQ(p.space, std::move(net)), std::move(curve), metric, {}, {}, std::nullopt};
}

}  // namespace ivope::neural
