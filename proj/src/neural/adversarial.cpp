#include <cmath>
#include <deque>
#include <limits>

#include "internal.hpp"
#include "ivope/error.hpp"
#include "ivope/neural/estimators.hpp"

namespace ivope::neural {

using namespace detail;

Matrix normalized_moment_table(const std::vector<Eigen::VectorXd>& residuals,
                               const std::vector<Eigen::VectorXd>& g_values) {
  if (residuals.empty() || g_values.empty()) throw InvalidArgument("moment table needs candidates");
  Matrix table(static_cast<Eigen::Index>(residuals.size()), static_cast<Eigen::Index>(g_values.size()));
  for (std::size_t j = 0; j < g_values.size(); ++j) {
    const Eigen::VectorXd& g = g_values[j];
    const double rms = std::sqrt(g.squaredNorm() / static_cast<double>(g.size()));
    const double scale = rms > 0.0 ? 1.0 / rms : 1.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      if (residuals[i].size() != g.size()) throw InvalidArgument("residual and test function lengths differ");
      table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = scale * residuals[i].dot(g) / g.size();
    }
  }
  return table;
}

Selection select_min_moment_violation(const std::vector<Eigen::VectorXd>& residuals,
                                      const std::vector<Eigen::VectorXd>& g_values) {
  const Matrix table = normalized_moment_table(residuals, g_values).cwiseAbs();
  Selection best{0, std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const double worst = table.row(i).maxCoeff();
    if (worst < best.criterion) best = {static_cast<std::size_t>(i), worst};
  }
  return best;
}

Selection select_deepgmm(const std::vector<Eigen::VectorXd>& residuals, const std::vector<Eigen::VectorXd>& g_values) {
  if (residuals.empty() || g_values.empty()) throw InvalidArgument("selection needs candidates");
  Eigen::VectorXd mean_residual = Eigen::VectorXd::Zero(residuals.front().size());
  for (const auto& r : residuals) mean_residual += r;
  mean_residual /= static_cast<double>(residuals.size());
  const Eigen::ArrayXd w = mean_residual.array().square();

  std::vector<double> penalty;
  for (const auto& g : g_values) {
    if (g.size() != mean_residual.size()) throw InvalidArgument("residual and test function lengths differ");
    penalty.push_back(0.25 * (g.array().square() * w).mean());
  }
  Selection best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < g_values.size(); ++j) {
      const double v = residuals[i].dot(g_values[j]) / static_cast<double>(g_values[j].size()) - penalty[j];
      worst = std::max(worst, v);
    }
    if (worst < best.criterion) best = {i, worst};
  }
  return best;
}

namespace {

nn::MlpSpec g_spec(const InputSpace& space, const AdversarialConfig& config) {
  nn::MlpSpec spec;
  spec.layer_sizes.push_back(space.input_dim());
  spec.layer_sizes.insert(spec.layer_sizes.end(), config.g_hidden.begin(), config.g_hidden.end());
  spec.layer_sizes.push_back(1);
  spec.activation = config.common.activation;
  spec.layer_norm = config.common.layer_norm && !config.g_hidden.empty();
  return spec;
}

struct ValidView {
  Matrix input;
  Matrix next_input;
  Eigen::VectorXd reward;
  Eigen::VectorXd boot;  // g nd
};

Eigen::VectorXd residual_of(const nn::Mlp& q, const ValidView& v) {
  return v.reward - q.predict(v.input).col(0) + v.boot.cwiseProduct(q.predict(v.next_input).col(0));
}

}  // namespace

FitResult fit_adversarial(const Problem& p, const AdversarialConfig& config) {
  const CommonConfig& c = config.common;
  if (config.checkpoint_interval == 0 || config.max_checkpoints == 0)
    throw InvalidArgument("checkpoint interval and count must be positive");
  const EncodedData train = encode(p.train, p.space);
  const EncodedData valid = encode(p.valid, p.space);
  Rng init = make_rng(c.seed, Stream::init, 0);
  nn::Mlp q_net(q_network_spec(p.space, c), init);
  nn::Mlp g_net(g_spec(p.space, config), init);
  nn::OptimizerConfig g_opt_config = config.optimizer;
  g_opt_config.learning_rate *= config.g_lr_multiplier;
  nn::Optimizer q_opt(config.optimizer, q_net.parameters());
  nn::Optimizer g_opt(g_opt_config, g_net.parameters());
  BatchSampler sampler(train.size(), c.batch_size, c.seed);
  Rng act = make_rng(c.seed, Stream::target_actions, 105);

  Rng valid_rng = make_rng(c.seed, Stream::evaluation, 4);
  const auto valid_next = sample_actions(p.policy, valid.next_states, valid.not_done, valid_rng);
  const ValidView view{p.space.q_input(valid.x, valid.actions), p.space.q_input(valid.x_next, valid_next),
                       valid.reward, p.discount * valid.not_done};

  const AdversarialConstants& k = config.constants;
  const bool q_l2 = k.a > 0.0;
  const bool g_l2 = k.b > 0.0;
  const nn::Tensor zero = nn::Tensor::constant(Matrix::Zero(1, 1));

  std::deque<Checkpoint> kept;
  std::vector<CurvePoint> curve;
  CurveLogger logger(p, c, curve);
  std::optional<std::string> abort_reason;
  double last = 0.0;
  std::size_t steps_done = 0;
  for (std::size_t step = 0; step < c.n_steps; ++step) {
    const EncodedData b = train.gather(sampler.next());
    const auto an = sample_actions(p.policy, b.next_states, b.not_done, act);
    const nn::Tensor x = input_tensor(p.space, b.x, b.actions);
    const nn::Tensor x_next = input_tensor(p.space, b.x_next, an);
    const Matrix r = column(b.reward);
    const Matrix nd = column(b.not_done);

    const Matrix q_now = q_net.predict(x.value());
    const Matrix q_next_now = q_net.predict(x_next.value());
    const Matrix snapshot = r - q_now + p.discount * nd.cwiseProduct(q_next_now);

    const AdversarialLosses g_side =
        adversarial_objective(nn::Tensor::constant(q_now), g_net.forward(x), r, nn::Tensor::constant(q_next_now), nd,
                              p.discount, config.method, k, zero, g_l2 ? g_net.l2() : zero, snapshot);
    try {
      require_finite(g_side.g_loss.item(), step, "adversary loss");
      g_opt.step(nn::gradient(g_side.g_loss, g_net.parameters()));
      const AdversarialLosses q_side =
          adversarial_objective(q_net.forward(x), nn::Tensor::constant(g_net.predict(x.value())), r,
                                q_net.forward(x_next), nd, p.discount, config.method, k,
                                q_l2 ? q_net.l2() : zero, zero, snapshot);
      require_finite(q_side.q_loss.item(), step, "Q loss");
      last = q_side.psi;
      if (logger.due(step)) {
        const Eigen::VectorXd res = residual_of(q_net, view);
        logger.record(step, last, res.squaredNorm() / static_cast<double>(res.size()), logger.value(q_net));
      }
      q_opt.step(nn::gradient(q_side.q_loss, q_net.parameters()));
    } catch (const TrainingAborted& e) {
      if (kept.empty()) throw;
      abort_reason = e.what();
      break;
    }
    steps_done = step + 1;
    if (steps_done % config.checkpoint_interval == 0 || steps_done == c.n_steps) {
      if (kept.empty() || kept.back().step != steps_done) {
        kept.push_back({steps_done, q_net.values(), g_net.values()});
        if (kept.size() > config.max_checkpoints) kept.pop_front();
      }
    }
  }
  if (kept.empty()) kept.push_back({steps_done, q_net.values(), g_net.values()});

  std::vector<Eigen::VectorXd> residuals;
  std::vector<Eigen::VectorXd> tests;
  nn::Mlp q_probe = q_net;
  nn::Mlp g_probe = g_net;
  for (const Checkpoint& ck : kept) {
    q_probe.set_values(ck.q_values);
    g_probe.set_values(ck.g_values);
    residuals.push_back(residual_of(q_probe, view));
    tests.push_back(g_probe.predict(view.input).col(0));
  }
  const Selection sel = config.method == AdversarialMethod::deepgmm ? select_deepgmm(residuals, tests)
                                                                    : select_min_moment_violation(residuals, tests);

  if (abort_reason) q_net.set_values(kept.back().q_values);
  const double final_residual = residual_of(q_net, view).squaredNorm() / static_cast<double>(valid.size());
  if (!abort_reason && logger.due(c.n_steps)) logger.record(c.n_steps, last, final_residual, logger.value(q_net));

  q_probe.set_values(kept[sel.index].q_values);
  FitResult result{NeuralQ(p.space, q_net), std::move(curve), sel.criterion, {}, {}, abort_reason};
  result.diagnostics["selected_step"] = static_cast<double>(kept[sel.index].step);
  result.diagnostics["selected_value_estimate"] = value_of(NeuralQ(p.space, q_probe), p);
  result.diagnostics["valid_squared_residual"] = final_residual;
  if (config.use_selected_checkpoint) result.q = NeuralQ(p.space, q_probe);
  result.checkpoints.assign(kept.begin(), kept.end());
  return result;
}

}  // namespace ivope::neural
