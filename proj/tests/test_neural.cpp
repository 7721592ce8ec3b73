#include <cmath>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "loss_cases.hpp"
#include "ivope/data.hpp"
#include "ivope/env.hpp"
#include "ivope/error.hpp"
#include "ivope/neural/estimators.hpp"
#include "ivope/nn/checkpoint.hpp"
#include "ivope/projected_rmse.hpp"

using namespace ivope;
using namespace ivope::neural;
using check::gaussian;

namespace {

struct ChainTask {
  env::TabularMdp mdp;
  env::Policy policy;
  data::TransitionDataset train;
  data::TransitionDataset valid;

  ChainTask(double p, std::size_t n, double discount = 0.99, std::uint64_t seed = 3)
      : mdp(env::make_chain_mdp(100, p, discount)), policy(env::chain_policy(mdp)) {
    auto [tr, va] = data::split(data::generate_chain_dataset(mdp, n, seed), data::kTrainValidRatio, seed);
    train = std::move(tr);
    valid = std::move(va);
  }

  Problem problem() const {
    return Problem{train, valid, policy, positional_input_space(mdp), mdp.discount(), &mdp};
  }
};

CommonConfig quick(std::size_t steps, std::uint64_t seed = 1) {
  CommonConfig c;
  c.seed = seed;
  c.n_steps = steps;
  c.batch_size = 256;
  c.hidden = {16, 16};
  c.log_interval = 0;
  return c;
}

// A random MDP without terminal states, two actions.
env::TabularMdp random_mdp(std::size_t n_states, double discount, Rng& rng) {
  const std::size_t A = 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n_states * A * n_states);
  for (std::size_t row = 0; row < n_states * A; ++row) {
    double total = 0.0;
    for (std::size_t s = 0; s < n_states; ++s) total += p[row * n_states + s] = u(rng);
    for (std::size_t s = 0; s < n_states; ++s) p[row * n_states + s] /= total;
  }
  std::vector<double> r(n_states * A);
  for (double& v : r) v = u(rng);
  std::vector<double> mu0(n_states, 1.0 / static_cast<double>(n_states));
  return env::TabularMdp(n_states, A, std::move(p), std::move(r), std::move(mu0),
                         std::vector<bool>(n_states, false), discount);
}

Eigen::MatrixXd uniform_weights(std::size_t s, std::size_t a) {
  return Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a),
                                   1.0 / static_cast<double>(s * a));
}

}  // namespace

TEST(AdversarialObjective, AsemAtDoubledGIsTwiceAgmm) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 37;
    const Matrix q = gaussian(n, 1, rng), qn = gaussian(n, 1, rng), g = gaussian(n, 1, rng), r = gaussian(n, 1, rng);
    const Matrix nd = check::bernoulli(n, 0.7, rng);
    const nn::Tensor zero = nn::Tensor::constant(Matrix::Zero(1, 1));
    const AdversarialConstants none{};
    auto g_payoff = [&](AdversarialMethod m, const Matrix& gv) {
      return -adversarial_objective(nn::Tensor::constant(q), nn::Tensor::constant(gv), r, nn::Tensor::constant(qn), nd,
                                    0.99, m, none, zero, zero, Matrix())
                  .g_loss.item();
    };
    const double asem = g_payoff(AdversarialMethod::asem, 2.0 * g);
    const double agmm = g_payoff(AdversarialMethod::agmm, g);
    EXPECT_NEAR(asem, 2.0 * agmm, 1e-12 * std::max(1.0, std::abs(asem)));
  }
}

TEST(AdversarialObjective, HandComputedTwoRowBatch) {
  // rows: (r, q, q', nd, g) = (1, 0.5, 2, 1, 3) and (0, 1, 4, 0, -1), discount 0.5.
  // residuals: 1 - 0.5 + 0.5*2 = 1.5 and 0 - 1 + 0 = -1.
  // psi = (1.5*3 + (-1)(-1)) / 2 = 2.75; mean g^2 = (9 + 1) / 2 = 5; mean q^2 = 0.625.
  const Matrix r = (Matrix(2, 1) << 1, 0).finished();
  const Matrix q = (Matrix(2, 1) << 0.5, 1).finished();
  const Matrix qn = (Matrix(2, 1) << 2, 4).finished();
  const Matrix nd = (Matrix(2, 1) << 1, 0).finished();
  const Matrix g = (Matrix(2, 1) << 3, -1).finished();
  const Matrix snap = (Matrix(2, 1) << 2, 1).finished();
  const nn::Tensor ql2 = nn::Tensor::constant(Matrix::Constant(1, 1, 4.0));
  const nn::Tensor gl2 = nn::Tensor::constant(Matrix::Constant(1, 1, 10.0));
  const AdversarialConstants k{0.1, 0.01, 0.2};
  auto run = [&](AdversarialMethod m) {
    return adversarial_objective(nn::Tensor::constant(q), nn::Tensor::constant(g), r, nn::Tensor::constant(qn), nd, 0.5,
                                 m, k, ql2, gl2, snap);
  };
  const auto agmm = run(AdversarialMethod::agmm);
  EXPECT_DOUBLE_EQ(agmm.psi, 2.75);
  EXPECT_NEAR(agmm.q_loss.item(), 2.75 + 0.1 * 4.0, 1e-15);
  EXPECT_NEAR(agmm.g_loss.item(), -2.75 + 5.0 + 0.01 * 10.0, 1e-15);
  const auto asem = run(AdversarialMethod::asem);
  EXPECT_NEAR(asem.q_loss.item(), 2.75 + 0.1 * 0.625 + 0.4, 1e-15);
  EXPECT_NEAR(asem.g_loss.item(), -2.75 + 2.5 + 0.1, 1e-15);
  // deepgmm: 1/4 mean[g^2 snap^2] = (9*4 + 1*1) / 8 = 4.625.
  const auto dg = run(AdversarialMethod::deepgmm);
  EXPECT_NEAR(dg.q_loss.item(), 2.75, 1e-15);
  EXPECT_NEAR(dg.g_loss.item(), -2.75 + 4.625, 1e-15);
}

TEST(AdversarialObjective, ZeroTestFunction) {
  Rng rng(2);
  const Matrix q = gaussian(9, 1, rng);
  const nn::Tensor ql2 = nn::Tensor::constant(Matrix::Constant(1, 1, 3.0));
  const auto out = adversarial_objective(nn::Tensor::constant(q), nn::Tensor::constant(Matrix::Zero(9, 1)),
                                         gaussian(9, 1, rng), nn::Tensor::constant(gaussian(9, 1, rng)),
                                         Matrix::Ones(9, 1), 0.9, AdversarialMethod::agmm, {0.5, 0.0, 0.0}, ql2,
                                         nn::Tensor::constant(Matrix::Zero(1, 1)), Matrix());
  EXPECT_EQ(out.psi, 0.0);
  EXPECT_DOUBLE_EQ(out.q_loss.item(), 1.5);
}

TEST(AdversarialObjective, MethodNamesRoundTrip) {
  for (auto m : {AdversarialMethod::agmm, AdversarialMethod::asem, AdversarialMethod::deepgmm})
    EXPECT_EQ(parse_adversarial_method(to_string(m)), m);
  EXPECT_THROW(parse_adversarial_method("gan"), InvalidArgument);
}

TEST(LossGradients, EveryLossAtThreeSeeds) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : check::make_loss_cases(seed)) {
      const auto res = check::check_gradient(c.loss, c.params);
      EXPECT_LT(res.relative_error, 1e-6) << c.name << " seed " << seed;
      EXPECT_GT(res.fd_norm, 0.0) << c.name;
    }
  }
}

TEST(DeepIvLoss, MonteCarloBiasDecays) {
  // With exact next-state sampling the stage-2 loss exceeds the MSBE by
  // g^2 Var[Q(s')] / M on average; the excess must shrink with M.
  ChainTask task(0.5, 2000);
  const env::QTable q = env::exact_q(task.mdp, task.policy);
  const auto n = static_cast<Eigen::Index>(task.train.size());
  Matrix r(n, 1), qa(n, 1);
  double msbe = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t s = task.train.state_index(static_cast<std::size_t>(i));
    r(i, 0) = task.train.reward(static_cast<std::size_t>(i));
    qa(i, 0) = q(static_cast<Eigen::Index>(s), 0);
    double expected = 0.0;
    const auto row = task.mdp.transition_row(s, 0);
    for (std::size_t t = 0; t < row.size(); ++t) expected += row[t] * q(static_cast<Eigen::Index>(t), 0);
    const double e = r(i, 0) - qa(i, 0) + 0.99 * expected;
    msbe += e * e / static_cast<double>(n);
  }
  std::vector<double> excess;
  Rng rng(5);
  for (Eigen::Index m : {10, 100, 1000}) {
    Matrix samples(n, m), nd(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t s = task.train.state_index(static_cast<std::size_t>(i));
      for (Eigen::Index j = 0; j < m; ++j) {
        const std::size_t t = task.mdp.sample_next(s, 0, rng);
        samples(i, j) = q(static_cast<Eigen::Index>(t), 0);
        nd(i, j) = task.mdp.is_terminal(t) ? 0.0 : 1.0;
      }
    }
    const double loss = deep_iv_stage2_loss(nn::Tensor::constant(qa), nn::Tensor::constant(samples), nd, r, 0.99).item();
    excess.push_back(loss - msbe);
  }
  EXPECT_GT(excess[0], excess[1]);
  EXPECT_GT(excess[1], excess[2]);
  EXPECT_LT(std::abs(excess[2]), 0.02 * excess[0] + 1e-6);
}

TEST(NeuralFits, DbrmAndFqeCoincideWithoutDiscount) {
  ChainTask task(0.5, 4000, 0.0);
  const Problem p = task.problem();
  DbrmConfig d;
  d.common = quick(300);
  FqeConfig f;
  f.common = quick(300);
  const env::QTable qd = fit_dbrm_neural(p, d).q.table(100, 1);
  const env::QTable qf = fit_fqe(p, f).q.table(100, 1);
  EXPECT_LT((qd - qf).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(NeuralFits, DeterministicGivenSeed) {
  ChainTask task(0.5, 3000);
  const Problem p = task.problem();
  AdversarialConfig a;
  a.common = quick(60);
  a.checkpoint_interval = 20;
  const auto r1 = fit_adversarial(p, a);
  const auto r2 = fit_adversarial(p, a);
  EXPECT_EQ(r1.q.table(100, 1), r2.q.table(100, 1));
  EXPECT_EQ(r1.validation_metric, r2.validation_metric);
  ASSERT_EQ(r1.checkpoints.size(), 3u);
  EXPECT_EQ(r1.checkpoints.front().step, 20u);
  a.common.seed = 2;
  EXPECT_NE(fit_adversarial(p, a).q.table(100, 1), r1.q.table(100, 1));
}

TEST(NeuralFits, ZeroLearningRateLeavesParametersUnchanged) {
  ChainTask task(0.5, 2000);
  const Problem p = task.problem();
  AdversarialConfig a;
  a.common = quick(0);
  a.optimizer.learning_rate = 0.0;
  const auto before = fit_adversarial(p, a);
  a.common.n_steps = 1;
  const auto after = fit_adversarial(p, a);
  EXPECT_EQ(before.q.table(100, 1), after.q.table(100, 1));
  for (std::size_t i = 0; i < before.checkpoints[0].g_values.size(); ++i)
    EXPECT_EQ(before.checkpoints[0].g_values[i], after.checkpoints[0].g_values[i]);
}

TEST(NeuralFits, CheckpointsKeepTheLatest) {
  ChainTask task(0.5, 2000);
  AdversarialConfig a;
  a.common = quick(50);
  a.checkpoint_interval = 5;
  a.max_checkpoints = 4;
  const auto fit = fit_adversarial(task.problem(), a);
  ASSERT_EQ(fit.checkpoints.size(), 4u);
  EXPECT_EQ(fit.checkpoints.front().step, 35u);
  EXPECT_EQ(fit.checkpoints.back().step, 50u);
  EXPECT_TRUE(fit.diagnostics.count("selected_step"));
}

TEST(NeuralFits, NonFiniteLossAborts) {
  const auto mdp = env::make_chain_mdp(10, 0.5, 0.9);
  data::TransitionDataset ds(1);
  for (int i = 0; i < 50; ++i) {
    const double s = i % 9, sn = s + 1;
    ds.push_back(std::span<const double>(&s, 1), 0, 1e300, std::span<const double>(&sn, 1), sn == 9);
  }
  const auto policy = env::chain_policy(mdp);
  const Problem p{ds, ds, policy, positional_input_space(mdp), 0.9, &mdp};
  FqeConfig f;
  f.common = quick(5);
  EXPECT_THROW(fit_fqe(p, f), TrainingAborted);
}

TEST(Dfiv, FrozenFeaturesMatchDirectClosedForm) {
  ChainTask task(0.5, 3000);
  const Problem p = task.problem();
  DfivConfig cfg;
  cfg.common = quick(3);
  cfg.common.batch_size = 100000;
  cfg.value_optimizer.learning_rate = 0.0;
  cfg.instrument_optimizer.learning_rate = 0.0;
  cfg.lambda1 = 1e-3;
  cfg.lambda2 = 1e-3;
  const DfivFit fit = fit_dfiv(p, cfg);

  // Single action: next actions are forced, so the oracle needs no sampling.
  const std::size_t n = task.train.size();
  Matrix x(n, 1), xn(n, 1);
  Eigen::VectorXd r(n), nd(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = task.mdp.position(task.train.state_index(i));
    xn(i, 0) = task.mdp.position(task.train.next_state_index(i));
    r(i) = task.train.reward(i);
    nd(i) = task.train.terminal(i) ? 0.0 : 1.0;
  }
  auto ones = [](const Matrix& m) {
    Matrix out(m.rows(), m.cols() + 1);
    out << m, Matrix::Ones(m.rows(), 1);
    return out;
  };
  const Matrix phi = ones(fit.value_net.predict(x));
  const Matrix target = phi - 0.99 * nd.asDiagonal() * ones(fit.value_net.predict(xn));
  const Matrix psi = ones(fit.instrument_net.predict(x));
  const double dn = static_cast<double>(n);
  const Matrix g1 = psi.transpose() * psi + dn * 1e-3 * Matrix::Identity(psi.cols(), psi.cols());
  const Matrix v = g1.ldlt().solve(psi.transpose() * target);
  const Matrix pred = psi * v;
  const Matrix g2 = pred.transpose() * pred + dn * 1e-3 * Matrix::Identity(pred.cols(), pred.cols());
  const Eigen::VectorXd theta = g2.ldlt().solve(pred.transpose() * r);

  EXPECT_LT((fit.v - v).norm() / v.norm(), 1e-6);
  EXPECT_LT((fit.theta - theta).norm() / theta.norm(), 1e-6);
  // The fitted Q is phi . theta.
  const Eigen::VectorXd q = phi * theta;
  for (std::size_t s : {0u, 17u, 80u}) {
    const std::size_t row = [&] {
      for (std::size_t i = 0; i < n; ++i)
        if (task.train.state_index(i) == s) return i;
      return std::size_t{0};
    }();
    EXPECT_NEAR(fit.fit.q.q(s, 0), q(static_cast<Eigen::Index>(row)), 1e-9);
  }
}

TEST(Dfiv, HeavyRegularizationShrinksToZero) {
  ChainTask task(0.5, 2000);
  DfivConfig cfg;
  cfg.common = quick(2);
  cfg.lambda1 = 1e6;
  cfg.lambda2 = 1e6;
  const DfivFit fit = fit_dfiv(task.problem(), cfg);
  EXPECT_LT(fit.fit.q.table(100, 1).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(DeepIv, OracleModelReproducesTransitions) {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const TreatmentModel model = oracle_treatment(mdp);
  const Eigen::VectorXd d = next_state_distribution(model, 10, 0);
  EXPECT_DOUBLE_EQ(d(10), 0.5);
  EXPECT_DOUBLE_EQ(d(11), 0.5);
  EXPECT_DOUBLE_EQ(d.sum(), 1.0);
}

TEST(DeepIv, SingleDeterministicSampleIsDbrm) {
  // p = 1: the oracle draw is the logged next state, so both objectives agree.
  ChainTask task(1.0, 3000);
  const Problem p = task.problem();
  DeepIvConfig d;
  d.common = quick(100);
  d.n_mc_samples = 1;
  DbrmConfig b;
  b.common = quick(100);
  const auto qd = fit_deep_iv(p, oracle_treatment(task.mdp), d).q.table(100, 1);
  const auto qb = fit_dbrm_neural(p, b).q.table(100, 1);
  EXPECT_LT((qd - qb).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DeepIv, MixtureStageOneTrains) {
  ChainTask task(0.5, 3000);
  TreatmentConfig t;
  t.common = quick(200);
  t.kind = TreatmentKind::mixture;
  t.n_components = 2;
  const TreatmentModel m = fit_treatment(task.problem(), task.mdp, t);
  ASSERT_TRUE(m.net.has_value());
  EXPECT_TRUE(std::isfinite(m.valid_log_likelihood));
  EXPECT_THROW(next_state_distribution(m, 0, 0), InvalidArgument);
  DeepIvConfig d;
  d.common = quick(20);
  EXPECT_TRUE(std::isfinite(fit_deep_iv(task.problem(), m, d).validation_metric));
}

TEST(Selection, AgmmIgnoresTestFunctionScale) {
  Rng rng(4);
  std::vector<Eigen::VectorXd> residuals, tests;
  for (int i = 0; i < 6; ++i) residuals.push_back(gaussian(50, 1, rng).col(0));
  for (int j = 0; j < 6; ++j) tests.push_back(gaussian(50, 1, rng).col(0));
  const Selection base = select_min_moment_violation(residuals, tests);
  for (std::size_t j = 0; j < tests.size(); ++j) {
    auto doubled = tests;
    doubled.push_back(2.0 * tests[j]);
    const Selection s = select_min_moment_violation(residuals, doubled);
    EXPECT_EQ(s.index, base.index);
    EXPECT_DOUBLE_EQ(s.criterion, base.criterion);
  }
}

TEST(Selection, AgmmPicksSmallestWorstMoment) {
  const Eigen::VectorXd g = (Eigen::VectorXd(2) << 1, 1).finished();
  std::vector<Eigen::VectorXd> residuals{(Eigen::VectorXd(2) << 2, 2).finished(),
                                         (Eigen::VectorXd(2) << 0.5, -0.25).finished(),
                                         (Eigen::VectorXd(2) << -1, -1).finished()};
  const Selection s = select_min_moment_violation(residuals, {g});
  EXPECT_EQ(s.index, 1u);
  EXPECT_DOUBLE_EQ(s.criterion, 0.125);
}

TEST(Selection, DeepGmmUsesAveragedResidual) {
  // Residuals (1, 1) and (3, 3) average to (2, 2); g = (1, 0).
  // candidate 0: 0.5 - 1/4 * mean[(1, 0) * 4] = 0.5 - 0.5 = 0.
  // candidate 1: 1.5 - 0.5 = 1.
  std::vector<Eigen::VectorXd> residuals{Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Constant(2, 3.0)};
  const Selection s = select_deepgmm(residuals, {(Eigen::VectorXd(2) << 1, 0).finished()});
  EXPECT_EQ(s.index, 0u);
  EXPECT_DOUBLE_EQ(s.criterion, 0.0);
}

TEST(ProjectedRmse, ZeroForTheReference) {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto pi = env::chain_policy(mdp);
  const env::QTable q = env::exact_q(mdp, pi);
  EXPECT_EQ(evaluation::projected_rmse(q, q, mdp, pi, env::chain_behavior_distribution(mdp)), 0.0);
}

TEST(ProjectedRmse, ConstantShiftScalesWithOneMinusDiscount) {
  Rng rng(8);
  const auto mdp = random_mdp(7, 0.9, rng);
  const auto pi = env::Policy::uniform(7, 2);
  const env::QTable q = env::exact_q(mdp, pi);
  const env::QTable shifted = q.array() + 2.5;
  EXPECT_NEAR(evaluation::projected_rmse(shifted, q, mdp, pi, uniform_weights(7, 2)), 2.5 * 0.1, 1e-12);
}

TEST(ProjectedRmse, MatchesBruteForceDoubleSum) {
  Rng rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    const auto mdp = random_mdp(6, 0.8, rng);
    const auto pi = env::Policy::uniform(6, 2);
    const env::QTable f0 = gaussian(6, 2, rng);
    const env::QTable f = gaussian(6, 2, rng);
    Eigen::MatrixXd mu = gaussian(6, 2, rng).cwiseAbs();
    mu /= mu.sum();
    double total = 0.0;
    for (std::size_t s = 0; s < 6; ++s)
      for (std::size_t a = 0; a < 2; ++a) {
        double inner = f(s, a) - f0(s, a);
        for (std::size_t t = 0; t < 6; ++t)
          for (std::size_t b = 0; b < 2; ++b) inner -= 0.8 * mdp.transition(s, a, t) * pi.prob(t, b) * (f(t, b) - f0(t, b));
        total += mu(s, a) * inner * inner;
      }
    EXPECT_NEAR(evaluation::projected_rmse(f, f0, mdp, pi, mu), std::sqrt(total), 1e-12);
  }
}

TEST(ProjectedRmse, RejectsMismatchedTables) {
  const auto mdp = env::make_chain_mdp(10, 0.5, 0.9);
  const auto pi = env::chain_policy(mdp);
  EXPECT_THROW(evaluation::projected_rmse(Eigen::MatrixXd::Zero(9, 1), Eigen::MatrixXd::Zero(10, 1), mdp, pi,
                                          uniform_weights(10, 1)),
               InvalidArgument);
}

TEST(NeuralQ, SaveAndReload) {
  ChainTask task(0.5, 2000);
  FqeConfig f;
  f.common = quick(5);
  const auto fit = fit_fqe(task.problem(), f);
  const auto path = std::filesystem::temp_directory_path() / "ivope_neural_q.bin";
  fit.q.save(path);
  const nn::Mlp back = nn::load_mlp(path);
  const NeuralQ again(fit.q.space(), back);
  EXPECT_EQ(again.table(100, 1), fit.q.table(100, 1));
  std::filesystem::remove(path);
}
