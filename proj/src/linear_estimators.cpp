#include "ivope/linear_estimators.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "ivope/error.hpp"
#include "ivope/linalg.hpp"
#include "ivope/rng.hpp"

namespace ivope::linear {

LinearQ::LinearQ(features::FeatureMap phi, Eigen::VectorXd theta) : phi_(std::move(phi)), theta_(std::move(theta)) {
  if (static_cast<std::size_t>(theta_.size()) != phi_.dim())
    throw InvalidArgument("theta length does not match the feature dimension");
}

double LinearQ::q(std::span<const double> state, std::size_t action) const { return phi_(state, action).dot(theta_); }

double LinearQ::q(std::size_t state, std::size_t action) const {
  const double s = static_cast<double>(state);
  return q(std::span<const double>(&s, 1), action);
}

env::QTable LinearQ::table(std::size_t n_states, std::size_t n_actions) const {
  env::QTable out(n_states, n_actions);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) out(s, a) = q(s, a);
  return out;
}

void write_theta_csv(const LinearQ& q, std::ostream& out) {
  out << "# features=" << q.feature_map().descriptor() << '\n';
  for (Eigen::Index j = 0; j < q.theta().size(); ++j) out << data::format_real(q.theta()(j)) << '\n';
}

std::vector<std::size_t> draw_next_actions(const data::TransitionDataset& dataset, const env::Policy& policy,
                                           std::uint64_t seed, std::uint64_t draw) {
  Rng rng = make_rng(seed, Stream::target_actions, draw);
  std::vector<std::size_t> actions(dataset.size(), 0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.terminal(i)) continue;
    actions[i] = policy.sample(dataset.next_state_index(i), rng);
  }
  return actions;
}

Eigen::MatrixXd feature_rows(const data::TransitionDataset& dataset, const features::FeatureMap& phi) {
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const auto d = static_cast<Eigen::Index>(phi.dim());
  Eigen::MatrixXd cols(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    phi.apply_into(dataset.state(row), dataset.action(row), cols.col(i));
  }
  return cols.transpose();
}

DesignMatrices build_design(const data::TransitionDataset& dataset, const env::Policy& policy,
                            const features::FeatureMap& phi, std::uint64_t seed, std::uint64_t draw) {
  const auto next_actions = draw_next_actions(dataset, policy, seed, draw);
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const auto d = static_cast<Eigen::Index>(phi.dim());
  Eigen::MatrixXd next_cols = Eigen::MatrixXd::Zero(d, n);
  Eigen::VectorXd reward(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    reward(i) = dataset.reward(row);
    if (!dataset.terminal(row)) phi.apply_into(dataset.next_state(row), next_actions[row], next_cols.col(i));
  }
  return DesignMatrices{feature_rows(dataset, phi), next_cols.transpose(), std::move(reward)};
}

Eigen::VectorXd two_stage_least_squares(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        double jitter) {
  if (z.rows() != x.rows() || z.rows() != y.size()) throw InvalidArgument("2SLS: row counts differ");
  if (z.cols() != x.cols()) throw InvalidArgument("2SLS: instrument and regressor dimensions differ");
  Eigen::MatrixXd moment = z.transpose() * x;
  if (jitter != 0.0) moment.diagonal().array() += jitter;
  return linalg::solve_guarded(moment, z.transpose() * y, "2SLS moment matrix Z^T X");
}

ConfoundedSample confounded_regression(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::transitions);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto rows = static_cast<Eigen::Index>(n);
  ConfoundedSample out{Eigen::MatrixXd(rows, 1), Eigen::MatrixXd(rows, 1), Eigen::VectorXd(rows)};
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double z = normal(rng);
    const double eps = normal(rng);
    out.z(i, 0) = z;
    out.x(i, 0) = z + eps;
    out.y(i) = 2.0 * out.x(i, 0) - 2.0 * eps;
  }
  return out;
}

LinearQ lstd_q(const DesignMatrices& design, const features::FeatureMap& phi, double discount, double ridge) {
  const Eigen::MatrixXd x = design.phi - discount * design.phi_next;
  return LinearQ(phi, two_stage_least_squares(design.phi, x, design.reward, ridge));
}

LinearQ lstd_q(const data::TransitionDataset& dataset, const env::Policy& policy, const features::FeatureMap& phi,
               const LinearOptions& options) {
  return lstd_q(build_design(dataset, policy, phi, options.seed), phi, options.discount, options.ridge);
}

LinearQ linear_dbrm(const data::TransitionDataset& dataset, const env::Policy& policy,
                    const features::FeatureMap& phi, const LinearOptions& options) {
  const DesignMatrices first = build_design(dataset, policy, phi, options.seed, 0);
  const DesignMatrices second = build_design(dataset, policy, phi, options.seed, 1);
  const Eigen::MatrixXd x1 = first.phi - options.discount * first.phi_next;
  const Eigen::MatrixXd x2 = first.phi - options.discount * second.phi_next;
  // Expanding the product objective gives theta^T M theta - 2 b^T theta + c.
  Eigen::MatrixXd m = 0.5 * (x1.transpose() * x2 + x2.transpose() * x1);
  if (options.ridge != 0.0) m.diagonal().array() += options.ridge;
  const Eigen::VectorXd b = 0.5 * (x1 + x2).transpose() * first.reward;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) {
    throw NumericalError("DBRM moment matrix is not positive definite (smallest eigenvalue " + std::to_string(lo) + ")",
                         lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
  }
  return LinearQ(phi, linalg::solve_guarded(m, b, "DBRM moment matrix"));
}

LinearQ linear_fqe(const DesignMatrices& design, const features::FeatureMap& phi, double discount,
                   std::size_t n_iterations, double ridge, const FqeObserver& observer) {
  const auto n = static_cast<double>(design.phi.rows());
  Eigen::MatrixXd gram = design.phi.transpose() * design.phi;
  if (ridge != 0.0) gram.diagonal().array() += n * ridge;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  const double cond = linalg::condition_estimate(qr);
  if (!(cond <= linalg::kConditionGuard))
    throw NumericalError("FQE Gram matrix is ill-conditioned (condition estimate " + std::to_string(cond) + ")", cond);
  const Eigen::VectorXd c = design.phi.transpose() * design.reward;
  const Eigen::MatrixXd cross = discount * (design.phi.transpose() * design.phi_next);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(design.phi.cols());
  for (std::size_t k = 1; k <= n_iterations; ++k) {
    theta = qr.solve(c + cross * theta);
    const double norm = theta.norm();
    if (!std::isfinite(norm) || norm > kFqeDivergenceNorm)
      throw ConvergenceError("linear FQE diverged at iteration " + std::to_string(k) + " (|theta| = " +
                             std::to_string(norm) + "); features are unstable for this dataset");
    if (observer) observer(k, theta);
  }
  return LinearQ(phi, std::move(theta));
}

LinearQ linear_fqe(const data::TransitionDataset& dataset, const env::Policy& policy,
                   const features::FeatureMap& phi, std::size_t n_iterations, const LinearOptions& options,
                   const FqeObserver& observer) {
  return linear_fqe(build_design(dataset, policy, phi, options.seed), phi, options.discount, n_iterations,
                    options.ridge, observer);
}

KivFit kernel_iv(const data::TransitionDataset& dataset, const env::Policy& policy, const features::FeatureMap& phi,
                 const features::FeatureMap& psi, const KivOptions& options) {
  const DesignMatrices design = build_design(dataset, policy, phi, options.seed);
  const Eigen::MatrixXd instrument = feature_rows(dataset, psi);
  Eigen::MatrixXd v = linalg::ridge(instrument, design.phi_next, options.lambda1);
  const Eigen::MatrixXd regressor = design.phi - options.discount * (instrument * v);
  Eigen::VectorXd theta = linalg::ridge(regressor, design.reward, options.lambda2);
  return KivFit{LinearQ(phi, std::move(theta)), std::move(v)};
}

double kiv_stage2_loss(const KivFit& fit, const data::TransitionDataset& dataset, const env::Policy& policy,
                       const features::FeatureMap& psi, double discount, std::uint64_t seed) {
  const DesignMatrices design = build_design(dataset, policy, fit.q.feature_map(), seed);
  const Eigen::MatrixXd instrument = feature_rows(dataset, psi);
  const Eigen::VectorXd pred = (design.phi - discount * (instrument * fit.v)) * fit.q.theta();
  return (design.reward - pred).squaredNorm() / static_cast<double>(design.reward.size());
}

}  // namespace ivope::linear
