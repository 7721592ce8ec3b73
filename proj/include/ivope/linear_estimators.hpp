#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ivope/data.hpp"
#include "ivope/env.hpp"
#include "ivope/features.hpp"

namespace ivope::linear {

/// Q(s, a) = phi(s, a) . theta.
class LinearQ {
 public:
  LinearQ(features::FeatureMap phi, Eigen::VectorXd theta);

  const features::FeatureMap& feature_map() const noexcept { return phi_; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }

  double q(std::span<const double> state, std::size_t action) const;
  /// Tabular convenience: the state encoding is the index itself.
  double q(std::size_t state, std::size_t action) const;
  env::QTable table(std::size_t n_states, std::size_t n_actions) const;

 private:
  features::FeatureMap phi_;
  Eigen::VectorXd theta_;
};

/// Writes "# features=<descriptor>" then one theta entry per line.
void write_theta_csv(const LinearQ& q, std::ostream& out);

/// Rows of phi(s, a), phi(s', a') with a' ~ pi(.|s') and the reward vector.
/// Terminal rows carry a zero next-feature row.
struct DesignMatrices {
  Eigen::MatrixXd phi;
  Eigen::MatrixXd phi_next;
  Eigen::VectorXd reward;
};

/// One target-policy action per row, drawn from Stream::target_actions.
/// `draw` selects an independent sequence (DBRM uses draws 0 and 1).
std::vector<std::size_t> draw_next_actions(const data::TransitionDataset& dataset, const env::Policy& policy,
                                           std::uint64_t seed, std::uint64_t draw = 0);

DesignMatrices build_design(const data::TransitionDataset& dataset, const env::Policy& policy,
                            const features::FeatureMap& phi, std::uint64_t seed, std::uint64_t draw = 0);

/// Feature rows of (s, a) for each logged transition.
Eigen::MatrixXd feature_rows(const data::TransitionDataset& dataset, const features::FeatureMap& phi);

/// theta = (Z^T X + jitter I)^{-1} Z^T Y by a guarded QR solve.
Eigen::VectorXd two_stage_least_squares(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        double jitter = 0.0);

/// Synthetic confounded regression: Z, eps ~ N(0, 1), X = Z + eps,
/// Y = 2 X - 2 eps. OLS of Y on X converges to 1; IV with Z recovers 2.
struct ConfoundedSample {
  Eigen::MatrixXd z;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

ConfoundedSample confounded_regression(std::size_t n, std::uint64_t seed);

struct LinearOptions {
  double discount = 0.99;
  std::uint64_t seed = 0;
  /// Added to the diagonal of the moment matrix (LSTD, DBRM) or, scaled by
  /// n, to the normal equations (FQE).
  double ridge = 0.0;
};

/// 2SLS with instrument phi and regressor phi - discount * phi'.
LinearQ lstd_q(const data::TransitionDataset& dataset, const env::Policy& policy, const features::FeatureMap& phi,
               const LinearOptions& options);
LinearQ lstd_q(const DesignMatrices& design, const features::FeatureMap& phi, double discount, double ridge = 0.0);

/// Minimizer of mean (r - x1 theta)(r - x2 theta) with x_k = phi - discount * phi'_k
/// for two independent target-action draws.
LinearQ linear_dbrm(const data::TransitionDataset& dataset, const env::Policy& policy,
                    const features::FeatureMap& phi, const LinearOptions& options);

/// Called after every iteration with (k, theta_k), k starting at 1.
using FqeObserver = std::function<void(std::size_t, const Eigen::VectorXd&)>;

/// theta_k = (Phi^T Phi + n ridge I)^{-1} Phi^T (R + discount Phi' theta_{k-1}), theta_0 = 0.
LinearQ linear_fqe(const data::TransitionDataset& dataset, const env::Policy& policy,
                   const features::FeatureMap& phi, std::size_t n_iterations, const LinearOptions& options,
                   const FqeObserver& observer = {});
LinearQ linear_fqe(const DesignMatrices& design, const features::FeatureMap& phi, double discount,
                   std::size_t n_iterations, double ridge = 0.0, const FqeObserver& observer = {});

inline constexpr double kFqeDivergenceNorm = 1e8;

struct KivOptions {
  double discount = 0.99;
  std::uint64_t seed = 0;
  double lambda1 = 1e-4;
  double lambda2 = 1e-4;
};

struct KivFit {
  LinearQ q;
  Eigen::MatrixXd v;  // stage-1 coefficients, psi-dim x phi-dim
};

/// Two-stage ridge regression. Stage 1 regresses phi(s', a') on psi(s, a);
/// stage 2 regresses r on phi(s, a) - discount * V^T psi(s, a).
KivFit kernel_iv(const data::TransitionDataset& dataset, const env::Policy& policy, const features::FeatureMap& phi,
                 const features::FeatureMap& psi, const KivOptions& options);

/// Unregularized stage-2 loss mean (r - theta^T (phi - discount V^T psi))^2 on
/// (possibly held-out) data.
double kiv_stage2_loss(const KivFit& fit, const data::TransitionDataset& dataset, const env::Policy& policy,
                       const features::FeatureMap& psi, double discount, std::uint64_t seed);

}  // namespace ivope::linear
