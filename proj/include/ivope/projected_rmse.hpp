#pragma once

#include <Eigen/Dense>

#include "ivope/env.hpp"

namespace ivope::evaluation {

/// Bellman-projected error of a fitted Q against the true Q:
///   sqrt( sum_{s,a} mu(s,a) (dQ(s,a) - g sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') dQ(s',a'))^2 )
/// with dQ = fitted - reference and terminal next states contributing zero.
/// `behavior` holds mu as an S x A table summing to one.
double projected_rmse(const env::QTable& fitted, const env::QTable& reference, const env::TabularMdp& mdp,
                      const env::Policy& policy, const Eigen::MatrixXd& behavior);

}  // namespace ivope::evaluation
