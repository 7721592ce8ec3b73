#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

#include "ivope/env.hpp"

namespace ivope::evaluation {

/// A fitted Q queried on tabular (state index, action).
using QFunction = std::function<double(std::size_t state, std::size_t action)>;

/// sum_s mu0(s) sum_a pi(a|s) Q(s, a), computed exactly.
double estimate_policy_value(const QFunction& q, const env::TabularMdp& mdp, const env::Policy& policy);

struct MonteCarloValue {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Average of Q over n draws (s, a) ~ mu0 x pi.
MonteCarloValue estimate_policy_value_mc(const QFunction& q, const env::TabularMdp& mdp, const env::Policy& policy,
                                        std::size_t n_samples, std::uint64_t seed);

/// (rho - rho_min) / (rho_max - rho_min).
double normalize(double rho, double rho_min, double rho_max);

double abs_error(double a, double b);

struct ValueBounds {
  double rho_min = 0.0;
  double rho_max = 1.0;
};

/// 0 and sum_{t < n_states - 1} discount^t: the return bound under unit peak reward.
ValueBounds chain_value_bounds(const env::TabularMdp& mdp);

struct ValueEstimate {
  double rho_hat = 0.0;
  std::optional<double> rho_true;
  double rho_min = 0.0;
  double rho_max = 1.0;
  std::optional<double> normalized_error;
};

ValueEstimate make_value_estimate(double rho_hat, std::optional<double> rho_true, const ValueBounds& bounds);

}  // namespace ivope::evaluation
