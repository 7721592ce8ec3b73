#include "ivope/evaluation.hpp"

#include <cmath>

#include "ivope/error.hpp"
#include "ivope/rng.hpp"

namespace ivope::evaluation {

double estimate_policy_value(const QFunction& q, const env::TabularMdp& mdp, const env::Policy& policy) {
  double value = 0.0;
  const auto mu0 = mdp.initial_dist();
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (mu0[s] == 0.0) continue;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double w = mu0[s] * policy.prob(s, a);
      if (w != 0.0) value += w * q(s, a);
    }
  }
  return value;
}

MonteCarloValue estimate_policy_value_mc(const QFunction& q, const env::TabularMdp& mdp, const env::Policy& policy,
                                        std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw InvalidArgument("n_samples must be at least 1");
  Rng rng = make_rng(seed, Stream::monte_carlo);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::size_t s = mdp.sample_initial(rng);
    const double x = q(s, policy.sample(s, rng));
    const double delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (x - mean);
  }
  const double var = n_samples > 1 ? m2 / static_cast<double>(n_samples - 1) : 0.0;
  return MonteCarloValue{mean, std::sqrt(var / static_cast<double>(n_samples))};
}

double normalize(double rho, double rho_min, double rho_max) {
  if (!(rho_max > rho_min)) throw InvalidArgument("normalize: rho_max must exceed rho_min");
  return (rho - rho_min) / (rho_max - rho_min);
}

double abs_error(double a, double b) { return std::abs(a - b); }

ValueBounds chain_value_bounds(const env::TabularMdp& mdp) {
  const double g = mdp.discount();
  const std::size_t horizon = mdp.n_states() - 1;
  double total = 0.0;
  double term = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    total += term;
    term *= g;
  }
  return ValueBounds{0.0, total};
}

ValueEstimate make_value_estimate(double rho_hat, std::optional<double> rho_true, const ValueBounds& bounds) {
  ValueEstimate out{rho_hat, rho_true, bounds.rho_min, bounds.rho_max, std::nullopt};
  if (rho_true) {
    out.normalized_error = abs_error(normalize(rho_hat, bounds.rho_min, bounds.rho_max),
                                     normalize(*rho_true, bounds.rho_min, bounds.rho_max));
  }
  return out;
}

}  // namespace ivope::evaluation
