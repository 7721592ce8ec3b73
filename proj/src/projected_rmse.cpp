#include "ivope/projected_rmse.hpp"

#include <cmath>

#include "ivope/error.hpp"

namespace ivope::evaluation {

double projected_rmse(const env::QTable& fitted, const env::QTable& reference, const env::TabularMdp& mdp,
                      const env::Policy& policy, const Eigen::MatrixXd& behavior) {
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  auto shape_ok = [&](const Eigen::MatrixXd& m) { return m.rows() == S && m.cols() == A; };
  if (!shape_ok(fitted) || !shape_ok(reference) || !shape_ok(behavior))
    throw InvalidArgument("projected RMSE inputs must be n_states x n_actions tables");
  if ((behavior.array() < 0.0).any() || std::abs(behavior.sum() - 1.0) > 1e-8)
    throw InvalidArgument("behavior weights must be a distribution");

  const Eigen::MatrixXd delta = fitted - reference;
  Eigen::VectorXd next_value(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    double v = 0.0;
    if (!mdp.is_terminal(static_cast<std::size_t>(s)))
      for (Eigen::Index a = 0; a < A; ++a)
        v += policy.prob(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) * delta(s, a);
    next_value(s) = v;
  }
  double total = 0.0;
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index a = 0; a < A; ++a) {
      const double w = behavior(s, a);
      if (w == 0.0) continue;
      const auto row = mdp.transition_row(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
      const double expected = Eigen::Map<const Eigen::VectorXd>(row.data(), S).dot(next_value);
      const double e = delta(s, a) - mdp.discount() * expected;
      total += w * e * e;
    }
  }
  return std::sqrt(total);
}

}  // namespace ivope::evaluation
