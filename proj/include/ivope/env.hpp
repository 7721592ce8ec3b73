#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivope/rng.hpp"

namespace ivope::env {

/// Finite MDP with dense tables. Immutable after construction.
///
/// Tables are flat and row-major: transition[(s * A + a) * S + s'] and
/// reward[s * A + a]. Terminal states must self-loop with zero reward.
/// An optional per-state scalar position is carried along for environments
/// whose states live on a line (the chain), so that function approximators
/// can consume a real-valued state instead of an index.
class TabularMdp {
 public:
  TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
             std::vector<double> reward, std::vector<double> initial_dist,
             std::vector<bool> terminal, double discount, std::vector<double> positions = {});

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double discount() const noexcept { return discount_; }

  double transition(std::size_t s, std::size_t a, std::size_t next) const;
  std::span<const double> transition_row(std::size_t s, std::size_t a) const;
  double reward(std::size_t s, std::size_t a) const;
  std::span<const double> initial_dist() const noexcept { return initial_dist_; }
  bool is_terminal(std::size_t s) const;

  bool has_positions() const noexcept { return !positions_.empty(); }
  const std::vector<double>& positions() const noexcept { return positions_; }
  /// Scalar embedding of a state; falls back to the index when none is set.
  double position(std::size_t s) const;

  const std::vector<double>& transition_table() const noexcept { return transition_; }
  const std::vector<double>& reward_table() const noexcept { return reward_; }
  const std::vector<bool>& terminal_mask() const noexcept { return terminal_; }

  std::size_t sample_next(std::size_t s, std::size_t a, Rng& rng) const;
  std::size_t sample_initial(Rng& rng) const;

  TabularMdp with_discount(double discount) const;

 private:
  void validate() const;

  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<double> reward_;
  std::vector<double> initial_dist_;
  std::vector<bool> terminal_;
  double discount_;
  std::vector<double> positions_;
};

/// Tabular stochastic policy pi(a|s), stored row-major [s][a].
class Policy {
 public:
  Policy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

  static Policy uniform(std::size_t n_states, std::size_t n_actions);
  static Policy deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double prob(std::size_t s, std::size_t a) const;
  std::span<const double> probs(std::size_t s) const;
  std::size_t sample(std::size_t s, Rng& rng) const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

/// Q table indexed (state, action).
using QTable = Eigen::MatrixXd;

struct ExactQOptions {
  double tolerance = 1e-12;
  std::size_t max_iterations = 1'000'000;
};

/// Position of state i on [-2, 2): s_i = -2 + (4 / n) i.
double chain_position(std::size_t index, std::size_t n_states);

/// Reward kernel of the chain, exp(-s^2 / 0.2^2).
double chain_reward(double position);

/// Chain MDP: one action ("right"); from i < n-1 advance with probability p,
/// otherwise stay; state n-1 is terminal; episodes start at state 0.
TabularMdp make_chain_mdp(std::size_t n_states, double p_advance, double discount);

/// The only policy of the chain: always "right".
Policy chain_policy(const TabularMdp& mdp);

/// Policy evaluation by synchronous Bellman backups until the sup-norm change
/// drops below `tolerance`. Throws ConvergenceError naming the cap otherwise.
QTable exact_q(const TabularMdp& mdp, const Policy& policy, const ExactQOptions& options = {});

/// Backward recursion Q(s_i) = (r_i + g p Q(s_{i+1})) / (1 - g (1 - p)) for
/// the chain, with Q(terminal) = 0.
QTable chain_closed_form_q(std::size_t n_states, double p_advance, double discount);

/// Sup-norm Bellman residual of Q under (mdp, policy); terminal rows must be 0.
double bellman_residual(const TabularMdp& mdp, const Policy& policy, const QTable& q);

/// Replace the agent's action by a uniformly drawn action with probability
/// p_random. Transitions and rewards are mixed identically.
TabularMdp perturb_discrete_actions(const TabularMdp& mdp, double p_random);

double policy_value_exact(const TabularMdp& mdp, const Policy& policy, const QTable& q);
double policy_value_exact(const TabularMdp& mdp, const Policy& policy);

/// Stationary pooled state-action distribution of logged chain episodes:
/// uniform over non-terminal states. Rows index states, columns actions.
Eigen::MatrixXd chain_behavior_distribution(const TabularMdp& mdp);

std::string mdp_to_text(const TabularMdp& mdp);
TabularMdp mdp_from_text(const std::string& text);
void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path);
TabularMdp load_mdp(const std::filesystem::path& path);

}  // namespace ivope::env
