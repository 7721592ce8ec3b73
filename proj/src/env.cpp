#include "ivope/env.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ivope/error.hpp"

namespace ivope::env {
namespace {

constexpr double kStochasticTolerance = 1e-12;

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

void check_distribution(std::span<const double> probs, const std::string& what) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument(what + " has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kStochasticTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << what << " sums to " << total << ", expected 1";
    throw InvalidArgument(os.str());
  }
}

}  // namespace

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
                       std::vector<double> reward, std::vector<double> initial_dist,
                       std::vector<bool> terminal, double discount, std::vector<double> positions)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      initial_dist_(std::move(initial_dist)),
      terminal_(std::move(terminal)),
      discount_(discount),
      positions_(std::move(positions)) {
  validate();
}

void TabularMdp::validate() const {
  if (n_states_ == 0 || n_actions_ == 0) throw InvalidArgument("MDP needs at least one state and one action");
  if (transition_.size() != n_states_ * n_actions_ * n_states_)
    throw InvalidArgument("transition table has wrong size");
  if (reward_.size() != n_states_ * n_actions_) throw InvalidArgument("reward table has wrong size");
  if (initial_dist_.size() != n_states_) throw InvalidArgument("initial distribution has wrong size");
  if (terminal_.size() != n_states_) throw InvalidArgument("terminal mask has wrong size");
  if (!positions_.empty() && positions_.size() != n_states_)
    throw InvalidArgument("position table has wrong size");
  if (!(discount_ >= 0.0 && discount_ <= 1.0)) throw InvalidArgument("discount must lie in [0, 1]");
  for (double r : reward_)
    if (!std::isfinite(r)) throw InvalidArgument("reward table has a non-finite entry");
  check_distribution(initial_dist_, "initial distribution");
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      check_distribution(transition_row(s, a),
                         "transition row (" + std::to_string(s) + ", " + std::to_string(a) + ")");
      if (terminal_[s]) {
        if (transition(s, a, s) != 1.0)
          throw InvalidArgument("terminal state " + std::to_string(s) + " must self-loop");
        if (reward(s, a) != 0.0)
          throw InvalidArgument("terminal state " + std::to_string(s) + " must have zero reward");
      }
    }
  }
}

double TabularMdp::transition(std::size_t s, std::size_t a, std::size_t next) const {
  return transition_[(s * n_actions_ + a) * n_states_ + next];
}

std::span<const double> TabularMdp::transition_row(std::size_t s, std::size_t a) const {
  return std::span<const double>(transition_).subspan((s * n_actions_ + a) * n_states_, n_states_);
}

double TabularMdp::reward(std::size_t s, std::size_t a) const { return reward_[s * n_actions_ + a]; }

bool TabularMdp::is_terminal(std::size_t s) const { return terminal_.at(s); }

double TabularMdp::position(std::size_t s) const {
  return positions_.empty() ? static_cast<double>(s) : positions_.at(s);
}

std::size_t TabularMdp::sample_next(std::size_t s, std::size_t a, Rng& rng) const {
  return sample_categorical(transition_row(s, a), rng);
}

std::size_t TabularMdp::sample_initial(Rng& rng) const { return sample_categorical(initial_dist_, rng); }

TabularMdp TabularMdp::with_discount(double discount) const {
  return TabularMdp(n_states_, n_actions_, transition_, reward_, initial_dist_, terminal_, discount, positions_);
}

Policy::Policy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (probs_.size() != n_states_ * n_actions_) throw InvalidArgument("policy table has wrong size");
  for (std::size_t s = 0; s < n_states_; ++s) check_distribution(this->probs(s), "policy row " + std::to_string(s));
}

Policy Policy::uniform(std::size_t n_states, std::size_t n_actions) {
  return Policy(n_states, n_actions, std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
}

Policy Policy::deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions) {
  std::vector<double> probs(actions.size() * n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw InvalidArgument("action index out of range");
    probs[s * n_actions + actions[s]] = 1.0;
  }
  return Policy(actions.size(), n_actions, std::move(probs));
}

double Policy::prob(std::size_t s, std::size_t a) const { return probs_.at(s * n_actions_ + a); }

std::span<const double> Policy::probs(std::size_t s) const {
  return std::span<const double>(probs_).subspan(s * n_actions_, n_actions_);
}

std::size_t Policy::sample(std::size_t s, Rng& rng) const {
  if (n_actions_ == 1) return 0;
  return sample_categorical(probs(s), rng);
}

double chain_position(std::size_t index, std::size_t n_states) {
  return -2.0 + (4.0 / static_cast<double>(n_states)) * static_cast<double>(index);
}

double chain_reward(double position) { return std::exp(-(position * position) / (0.2 * 0.2)); }

TabularMdp make_chain_mdp(std::size_t n_states, double p_advance, double discount) {
  if (n_states < 2) throw InvalidArgument("chain needs at least two states");
  if (!(p_advance > 0.0 && p_advance <= 1.0))
    throw InvalidArgument("p_advance must lie in (0, 1]; p = 0 never terminates");
  const std::size_t last = n_states - 1;
  std::vector<double> transition(n_states * n_states, 0.0);
  std::vector<double> reward(n_states, 0.0);
  std::vector<double> positions(n_states);
  std::vector<bool> terminal(n_states, false);
  for (std::size_t i = 0; i < n_states; ++i) {
    positions[i] = chain_position(i, n_states);
    if (i == last) {
      transition[i * n_states + i] = 1.0;
      terminal[i] = true;
      continue;
    }
    transition[i * n_states + i + 1] = p_advance;
    transition[i * n_states + i] += 1.0 - p_advance;
    reward[i] = chain_reward(positions[i]);
  }
  std::vector<double> initial(n_states, 0.0);
  initial[0] = 1.0;
  return TabularMdp(n_states, 1, std::move(transition), std::move(reward), std::move(initial), std::move(terminal),
                    discount, std::move(positions));
}

Policy chain_policy(const TabularMdp& mdp) { return Policy::uniform(mdp.n_states(), 1); }

namespace {

// Expected next-state value V(s') = sum_a' pi(a'|s') Q(s', a'), zero at terminals.
Eigen::VectorXd next_values(const TabularMdp& mdp, const Policy& policy, const QTable& q) {
  Eigen::VectorXd v(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double acc = 0.0;
    if (!mdp.is_terminal(s))
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) acc += policy.prob(s, a) * q(s, a);
    v(s) = acc;
  }
  return v;
}

QTable backup(const TabularMdp& mdp, const Policy& policy, const QTable& q) {
  const Eigen::VectorXd v = next_values(mdp, policy, q);
  QTable out = QTable::Zero(mdp.n_states(), mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const auto row = mdp.transition_row(s, a);
      double expected = 0.0;
      for (std::size_t next = 0; next < row.size(); ++next)
        if (row[next] != 0.0) expected += row[next] * v(next);
      out(s, a) = mdp.reward(s, a) + mdp.discount() * expected;
    }
  }
  return out;
}

void check_policy_shape(const TabularMdp& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw InvalidArgument("policy shape does not match the MDP");
}

}  // namespace

QTable exact_q(const TabularMdp& mdp, const Policy& policy, const ExactQOptions& options) {
  check_policy_shape(mdp, policy);
  QTable q = QTable::Zero(mdp.n_states(), mdp.n_actions());
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    QTable next = backup(mdp, policy, q);
    const double change = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (change <= options.tolerance) return q;
  }
  throw ConvergenceError("policy evaluation did not converge within the iteration cap of " +
                         std::to_string(options.max_iterations) + " sweeps");
}

QTable chain_closed_form_q(std::size_t n_states, double p_advance, double discount) {
  QTable q = QTable::Zero(n_states, 1);
  for (std::size_t k = n_states - 1; k-- > 0;) {
    const double r = chain_reward(chain_position(k, n_states));
    q(k, 0) = (r + discount * p_advance * q(k + 1, 0)) / (1.0 - discount * (1.0 - p_advance));
  }
  return q;
}

double bellman_residual(const TabularMdp& mdp, const Policy& policy, const QTable& q) {
  check_policy_shape(mdp, policy);
  return (backup(mdp, policy, q) - q).cwiseAbs().maxCoeff();
}

TabularMdp perturb_discrete_actions(const TabularMdp& mdp, double p_random) {
  if (!(p_random >= 0.0 && p_random <= 1.0)) throw InvalidArgument("p_random must lie in [0, 1]");
  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_actions();
  std::vector<double> transition(S * A * S, 0.0);
  std::vector<double> reward(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<double> mean_row(S, 0.0);
    double mean_reward = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      const auto row = mdp.transition_row(s, a);
      for (std::size_t n = 0; n < S; ++n) mean_row[n] += row[n] / static_cast<double>(A);
      mean_reward += mdp.reward(s, a) / static_cast<double>(A);
    }
    for (std::size_t a = 0; a < A; ++a) {
      const auto row = mdp.transition_row(s, a);
      for (std::size_t n = 0; n < S; ++n)
        transition[(s * A + a) * S + n] = (1.0 - p_random) * row[n] + p_random * mean_row[n];
      reward[s * A + a] = (1.0 - p_random) * mdp.reward(s, a) + p_random * mean_reward;
    }
    if (mdp.is_terminal(s))
      for (std::size_t a = 0; a < A; ++a) {
        std::fill_n(transition.begin() + static_cast<std::ptrdiff_t>((s * A + a) * S), S, 0.0);
        transition[(s * A + a) * S + s] = 1.0;
        reward[s * A + a] = 0.0;
      }
  }
  std::vector<double> initial(mdp.initial_dist().begin(), mdp.initial_dist().end());
  return TabularMdp(S, A, std::move(transition), std::move(reward), std::move(initial), mdp.terminal_mask(),
                    mdp.discount(), mdp.positions());
}

double policy_value_exact(const TabularMdp& mdp, const Policy& policy, const QTable& q) {
  check_policy_shape(mdp, policy);
  double rho = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    const double mu = mdp.initial_dist()[s];
    if (mu == 0.0) continue;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) rho += mu * policy.prob(s, a) * q(s, a);
  }
  return rho;
}

double policy_value_exact(const TabularMdp& mdp, const Policy& policy) {
  return policy_value_exact(mdp, policy, exact_q(mdp, policy));
}

Eigen::MatrixXd chain_behavior_distribution(const TabularMdp& mdp) {
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_actions());
  std::size_t live = 0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) live += mdp.is_terminal(s) ? 0 : 1;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    if (!mdp.is_terminal(s))
      for (std::size_t a = 0; a < mdp.n_actions(); ++a)
        mu(s, a) = 1.0 / static_cast<double>(live * mdp.n_actions());
  return mu;
}

std::string mdp_to_text(const TabularMdp& mdp) {
  nlohmann::ordered_json j;
  j["format"] = "ivope.mdp/1";
  j["n_states"] = mdp.n_states();
  j["n_actions"] = mdp.n_actions();
  j["discount"] = mdp.discount();
  j["initial_dist"] = mdp.initial_dist();
  j["terminal"] = mdp.terminal_mask();
  j["positions"] = mdp.positions();
  auto rows = nlohmann::ordered_json::array();
  auto rewards = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    auto state_rows = nlohmann::ordered_json::array();
    auto state_rewards = nlohmann::ordered_json::array();
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      state_rows.push_back(mdp.transition_row(s, a));
      state_rewards.push_back(mdp.reward(s, a));
    }
    rows.push_back(std::move(state_rows));
    rewards.push_back(std::move(state_rewards));
  }
  j["transition"] = std::move(rows);
  j["reward"] = std::move(rewards);
  return j.dump(1) + "\n";
}

TabularMdp mdp_from_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("malformed MDP file: ") + e.what());
  }
  try {
    if (j.at("format") != "ivope.mdp/1") throw ParseError(0, "unsupported MDP format tag");
    const auto S = j.at("n_states").get<std::size_t>();
    const auto A = j.at("n_actions").get<std::size_t>();
    std::vector<double> transition;
    std::vector<double> reward;
    transition.reserve(S * A * S);
    reward.reserve(S * A);
    const auto& rows = j.at("transition");
    const auto& rewards = j.at("reward");
    if (rows.size() != S || rewards.size() != S) throw ParseError(0, "table sizes disagree with n_states");
    for (std::size_t s = 0; s < S; ++s) {
      if (rows[s].size() != A || rewards[s].size() != A) throw ParseError(0, "table sizes disagree with n_actions");
      for (std::size_t a = 0; a < A; ++a) {
        const auto row = rows[s][a].get<std::vector<double>>();
        if (row.size() != S) throw ParseError(0, "transition row has wrong length");
        transition.insert(transition.end(), row.begin(), row.end());
        reward.push_back(rewards[s][a].get<double>());
      }
    }
    return TabularMdp(S, A, std::move(transition), std::move(reward), j.at("initial_dist").get<std::vector<double>>(),
                      j.at("terminal").get<std::vector<bool>>(), j.at("discount").get<double>(),
                      j.value("positions", std::vector<double>{}));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("malformed MDP file: ") + e.what());
  }
}

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << mdp_to_text(mdp);
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return mdp_from_text(ss.str());
}

}  // namespace ivope::env
