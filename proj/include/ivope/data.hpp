#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivope/env.hpp"

namespace ivope::data {

enum class SplitTag : std::uint8_t { none, train, valid };

/// One logged tuple, materialized. The dataset itself stores columns.
struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

/// Logged (s, a, r, s', terminal) tuples in columnar storage. Tabular states
/// are stored as their index (state_dim = 1); encodings are applied downstream.
/// On terminal rows next_state holds the absorbing state.
class TransitionDataset {
 public:
  explicit TransitionDataset(std::size_t state_dim = 1, std::uint64_t seed = 0, std::string source = {});

  void push_back(std::span<const double> state, std::size_t action, double reward,
                 std::span<const double> next_state, bool terminal);
  void push_back(const Transition& t);
  void reserve(std::size_t n);

  std::size_t size() const noexcept { return actions_.size(); }
  bool empty() const noexcept { return actions_.empty(); }
  std::size_t state_dim() const noexcept { return state_dim_; }

  std::span<const double> state(std::size_t i) const;
  std::span<const double> next_state(std::size_t i) const;
  std::size_t action(std::size_t i) const { return actions_[i]; }
  double reward(std::size_t i) const { return rewards_[i]; }
  bool terminal(std::size_t i) const { return terminals_[i] != 0; }
  Transition row(std::size_t i) const;

  /// Integer state index of a tabular row (state_dim must be 1).
  std::size_t state_index(std::size_t i) const;
  std::size_t next_state_index(std::size_t i) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& source() const noexcept { return source_; }
  SplitTag split_tag() const noexcept { return split_; }
  void set_split_tag(SplitTag tag) noexcept { split_ = tag; }

  TransitionDataset subset(std::span<const std::size_t> rows) const;

  /// Field-exact equality of the logged tuples (metadata excluded).
  bool same_rows(const TransitionDataset& other) const;

 private:
  std::size_t state_dim_;
  std::uint64_t seed_;
  std::string source_;
  SplitTag split_ = SplitTag::none;
  std::vector<double> states_;
  std::vector<double> next_states_;
  std::vector<std::size_t> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> terminals_;
};

/// Roll episodes from mu0 under `policy` until termination, pooling
/// transitions; the last episode is truncated so exactly n rows are kept.
TransitionDataset generate_episodes(const env::TabularMdp& mdp, const env::Policy& policy,
                                    std::size_t n_transitions, std::uint64_t seed);

TransitionDataset generate_chain_dataset(const env::TabularMdp& mdp, std::size_t n_transitions, std::uint64_t seed);

/// State weights proportional to exp(alpha * s_i) over non-terminal states.
std::vector<double> shifted_state_weights(const env::TabularMdp& mdp, double alpha);

/// Draw states i.i.d. from shifted_state_weights and simulate one step each.
TransitionDataset resample_shifted(const env::TabularMdp& mdp, const env::Policy& policy, double alpha,
                                   std::size_t n, std::uint64_t seed);

/// Random disjoint partition. The train part gets floor(ratio * n) rows,
/// clamped to [1, n - 1]; both parts keep the original row order.
std::pair<TransitionDataset, TransitionDataset> split(const TransitionDataset& dataset, double ratio,
                                                      std::uint64_t seed);

inline constexpr double kTrainValidRatio = 0.9;

void write_csv(const TransitionDataset& dataset, std::ostream& out);
TransitionDataset read_csv(std::istream& in);
void save(const TransitionDataset& dataset, const std::filesystem::path& path);
TransitionDataset load(const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_real(double value);

}  // namespace ivope::data
