#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivope/data.hpp"
#include "ivope/env.hpp"
#include "ivope/features.hpp"
#include "ivope/nn/mlp.hpp"
#include "ivope/nn/optimizer.hpp"

namespace ivope::neural {

using nn::Matrix;

/// How logged states become network inputs: a state encoder (for the chain,
/// index -> scalar position) followed by a one-hot action block when there is
/// more than one action.
struct InputSpace {
  features::FeatureMap state_encoder;
  std::size_t n_actions = 1;
  /// Encoded state of each tabular index, used to map continuous samples back
  /// to the nearest tabular state when a policy must be queried.
  std::vector<Eigen::VectorXd> state_codes;

  std::size_t state_dim() const { return state_encoder.dim(); }
  std::size_t input_dim() const { return state_dim() + (n_actions > 1 ? n_actions : 0); }

  Eigen::VectorXd encode_state(std::size_t state) const;
  /// Rows [x | one-hot(a)] (the one-hot block is omitted for one action).
  Matrix q_input(const Matrix& x, const std::vector<std::size_t>& actions) const;
  std::size_t nearest_state(const Eigen::Ref<const Eigen::VectorXd>& code) const;
};

/// Scalar position input for a tabular MDP with positions.
InputSpace positional_input_space(const env::TabularMdp& mdp);
/// One-hot state index input.
InputSpace one_hot_input_space(const env::TabularMdp& mdp);

/// Column views of a tabular dataset in the encoded space.
struct EncodedData {
  Matrix x;
  Matrix x_next;
  std::vector<std::size_t> states;
  std::vector<std::size_t> next_states;
  std::vector<std::size_t> actions;
  Eigen::VectorXd reward;
  Eigen::VectorXd not_done;

  std::size_t size() const { return states.size(); }
  EncodedData gather(const std::vector<std::size_t>& rows) const;
};

EncodedData encode(const data::TransitionDataset& dataset, const InputSpace& space);

/// Epoch-wise shuffled minibatches. A batch never straddles two epochs; the
/// tail of an epoch shorter than the batch is dropped. Batches at least as
/// large as the dataset return every row.
class BatchSampler {
 public:
  BatchSampler(std::size_t n_rows, std::size_t batch_size, std::uint64_t seed, std::uint64_t stream_index = 0);
  std::vector<std::size_t> next();
  std::size_t batch_size() const noexcept { return batch_; }

 private:
  void reshuffle();
  std::size_t n_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
};

std::vector<std::size_t> sample_actions(const env::Policy& policy, const std::vector<std::size_t>& states,
                                        const Eigen::VectorXd& not_done, Rng& rng);

/// A fitted neural Q function; queried on tabular (state, action).
class NeuralQ {
 public:
  NeuralQ(InputSpace space, nn::Mlp net);

  const InputSpace& space() const noexcept { return space_; }
  const nn::Mlp& net() const noexcept { return net_; }

  double q(std::size_t state, std::size_t action) const;
  Eigen::VectorXd q_batch(const Matrix& x, const std::vector<std::size_t>& actions) const;
  env::QTable table(std::size_t n_states, std::size_t n_actions) const;

  void save(const std::filesystem::path& path) const;

 private:
  InputSpace space_;
  nn::Mlp net_;
};

struct CurvePoint {
  std::size_t step = 0;
  double train_loss = 0.0;
  double valid_metric = 0.0;
  double value_estimate = 0.0;
};

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out);
void save_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

struct Checkpoint {
  std::size_t step = 0;
  std::vector<Matrix> q_values;
  std::vector<Matrix> g_values;
};

struct FitResult {
  NeuralQ q;
  std::vector<CurvePoint> curve;
  /// Method-specific held-out criterion (lower is better).
  double validation_metric = 0.0;
  std::map<std::string, double> diagnostics;
  std::vector<Checkpoint> checkpoints;
  /// Set when training stopped on a non-finite loss and the result falls back
  /// to the last finite checkpoint.
  std::optional<std::string> abort_reason;
};

/// Everything a fit needs besides its hyperparameters.
struct Problem {
  const data::TransitionDataset& train;
  const data::TransitionDataset& valid;
  const env::Policy& policy;
  InputSpace space;
  double discount = 0.99;
  /// When set, training curves record the exact policy value of the current Q
  /// under this MDP's initial distribution; otherwise Q(state 0, action 0).
  const env::TabularMdp* mdp = nullptr;
};

struct CommonConfig {
  std::uint64_t seed = 0;
  std::size_t n_steps = 10000;
  std::size_t batch_size = 1024;
  std::vector<std::size_t> hidden = {50, 50};
  nn::Activation activation = nn::Activation::relu;
  bool layer_norm = false;
  std::size_t log_interval = 100;
  /// Optional per-log callback (step, curve point); lets the harness stream curves.
  std::function<void(const CurvePoint&)> on_log;
};

nn::MlpSpec q_network_spec(const InputSpace& space, const CommonConfig& common);

double value_of(const NeuralQ& q, const Problem& problem);

/// Throws TrainingAborted when `loss` is not finite.
void require_finite(double loss, std::size_t step, const char* what);

}  // namespace ivope::neural
