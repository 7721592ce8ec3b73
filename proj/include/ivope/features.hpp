#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ivope::features {

/// A pure map (state[, action]) -> R^dim. Immutable and reentrant.
class FeatureMap {
 public:
  using Fn = std::function<void(std::span<const double> state, std::size_t action, Eigen::Ref<Eigen::VectorXd> out)>;

  FeatureMap(std::size_t dim, Fn fn, std::string descriptor);

  std::size_t dim() const noexcept { return dim_; }
  const std::string& descriptor() const noexcept { return descriptor_; }

  Eigen::VectorXd operator()(std::span<const double> state, std::size_t action = 0) const;
  Eigen::VectorXd operator()(double state, std::size_t action = 0) const;
  void apply_into(std::span<const double> state, std::size_t action, Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  std::size_t dim_;
  Fn fn_;
  std::string descriptor_;
};

/// Gaussian bumps exp(-(s - c_j)^2 / width^2) at c_j = -2 + (4 / D) j over a
/// scalar state.
FeatureMap gaussian_grid_features(std::size_t n_centers, double width = 0.1);

/// Random Fourier features for the squared-exponential kernel
/// exp(-|x - y|^2 / (2 bandwidth^2)).
struct RffSpec {
  std::size_t n_features = 0;
  std::size_t input_dim = 1;
  double bandwidth = 1.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd frequencies;  // n_features x input_dim, entries ~ N(0, 1 / bandwidth^2)
  Eigen::VectorXd phases;       // n_features, entries ~ U[0, 2 pi)

  static RffSpec sample(std::size_t n_features, std::size_t input_dim, double bandwidth, std::uint64_t seed);
};

FeatureMap rff_features(const RffSpec& spec);

/// Median pairwise Euclidean distance over at most `subsample` rows of `points`.
double median_heuristic_bandwidth(const Eigen::MatrixXd& points, std::uint64_t seed, std::size_t subsample = 1000);

/// [state features || one-hot(a)]. Throws on out-of-range actions.
FeatureMap state_action_concat(const FeatureMap& state_encoder, std::size_t n_actions);

/// Like state_action_concat, except that a single-action problem uses the
/// state features unchanged (a constant one-hot column would be collinear).
FeatureMap state_action_features(const FeatureMap& state_encoder, std::size_t n_actions);

/// Composes a scalar-state map with a tabular embedding: the incoming state
/// is an index, replaced by positions[index] before `inner` is applied.
FeatureMap embed_states(const FeatureMap& inner, std::vector<double> positions);

/// One-hot indicator of the state index over non-terminal states; terminal
/// states map to the zero vector.
FeatureMap tabular_features(const std::vector<bool>& terminal);

}  // namespace ivope::features
