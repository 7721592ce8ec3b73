#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ivope/nn/tensor.hpp"
#include "ivope/rng.hpp"

namespace ivope::nn {

enum class Activation { relu, elu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct MlpSpec {
  /// Input width, hidden widths, output width.
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;
  /// Normalize the first hidden layer's pre-activations (with learned gain and bias).
  bool layer_norm = false;
  /// Apply the activation to the output layer too (feature networks).
  bool activate_output = false;

  bool operator==(const MlpSpec&) const = default;
};

/// Fully connected network. Copies are deep (independent parameters).
class Mlp {
 public:
  /// Weights and biases ~ U(-sqrt(1 / fan_in), sqrt(1 / fan_in)).
  Mlp(MlpSpec spec, Rng& rng);
  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t input_dim() const { return spec_.layer_sizes.front(); }
  std::size_t output_dim() const { return spec_.layer_sizes.back(); }

  /// Order: (W_0, b_0, [ln_gain, ln_bias], W_1, b_1, ...).
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;
  static std::size_t parameter_count(const MlpSpec& spec);

  Tensor forward(const Tensor& x) const;
  Matrix predict(const Matrix& x) const;

  std::vector<Matrix> values() const;
  void set_values(const std::vector<Matrix>& values);

  /// Sum of squared parameters, differentiable.
  Tensor l2() const;

 private:
  MlpSpec spec_;
  std::vector<Tensor> params_;
};

}  // namespace ivope::nn
