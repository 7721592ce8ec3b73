#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ivope/nn/tensor.hpp"

namespace ivope::nn {

enum class OptimizerKind { adam, oadam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. The optimistic variant applies
/// 2 * (current Adam step) - (previous Adam step), with a zero initial cache.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return t_; }

  /// Descends along `grads`, updating the parameter tensors in place.
  void step(const std::vector<Matrix>& grads);

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::vector<Matrix> previous_;
  std::size_t t_ = 0;
};

}  // namespace ivope::nn
