#pragma once

// Shared training-loop plumbing for the neural fits.

#include <vector>

#include "ivope/neural/common.hpp"

namespace ivope::neural::detail {

class CurveLogger {
 public:
  CurveLogger(const Problem& problem, const CommonConfig& common, std::vector<CurvePoint>& curve)
      : problem_(problem), common_(common), curve_(curve) {}

  bool due(std::size_t step) const {
    return common_.log_interval > 0 && (step % common_.log_interval == 0 || step == common_.n_steps);
  }

  void record(std::size_t step, double train_loss, double valid_metric, double value_estimate) {
    CurvePoint p{step, train_loss, valid_metric, value_estimate};
    curve_.push_back(p);
    if (common_.on_log) common_.on_log(p);
  }

  double value(const nn::Mlp& q_net) const { return value_of(NeuralQ(problem_.space, q_net), problem_); }

 private:
  const Problem& problem_;
  const CommonConfig& common_;
  std::vector<CurvePoint>& curve_;
};

inline nn::Tensor input_tensor(const InputSpace& space, const Matrix& x, const std::vector<std::size_t>& actions) {
  return nn::Tensor::constant(space.q_input(x, actions));
}

inline Matrix column(const Eigen::VectorXd& v) { return Matrix(v); }

}  // namespace ivope::neural::detail
