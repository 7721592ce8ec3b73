#include "ivope/nn/optimizer.hpp"

#include <cmath>

#include "ivope/error.hpp"

namespace ivope::nn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "oadam") return OptimizerKind::oadam;
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "oadam"; }

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be non-negative");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0))
    throw InvalidArgument("optimizer betas must lie in [0, 1)");
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    if (config_.kind == OptimizerKind::oadam) previous_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Optimizer::step(const std::vector<Matrix>& grads) {
  if (grads.size() != params_.size()) throw InvalidArgument("gradient list length does not match parameters");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params_[i].rows() || g.cols() != params_[i].cols())
      throw InvalidArgument("gradient " + std::to_string(i) + " has the wrong shape");
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseAbs2();
    const Matrix delta =
        -config_.learning_rate * ((m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + config_.epsilon)).matrix();
    if (config_.kind == OptimizerKind::oadam) {
      params_[i].mutable_value() += 2.0 * delta - previous_[i];
      previous_[i] = delta;
    } else {
      params_[i].mutable_value() += delta;
    }
  }
}

}  // namespace ivope::nn
