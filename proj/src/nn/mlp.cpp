#include "ivope/nn/mlp.hpp"

#include <cmath>

#include "ivope/error.hpp"

namespace ivope::nn {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  throw InvalidArgument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "elu"; }

namespace {

void validate(const MlpSpec& spec) {
  if (spec.layer_sizes.size() < 2) throw InvalidArgument("an MLP needs at least input and output sizes");
  for (std::size_t s : spec.layer_sizes)
    if (s == 0) throw InvalidArgument("MLP layer sizes must be positive");
  if (spec.layer_norm && spec.layer_sizes.size() < 3) throw InvalidArgument("layer norm needs a hidden layer");
}

Tensor activate(const Tensor& x, Activation a) { return a == Activation::relu ? relu(x) : elu(x); }

}  // namespace

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  validate(spec_);
  const auto& sizes = spec_.layer_sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(in, out);
    for (Eigen::Index j = 0; j < out; ++j)
      for (Eigen::Index i = 0; i < in; ++i) w(i, j) = u(rng);
    Matrix b(1, out);
    for (Eigen::Index j = 0; j < out; ++j) b(0, j) = u(rng);
    params_.push_back(Tensor::parameter(std::move(w)));
    params_.push_back(Tensor::parameter(std::move(b)));
    if (l == 0 && spec_.layer_norm) {
      params_.push_back(Tensor::parameter(Matrix::Ones(1, out)));
      params_.push_back(Tensor::parameter(Matrix::Zero(1, out)));
    }
  }
}

Mlp::Mlp(const Mlp& other) : spec_(other.spec_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(Tensor::parameter(p.value()));
}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    Mlp copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t Mlp::parameter_count(const MlpSpec& spec) {
  validate(spec);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l)
    n += (spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1];
  if (spec.layer_norm) n += 2 * spec.layer_sizes[1];
  return n;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value().size());
  return n;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim())
    throw InvalidArgument("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                          std::to_string(input_dim()));
  const std::size_t n_layers = spec_.layer_sizes.size() - 1;
  Tensor h = x;
  std::size_t k = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = add_row(matmul(h, params_[k]), params_[k + 1]);
    k += 2;
    if (l == 0 && spec_.layer_norm) {
      h = add_row(mul_row(layer_norm(h), params_[k]), params_[k + 1]);
      k += 2;
    }
    if (l + 1 < n_layers || spec_.activate_output) h = activate(h, spec_.activation);
  }
  return h;
}

Matrix Mlp::predict(const Matrix& x) const { return forward(Tensor::constant(x)).value(); }

std::vector<Matrix> Mlp::values() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value());
  return out;
}

void Mlp::set_values(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw InvalidArgument("parameter list length does not match the network");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].rows() != params_[i].rows() || values[i].cols() != params_[i].cols())
      throw InvalidArgument("parameter " + std::to_string(i) + " has the wrong shape");
    params_[i].mutable_value() = values[i];
  }
}

Tensor Mlp::l2() const {
  Tensor total = sum_squares(params_.front());
  for (std::size_t i = 1; i < params_.size(); ++i) total = total + sum_squares(params_[i]);
  return total;
}

}  // namespace ivope::nn
