#include "ivope/nn/heads.hpp"

#include <cmath>
#include <numbers>

#include "ivope/error.hpp"

namespace ivope::nn {

Tensor categorical_logprob(const Tensor& logits, const std::vector<std::size_t>& targets) {
  return pick(log_softmax_rows(logits), targets);
}

std::size_t sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& logits, Rng& rng) {
  const double m = logits.maxCoeff();
  const Eigen::RowVectorXd w = (logits.array() - m).exp();
  std::uniform_real_distribution<double> u(0.0, w.sum());
  double x = u(rng);
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    x -= w(k);
    if (x < 0.0) return static_cast<std::size_t>(k);
  }
  return static_cast<std::size_t>(w.size() - 1);
}

std::size_t mixture_output_width(std::size_t n_components, std::size_t dim) {
  return n_components * (1 + 2 * dim);
}

MixtureOutput split_mixture(const Tensor& raw, std::size_t n_components, std::size_t dim) {
  if (n_components == 0 || dim == 0) throw InvalidArgument("mixture needs positive components and dimension");
  if (static_cast<std::size_t>(raw.cols()) != mixture_output_width(n_components, dim))
    throw InvalidArgument("mixture head output has the wrong width");
  const auto k = static_cast<Eigen::Index>(n_components);
  const auto kd = static_cast<Eigen::Index>(n_components * dim);
  return MixtureOutput{slice_cols(raw, 0, k), slice_cols(raw, k, kd), slice_cols(raw, k + kd, kd), n_components, dim};
}

Tensor mixture_logprob(const MixtureOutput& mix, const Matrix& targets) {
  const auto n = mix.logits.rows();
  const auto d = static_cast<Eigen::Index>(mix.dim);
  const auto k = static_cast<Eigen::Index>(mix.n_components);
  if (targets.rows() != n || targets.cols() != d) throw InvalidArgument("mixture targets have the wrong shape");
  Matrix tiled(n, k * d);
  for (Eigen::Index c = 0; c < k; ++c) tiled.middleCols(c * d, d) = targets;
  // Sum the per-dimension terms of each component with a block-indicator matmul.
  Matrix group = Matrix::Zero(k * d, k);
  for (Eigen::Index c = 0; c < k; ++c) group.block(c * d, c, d, 1).setOnes();
  const Tensor z = mul(sub(Tensor::constant(tiled), mix.means), exp(scale(mix.log_scales, -1.0)));
  const Tensor per_dim = add_scalar(sub(scale(square(z), -0.5), mix.log_scales), -0.5 * std::log(2.0 * std::numbers::pi));
  const Tensor component = matmul(per_dim, Tensor::constant(group));
  return logsumexp_rows(add(log_softmax_rows(mix.logits), component));
}

Eigen::VectorXd sample_mixture(const MixtureOutput& mix, Eigen::Index row, Rng& rng) {
  const std::size_t c = sample_categorical(mix.logits.value().row(row), rng);
  const auto d = static_cast<Eigen::Index>(mix.dim);
  const auto off = static_cast<Eigen::Index>(c) * d;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(d);
  for (Eigen::Index j = 0; j < d; ++j)
    out(j) = mix.means.value()(row, off + j) + std::exp(mix.log_scales.value()(row, off + j)) * normal(rng);
  return out;
}

}  // namespace ivope::nn
