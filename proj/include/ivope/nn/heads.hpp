#pragma once

#include <cstddef>
#include <vector>

#include "ivope/nn/tensor.hpp"
#include "ivope/rng.hpp"

namespace ivope::nn {

/// log p(target_i) under softmax(logits_i); n x 1.
Tensor categorical_logprob(const Tensor& logits, const std::vector<std::size_t>& targets);

std::size_t sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& logits, Rng& rng);

/// Diagonal Gaussian mixture over R^dim, parameterized per row.
struct MixtureOutput {
  Tensor logits;      // n x K
  Tensor means;       // n x (K * dim), component-major
  Tensor log_scales;  // n x (K * dim)
  std::size_t n_components = 1;
  std::size_t dim = 1;
};

/// Width of a raw network output that split_mixture accepts.
std::size_t mixture_output_width(std::size_t n_components, std::size_t dim);

/// Columns of `raw` are [K logits | K*dim means | K*dim log-scales].
MixtureOutput split_mixture(const Tensor& raw, std::size_t n_components, std::size_t dim);

/// log sum_k w_k N(target; mu_k, diag(sigma_k^2)) via log-sum-exp; n x 1.
Tensor mixture_logprob(const MixtureOutput& mixture, const Matrix& targets);

/// One draw from row `row` of the mixture.
Eigen::VectorXd sample_mixture(const MixtureOutput& mixture, Eigen::Index row, Rng& rng);

}  // namespace ivope::nn
