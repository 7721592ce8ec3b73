#pragma once

#include <string>

#include "ivope/nn/tensor.hpp"

namespace ivope::neural {

using nn::Matrix;
using nn::Tensor;

/// All batch quantities are n x 1 columns; `not_done` zeroes bootstrap terms.

/// mean (r - q + g nd q1')(r - q + g nd q2') with two independent next actions.
Tensor dbrm_loss(const Tensor& q, const Tensor& q_next1, const Tensor& q_next2, const Matrix& reward,
                 const Matrix& not_done, double discount);

/// mean (q - target)^2 with a constant target.
Tensor fqe_loss(const Tensor& q, const Matrix& target);

/// r + g nd q_target'.
Matrix fqe_target(const Matrix& reward, const Matrix& not_done, const Matrix& q_target_next, double discount);

/// mean (r - (q - g mean_m nd_m q'_m))^2 over M sampled next states (n x M).
Tensor deep_iv_stage2_loss(const Tensor& q, const Tensor& q_next_samples, const Matrix& not_done_samples,
                           const Matrix& reward, double discount);

/// -mean log p(next state index).
Tensor categorical_treatment_loss(const Tensor& logits, const std::vector<std::size_t>& next_states);

/// -mean [log Bernoulli(done) + (1 - done) log mixture(x')] over raw output
/// columns [mixture | terminal logit].
Tensor mixture_treatment_loss(const Tensor& raw, std::size_t n_components, const Matrix& next_x,
                              const Matrix& not_done);

struct DfivStage1 {
  Tensor loss;
  Tensor v;
};

/// Ridge of target on [psi] with loss mean |target - psi V|^2 + l1 |V|^2.
DfivStage1 dfiv_stage1(const Tensor& psi, const Tensor& target, double lambda1);

struct DfivStage2 {
  Tensor loss;
  Tensor theta;
};

/// theta = ridge(psi2 V, r); loss mean (r - psi2 V theta)^2 + l2 |theta|^2.
DfivStage2 dfiv_stage2(const Tensor& psi2, const Tensor& v, const Matrix& reward, double lambda2);

enum class AdversarialMethod { agmm, asem, deepgmm };

AdversarialMethod parse_adversarial_method(const std::string& name);
std::string to_string(AdversarialMethod m);

struct AdversarialConstants {
  double a = 0.0;      // Q parameter L2
  double b = 0.0;      // g parameter L2
  double alpha = 0.0;  // ASEM mean Q^2 weight
};

struct AdversarialLosses {
  Tensor q_loss;
  Tensor g_loss;
  double psi = 0.0;
};

/// Psi = mean[(r - q + g nd q') g_out]. Q descends q_loss = Psi + R_Q and g
/// descends g_loss = -Psi + R_g:
///   agmm     R_Q = a |theta|^2                     R_g = mean g^2 + b |tau|^2
///   asem     R_Q = alpha/2 mean q^2 + a |theta|^2  R_g = 1/2 mean g^2 + b |tau|^2
///   deepgmm  R_Q = 0                               R_g = 1/4 mean[g^2 rho~^2]
/// where rho~ is the residual of a detached snapshot of Q. Parameter sums of
/// squares are passed in so that callers choose what they cover.
AdversarialLosses adversarial_objective(const Tensor& q, const Tensor& g, const Matrix& reward, const Tensor& q_next,
                                        const Matrix& not_done, double discount, AdversarialMethod method,
                                        const AdversarialConstants& constants, const Tensor& q_param_l2,
                                        const Tensor& g_param_l2, const Matrix& residual_snapshot);

/// r - q + g nd q'.
Tensor td_residual(const Tensor& q, const Tensor& q_next, const Matrix& reward, const Matrix& not_done,
                   double discount);

}  // namespace ivope::neural
