#include "ivope/neural/losses.hpp"

#include "ivope/error.hpp"
#include "ivope/nn/heads.hpp"

namespace ivope::neural {

using namespace nn;

Tensor td_residual(const Tensor& q, const Tensor& q_next, const Matrix& reward, const Matrix& not_done,
                   double discount) {
  const Tensor boot = mul(q_next, Tensor::constant(discount * not_done));
  return add(sub(Tensor::constant(reward), q), boot);
}

Tensor dbrm_loss(const Tensor& q, const Tensor& q_next1, const Tensor& q_next2, const Matrix& reward,
                 const Matrix& not_done, double discount) {
  return mean(mul(td_residual(q, q_next1, reward, not_done, discount),
                  td_residual(q, q_next2, reward, not_done, discount)));
}

Tensor fqe_loss(const Tensor& q, const Matrix& target) { return mean(square(sub(q, Tensor::constant(target)))); }

Matrix fqe_target(const Matrix& reward, const Matrix& not_done, const Matrix& q_target_next, double discount) {
  return reward + discount * not_done.cwiseProduct(q_target_next);
}

Tensor deep_iv_stage2_loss(const Tensor& q, const Tensor& q_next_samples, const Matrix& not_done_samples,
                           const Matrix& reward, double discount) {
  const Tensor boot = row_mean(mul(q_next_samples, Tensor::constant(not_done_samples)));
  const Tensor structural = sub(q, scale(boot, discount));
  return mean(square(sub(Tensor::constant(reward), structural)));
}

Tensor categorical_treatment_loss(const Tensor& logits, const std::vector<std::size_t>& next_states) {
  return scale(mean(categorical_logprob(logits, next_states)), -1.0);
}

Tensor mixture_treatment_loss(const Tensor& raw, std::size_t n_components, const Matrix& next_x,
                              const Matrix& not_done) {
  const auto d = static_cast<std::size_t>(next_x.cols());
  const auto width = static_cast<Eigen::Index>(mixture_output_width(n_components, d));
  if (raw.cols() != width + 1) throw InvalidArgument("treatment output must hold the mixture plus a terminal logit");
  const MixtureOutput mix = split_mixture(slice_cols(raw, 0, width), n_components, d);
  const Tensor term_logit = slice_cols(raw, width, 1);
  // log sigmoid via a two-class softmax over (0, logit).
  const Tensor two = concat_cols({Tensor::constant(Matrix::Zero(raw.rows(), 1)), term_logit});
  std::vector<std::size_t> done(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index i = 0; i < raw.rows(); ++i) done[static_cast<std::size_t>(i)] = not_done(i, 0) == 0.0 ? 1 : 0;
  const Tensor ll_done = categorical_logprob(two, done);
  const Tensor ll_next = mul(mixture_logprob(mix, next_x), Tensor::constant(not_done));
  return scale(mean(add(ll_done, ll_next)), -1.0);
}

DfivStage1 dfiv_stage1(const Tensor& psi, const Tensor& target, double lambda1) {
  Tensor v = ridge_solve(psi, target, lambda1);
  const Tensor resid = sub(target, matmul(psi, v));
  const double n = static_cast<double>(psi.rows());
  Tensor loss = add(scale(sum_squares(resid), 1.0 / n), scale(sum_squares(v), lambda1));
  return {loss, v};
}

DfivStage2 dfiv_stage2(const Tensor& psi2, const Tensor& v, const Matrix& reward, double lambda2) {
  const Tensor predicted = matmul(psi2, v);
  const Tensor r = Tensor::constant(reward);
  Tensor theta = ridge_solve(predicted, r, lambda2);
  const double n = static_cast<double>(psi2.rows());
  Tensor loss = add(scale(sum_squares(sub(r, matmul(predicted, theta))), 1.0 / n), scale(sum_squares(theta), lambda2));
  return {loss, theta};
}

AdversarialMethod parse_adversarial_method(const std::string& name) {
  if (name == "agmm") return AdversarialMethod::agmm;
  if (name == "asem") return AdversarialMethod::asem;
  if (name == "deepgmm") return AdversarialMethod::deepgmm;
  throw InvalidArgument("unknown adversarial method '" + name + "'");
}

std::string to_string(AdversarialMethod m) {
  switch (m) {
    case AdversarialMethod::agmm: return "agmm";
    case AdversarialMethod::asem: return "asem";
    case AdversarialMethod::deepgmm: return "deepgmm";
  }
  return "unknown";
}

AdversarialLosses adversarial_objective(const Tensor& q, const Tensor& g, const Matrix& reward, const Tensor& q_next,
                                        const Matrix& not_done, double discount, AdversarialMethod method,
                                        const AdversarialConstants& c, const Tensor& q_param_l2,
                                        const Tensor& g_param_l2, const Matrix& residual_snapshot) {
  const Tensor psi = mean(mul(td_residual(q, q_next, reward, not_done, discount), g));
  Tensor q_loss = psi;
  Tensor g_loss = scale(psi, -1.0);
  switch (method) {
    case AdversarialMethod::agmm:
      q_loss = add(q_loss, scale(q_param_l2, c.a));
      g_loss = add(add(g_loss, mean(square(g))), scale(g_param_l2, c.b));
      break;
    case AdversarialMethod::asem:
      q_loss = add(add(q_loss, scale(mean(square(q)), 0.5 * c.alpha)), scale(q_param_l2, c.a));
      g_loss = add(add(g_loss, scale(mean(square(g)), 0.5)), scale(g_param_l2, c.b));
      break;
    case AdversarialMethod::deepgmm: {
      if (residual_snapshot.rows() != g.rows()) throw InvalidArgument("DeepGMM needs a residual snapshot per row");
      const Matrix w = residual_snapshot.cwiseAbs2();
      g_loss = add(g_loss, scale(mean(mul(square(g), Tensor::constant(w))), 0.25));
      break;
    }
  }
  return {q_loss, g_loss, psi.item()};
}

}  // namespace ivope::neural
