#pragma once

// Every estimator loss wired to small random networks, for gradient checks.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ivope/neural/losses.hpp"
#include "ivope/nn/heads.hpp"
#include "ivope/nn/mlp.hpp"

namespace ivope::check {

struct LossCase {
  std::string name;
  std::function<nn::Tensor()> loss;
  std::vector<nn::Tensor> params;
};

inline nn::Matrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline nn::Matrix bernoulli(Eigen::Index r, double p, Rng& rng) {
  std::bernoulli_distribution b(p);
  nn::Matrix m(r, 1);
  for (Eigen::Index i = 0; i < r; ++i) m(i, 0) = b(rng) ? 1.0 : 0.0;
  return m;
}

/// ELU networks keep every loss smooth so central differences are meaningful.
inline std::vector<LossCase> make_loss_cases(std::uint64_t seed) {
  using nn::Tensor;
  using neural::AdversarialMethod;
  Rng rng(seed);
  const Eigen::Index n = 12;
  const Eigen::Index dim = 2;
  auto net = [&](std::vector<std::size_t> sizes, bool activate_output = false) {
    return std::make_shared<nn::Mlp>(nn::MlpSpec{std::move(sizes), nn::Activation::elu, false, activate_output}, rng);
  };
  const Tensor x = Tensor::constant(gaussian(n, dim, rng));
  const Tensor x1 = Tensor::constant(gaussian(n, dim, rng));
  const Tensor x2 = Tensor::constant(gaussian(n, dim, rng));
  const nn::Matrix r = gaussian(n, 1, rng);
  const nn::Matrix nd = bernoulli(n, 0.8, rng);
  const double g = 0.9;
  std::vector<LossCase> cases;

  auto q = net({2, 6, 6, 1});
  cases.push_back({"dbrm", [=] { return neural::dbrm_loss(q->forward(x), q->forward(x1), q->forward(x2), r, nd, g); },
                   q->parameters()});
  const nn::Matrix target = gaussian(n, 1, rng);
  cases.push_back({"fqe", [=] { return neural::fqe_loss(q->forward(x), target); }, q->parameters()});

  const nn::Matrix nd_samples(nd.replicate(1, 3));
  cases.push_back({"deep_iv_stage2",
                   [=] {
                     return neural::deep_iv_stage2_loss(q->forward(x),
                                                        nn::concat_cols({q->forward(x), q->forward(x1), q->forward(x2)}),
                                                        nd_samples, r, g);
                   },
                   q->parameters()});

  auto cat = net({2, 5, 4});
  std::vector<std::size_t> labels;
  for (Eigen::Index i = 0; i < n; ++i) labels.push_back(static_cast<std::size_t>(i % 4));
  cases.push_back(
      {"categorical_stage1", [=] { return neural::categorical_treatment_loss(cat->forward(x), labels); }, cat->parameters()});

  const std::size_t k = 3;
  auto mix = net({2, 5, nn::mixture_output_width(k, 2) + 1});
  const nn::Matrix next_x = gaussian(n, dim, rng);
  cases.push_back({"mixture_stage1", [=] { return neural::mixture_treatment_loss(mix->forward(x), k, next_x, nd); },
                   mix->parameters()});

  auto phi = net({2, 5, 4}, true);
  auto psi = net({2, 5, 3}, true);
  auto feature_target = [=] {
    return nn::append_ones(phi->forward(x)) - g * nn::mul_col(nn::append_ones(phi->forward(x1)), Tensor::constant(nd));
  };
  cases.push_back({"dfiv_stage1",
                   [=] { return neural::dfiv_stage1(nn::append_ones(psi->forward(x)), nn::detach(feature_target()), 1e-2).loss; },
                   psi->parameters()});
  cases.push_back({"dfiv_stage2",
                   [=] {
                     const Tensor psi1 = nn::detach(nn::append_ones(psi->forward(x)));
                     const Tensor psi2 = nn::detach(nn::append_ones(psi->forward(x2)));
                     const auto st1 = neural::dfiv_stage1(psi1, feature_target(), 1e-2);
                     return neural::dfiv_stage2(psi2, st1.v, r, 1e-2).loss;
                   },
                   phi->parameters()});

  auto adv = net({2, 6, 1});
  const nn::Matrix snapshot = gaussian(n, 1, rng);
  const neural::AdversarialConstants constants{1e-2, 1e-2, 0.5};
  for (AdversarialMethod m : {AdversarialMethod::agmm, AdversarialMethod::asem, AdversarialMethod::deepgmm}) {
    auto losses = [=] {
      return neural::adversarial_objective(q->forward(x), adv->forward(x), r, q->forward(x1), nd, g, m, constants,
                                           q->l2(), adv->l2(), snapshot);
    };
    cases.push_back({neural::to_string(m) + "_q", [=] { return losses().q_loss; }, q->parameters()});
    cases.push_back({neural::to_string(m) + "_g", [=] { return losses().g_loss; }, adv->parameters()});
  }
  return cases;
}

}  // namespace ivope::check
