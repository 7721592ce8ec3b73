#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "ivope/error.hpp"
#include "ivope/nn/checkpoint.hpp"
#include "ivope/nn/heads.hpp"
#include "ivope/nn/mlp.hpp"
#include "ivope/nn/optimizer.hpp"
#include "ivope/nn/tensor.hpp"

using namespace ivope;
using namespace ivope::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Inputs whose first-layer pre-activations all sit away from the ReLU kink.
Matrix kink_free_inputs(const Mlp& net, Eigen::Index n, Rng& rng) {
  for (;;) {
    Matrix x = random_matrix(n, static_cast<Eigen::Index>(net.input_dim()), rng);
    Matrix pre = (x * net.parameters()[0].value()).rowwise() + net.parameters()[1].value().row(0);
    if (pre.cwiseAbs().minCoeff() > 1e-3) return x;
  }
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveZero) {
  Rng rng(1);
  Mlp net({{3, 5, 2}}, rng);
  std::vector<Matrix> zeros;
  for (const auto& p : net.parameters()) zeros.push_back(Matrix::Zero(p.rows(), p.cols()));
  net.set_values(zeros);
  EXPECT_EQ(net.predict(Matrix::Random(4, 3)), Matrix::Zero(4, 2));
}

TEST(Mlp, IdentityLayerPassesThrough) {
  Rng rng(2);
  Mlp net({{4, 4}}, rng);
  net.set_values({Matrix::Identity(4, 4), Matrix::Zero(1, 4)});
  const Matrix x = Matrix::Random(6, 4);
  EXPECT_EQ(net.predict(x), x);
}

TEST(Mlp, MatchesHandWrittenForward) {
  Rng rng(3);
  Mlp net({{2, 7, 5, 1}, Activation::relu}, rng);
  EXPECT_EQ(net.parameter_count(), Mlp::parameter_count(net.spec()));
  EXPECT_EQ(net.parameter_count(), 3u * 7 + 8u * 5 + 6u * 1);
  const Matrix x = random_matrix(10, 2, rng);
  const auto& p = net.parameters();
  Matrix h1 = ((x * p[0].value()).rowwise() + p[1].value().row(0)).cwiseMax(0.0);
  Matrix h2 = ((h1 * p[2].value()).rowwise() + p[3].value().row(0)).cwiseMax(0.0);
  Matrix out = (h2 * p[4].value()).rowwise() + p[5].value().row(0);
  EXPECT_LE((net.predict(x) - out).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Mlp, InitBoundsAndShapeErrors) {
  Rng rng(4);
  Mlp net({{16, 8, 1}}, rng);
  EXPECT_LE(net.parameters()[0].value().cwiseAbs().maxCoeff(), 0.25);
  EXPECT_THROW(net.predict(Matrix::Zero(2, 3)), InvalidArgument);
}

TEST(Mlp, CopiesAreDeep) {
  Rng rng(5);
  Mlp a({{2, 3, 1}}, rng);
  Mlp b = a;
  b.parameters()[0].node()->value.setZero();
  EXPECT_NE(a.parameters()[0].value(), b.parameters()[0].value());
}

TEST(Gradient, HalfSquaredNorm) {
  Rng rng(6);
  Tensor w = Tensor::parameter(random_matrix(3, 4, rng));
  const Matrix x = random_matrix(4, 1, rng);
  const Tensor loss = scale(sum_squares(matmul(w, Tensor::constant(x))), 0.5);
  const auto g = gradient(loss, {w});
  const Matrix expect = (w.value() * x) * x.transpose();
  EXPECT_LE((g[0] - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gradient, ConstantLossAndDetached) {
  Rng rng(7);
  Tensor w = Tensor::parameter(random_matrix(2, 2, rng));
  const auto g = gradient(Tensor::constant(Matrix::Constant(1, 1, 3.0)), {w});
  EXPECT_EQ(g[0], Matrix::Zero(2, 2));
  const auto gd = gradient(sum(detach(w)), {w});
  EXPECT_EQ(gd[0], Matrix::Zero(2, 2));
  EXPECT_THROW(gradient(w, {w}), InvalidArgument);
}

TEST(Gradient, TwoLayerReluFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    Mlp net({{3, 6, 4, 1}}, rng);
    const Matrix x = kink_free_inputs(net, 5, rng);
    const Matrix y = random_matrix(5, 1, rng);
    auto loss = [&]() { return mean(square(sub(net.forward(Tensor::constant(x)), Tensor::constant(y)))); };
    // Second-layer kinks are checked too.
    const auto r = check::check_gradient(loss, net.parameters());
    EXPECT_LT(r.relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(Gradient, EveryOpFiniteDifferences) {
  Rng rng(21);
  Tensor a = Tensor::parameter(random_matrix(5, 3, rng));
  Tensor b = Tensor::parameter(random_matrix(5, 3, rng));
  Tensor r = Tensor::parameter(random_matrix(1, 3, rng));
  Tensor c = Tensor::parameter(random_matrix(5, 1, rng));
  Tensor w = Tensor::parameter(random_matrix(3, 2, rng));
  Tensor pos = Tensor::parameter(random_matrix(5, 3, rng).cwiseAbs().array() + 0.5);
  const std::vector<std::size_t> idx = {0, 2, 1, 1, 0};
  auto loss = [&]() {
    Tensor t1 = sum(mul(add_row(a, r), mul_row(b, r)));
    Tensor t2 = sum(mul_col(elu(a), c));
    Tensor t3 = sum(exp(scale(b, 0.3))) + sum(log(pos));
    Tensor t4 = sum(mul(layer_norm(a), b));
    Tensor t5 = sum(pick(log_softmax_rows(a), idx)) + sum(logsumexp_rows(b));
    Tensor t6 = sum(matmul(concat_cols({a, slice_cols(b, 1, 2)}), Tensor::constant(Matrix::Ones(5, 2))));
    Tensor t7 = sum_squares(ridge_solve(append_ones(a), b, 0.1)) + sum(mul(ridge_solve(a, c, 0.05), row_mean(transpose(b))));
    Tensor t8 = sum(add_scalar(square(sub(a, b)), 2.0));
    return t1 + t2 + t3 + t4 + t5 + t7 + t8 + t6 + sum(matmul(a, w));
  };
  const auto res = check::check_gradient(loss, {a, b, r, c, w, pos});
  EXPECT_LT(res.relative_error, 1e-6);
  EXPECT_GT(res.fd_norm, 0.0);
}

TEST(Gradient, LayerNormNetwork) {
  Rng rng(22);
  Mlp net({{2, 6, 1}, Activation::elu, true}, rng);
  const Matrix x = random_matrix(7, 2, rng);
  auto loss = [&]() { return mean(square(net.forward(Tensor::constant(x)))); };
  EXPECT_LT(check::check_gradient(loss, net.parameters()).relative_error, 1e-5);
}

TEST(Optimizer, ZeroGradientKeepsParameters) {
  for (auto kind : {OptimizerKind::adam, OptimizerKind::oadam}) {
    Tensor p = Tensor::parameter(Matrix::Constant(2, 2, 1.5));
    Optimizer opt({kind, 1e-2}, {p});
    for (int i = 0; i < 50; ++i) opt.step({Matrix::Zero(2, 2)});
    EXPECT_EQ(p.value(), Matrix::Constant(2, 2, 1.5));
  }
}

TEST(Optimizer, OptimisticFirstStepIsDoubleAdam) {
  Tensor pa = Tensor::parameter(Matrix::Zero(1, 3));
  Tensor po = Tensor::parameter(Matrix::Zero(1, 3));
  Optimizer adam({OptimizerKind::adam, 1e-2}, {pa});
  Optimizer oadam({OptimizerKind::oadam, 1e-2}, {po});
  Matrix g(1, 3);
  g << 0.5, -2.0, 3.0;
  adam.step({g});
  oadam.step({g});
  EXPECT_LE((po.value() - 2.0 * pa.value()).cwiseAbs().maxCoeff(), 1e-15);
  // Second step: 2 * delta_2 - delta_1.
  const Matrix d1 = pa.value();
  adam.step({g});
  const Matrix d2 = pa.value() - d1;
  oadam.step({g});
  EXPECT_LE((po.value() - (2.0 * d1 + 2.0 * d2 - d1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Optimizer, AdamDescendsQuadraticBowl) {
  Tensor p = Tensor::parameter((Matrix(1, 2) << 3.0, -2.0).finished());
  const Matrix scale_m = (Matrix(1, 2) << 1.0, 10.0).finished();
  Optimizer opt({OptimizerKind::adam, 1e-2}, {p});
  auto loss = [&]() { return sum(mul(square(p), Tensor::constant(scale_m))); };
  double prev = loss().item();
  for (int i = 0; i < 100; ++i) {
    opt.step(gradient(loss(), {p}));
    const double now = loss().item();
    ASSERT_LT(now, prev) << "step " << i;
    prev = now;
  }
}

TEST(Heads, UniformCategorical) {
  const Tensor logits = Tensor::constant(Matrix::Constant(3, 4, 0.7));
  const auto lp = categorical_logprob(logits, {0, 1, 3});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(lp.value()(i, 0), std::log(0.25), 1e-15);
}

TEST(Heads, SingleGaussianAtMean) {
  Matrix raw(1, 3);
  raw << 0.0, 1.25, std::log(0.3);
  const auto mix = split_mixture(Tensor::constant(raw), 1, 1);
  const double lp = mixture_logprob(mix, Matrix::Constant(1, 1, 1.25)).item();
  EXPECT_NEAR(lp, -0.5 * std::log(2.0 * std::numbers::pi * 0.09), 1e-14);
}

TEST(Heads, TwoComponentMixtureByHand) {
  Matrix raw(1, 6);
  raw << std::log(0.3), std::log(0.7), -1.0, 2.0, std::log(0.5), std::log(2.0);
  const auto mix = split_mixture(Tensor::constant(raw), 2, 1);
  const double x = 0.4;
  auto pdf = [](double v, double m, double s) {
    return std::exp(-0.5 * (v - m) * (v - m) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi));
  };
  const double expect = std::log(0.3 * pdf(x, -1.0, 0.5) + 0.7 * pdf(x, 2.0, 2.0));
  EXPECT_NEAR(mixture_logprob(mix, Matrix::Constant(1, 1, x)).item(), expect, 1e-13);
}

TEST(Heads, MixtureStableAtExtremes) {
  Matrix raw(2, 6);
  raw << 0.0, 0.0, 0.0, 1.0, std::log(1e-6), std::log(1e-6), 5.0, -5.0, -1e3, 1e3, std::log(1e-6), 0.0;
  const auto mix = split_mixture(Tensor::constant(raw), 2, 1);
  Matrix t(2, 1);
  t << 1e6, -1e6;
  const auto lp = mixture_logprob(mix, t).value();
  EXPECT_FALSE(std::isnan(lp(0, 0)));
  EXPECT_FALSE(std::isnan(lp(1, 0)));
}

TEST(Heads, MixtureGradient) {
  Rng rng(31);
  Mlp net({{2, 5, mixture_output_width(3, 2)}, Activation::elu}, rng);
  const Matrix x = random_matrix(6, 2, rng);
  const Matrix y = random_matrix(6, 2, rng);
  auto loss = [&]() { return -mean(mixture_logprob(split_mixture(net.forward(Tensor::constant(x)), 3, 2), y)); };
  EXPECT_LT(check::check_gradient(loss, net.parameters()).relative_error, 1e-5);
}

TEST(Heads, SamplingFrequencies) {
  Rng rng(41);
  Eigen::RowVectorXd logits(3);
  logits << std::log(0.2), std::log(0.5), std::log(0.3);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 100000; ++i) ++counts[sample_categorical(logits, rng)];
  EXPECT_NEAR(counts[1] / 1e5, 0.5, 0.01);
  Matrix raw(1, 3);
  raw << 0.0, 2.0, std::log(0.5);
  const auto mix = split_mixture(Tensor::constant(raw), 1, 1);
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = sample_mixture(mix, 0, rng)(0);
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / 1e5, 2.0, 0.01);
  EXPECT_NEAR(s2 / 1e5 - (s / 1e5) * (s / 1e5), 0.25, 0.01);
}

TEST(Checkpoint, RoundTrip) {
  Rng rng(51);
  Mlp net({{3, 4, 2}, Activation::elu, true, false}, rng);
  std::stringstream buf;
  write_checkpoint(buf, net);
  const auto back = mlp_from_checkpoint(read_checkpoint(buf));
  EXPECT_EQ(back.spec(), net.spec());
  const Matrix x = Matrix::Random(3, 3);
  EXPECT_EQ(back.predict(x), net.predict(x));
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), ParseError);
  Rng rng(52);
  Mlp net({{3, 4, 2}}, rng);
  std::stringstream buf;
  write_checkpoint(buf, net);
  std::string s = buf.str();
  std::stringstream cut(s.substr(0, s.size() - 5));
  EXPECT_THROW(read_checkpoint(cut), ParseError);
}
