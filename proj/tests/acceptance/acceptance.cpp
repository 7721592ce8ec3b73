// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// hard criterion fails. Pass criterion names (AC1 AC6 ...) to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "../gradcheck.hpp"
#include "../loss_cases.hpp"
#include "ivope/data.hpp"
#include "ivope/env.hpp"
#include "ivope/evaluation.hpp"
#include "ivope/features.hpp"
#include "ivope/harness/ablation.hpp"
#include "ivope/harness/experiment.hpp"
#include "ivope/harness/search.hpp"
#include "ivope/linear_estimators.hpp"
#include "ivope/neural/estimators.hpp"
#include "ivope/projected_rmse.hpp"

using namespace ivope;
using harness::Json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

Json chain_config(const std::string& estimator, Json params, std::size_t n_seeds = 1, double p = 0.5) {
  return Json{{"env", {{"p_advance", p}}},
              {"dataset", {{"n_transitions", 100000}, {"seed", 0}}},
              {"estimator", {{"name", estimator}, {"params", std::move(params)}}},
              {"n_seeds", n_seeds},
              {"seed", 0}};
}

harness::ExperimentReport run(const Json& j) { return harness::run_experiment(harness::parse_experiment_config(j)); }

features::FeatureMap grid_features(const env::TabularMdp& mdp, std::size_t d) {
  return features::embed_states(features::gaussian_grid_features(d), mdp.positions());
}

// ---- linear -------------------------------------------------------------

Verdict ac1() {
  const auto lstd = run(chain_config("lstd", Json::object())).seeds[0];
  const auto dbrm = run(chain_config("dbrm_linear", Json::object())).seeds[0];
  const bool pass = lstd.q0_relative_error < 0.05 && dbrm.q0_abs_error >= 3.0 * lstd.q0_abs_error;
  return {pass, "LSTD rel err " + fmt(lstd.q0_relative_error) + " (< 0.05), DBRM/LSTD error ratio " +
                    fmt(dbrm.q0_abs_error / lstd.q0_abs_error) + " (>= 3)"};
}

Verdict ac2() {
  const auto mdp = env::make_chain_mdp(100, 1.0, 0.99);
  const auto pi = env::chain_policy(mdp);
  const auto ds = data::generate_chain_dataset(mdp, 100000, 0);
  const auto phi = features::tabular_features(mdp.terminal_mask());
  const auto lstd = linear::lstd_q(ds, pi, phi, {0.99, 0, 0.0});
  const auto dbrm = linear::linear_dbrm(ds, pi, phi, {0.99, 0, 0.0});
  const double d = (dbrm.theta() - lstd.theta()).norm() / lstd.theta().norm();
  return {d < 1e-6, "p=1 tabular |theta_DBRM - theta_LSTD| / |theta_LSTD| = " + fmt(d, 3) + " (< 1e-6)"};
}

Verdict ac3() {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto pi = env::chain_policy(mdp);
  const auto ds = data::generate_chain_dataset(mdp, 100000, 0);
  const auto phi = grid_features(mdp, 90);
  const auto design = linear::build_design(ds, pi, phi, 0);
  const auto lstd = linear::lstd_q(design, phi, 0.99);
  const auto fqe = linear::linear_fqe(design, phi, 0.99, 500);
  const double d = (fqe.theta() - lstd.theta()).norm() / lstd.theta().norm();
  return {d < 1e-3, "K=500 relative theta gap " + fmt(d, 3) + " (< 1e-3)"};
}

Verdict ac4() {
  const auto s = linear::confounded_regression(100000, 0);
  const double iv = linear::two_stage_least_squares(s.z, s.x, s.y)(0);
  // Plain least squares, written out so it does not share the 2SLS path.
  const double ols = s.x.col(0).dot(s.y) / s.x.col(0).squaredNorm();
  return {std::abs(iv - 2.0) < 0.05 && std::abs(ols - 1.0) < 0.05,
          "2SLS " + fmt(iv) + " (target 2), OLS " + fmt(ols) + " (plim 1)"};
}

std::vector<double> axis_means(const harness::AblationResult& r) {
  std::vector<double> out;
  for (const auto& rep : r.reports) {
    std::vector<double> e;
    for (const auto& s : rep.seeds) e.push_back(s.q0_abs_error);
    out.push_back(harness::aggregate(e).mean);
  }
  return out;
}

Verdict ac5() {
  const Json base = chain_config("lstd", Json::object(), 5);
  const auto sweep = [&](const std::string& axis, std::vector<double> values, const std::string& est) {
    return axis_means(harness::run_ablation(harness::parse_ablation_spec(
        Json{{"base", base}, {"axis", axis}, {"values", values}, {"estimators", {est}}})));
  };
  const auto n = sweep("dataset_size", {1e3, 1e4, 1e5}, "lstd");
  const auto d = sweep("n_features", {10, 30, 90}, "lstd");
  const auto p = sweep("p_advance", {1.0, 0.8, 0.6}, "dbrm_linear");
  const bool n_ok = n[0] >= n[1] && n[1] >= n[2];
  const bool d_ok = d[0] > d[2];
  const bool p_ok = p[0] < p[1] && p[1] < p[2];
  return {n_ok && d_ok && p_ok, "LSTD by N " + fmt(n[0]) + " / " + fmt(n[1]) + " / " + fmt(n[2]) + ", by D " +
                                    fmt(d[0]) + " / " + fmt(d[1]) + " / " + fmt(d[2]) + ", DBRM by p " + fmt(p[0]) +
                                    " / " + fmt(p[1]) + " / " + fmt(p[2])};
}

// ---- neural -------------------------------------------------------------

constexpr std::size_t kCurveInterval = 50;

Json mlp_params(std::size_t steps) {
  return Json{{"n_steps", steps}, {"hidden", {50, 50}}, {"log_interval", kCurveInterval}};
}

Json agmm_params() {
  Json p = mlp_params(5000);
  p["learning_rate"] = 3e-4;
  return p;
}

std::optional<harness::ExperimentReport> g_agmm;

const harness::ExperimentReport& agmm_report() {
  if (!g_agmm) g_agmm = run(chain_config("agmm", agmm_params(), 5));
  return *g_agmm;
}

// First logged step whose value estimate is within `tol` relative error.
double steps_to(const std::vector<neural::CurvePoint>& curve, double truth, double tol) {
  for (const auto& p : curve)
    if (rel(p.value_estimate, truth) < tol) return static_cast<double>(p.step);
  return std::numeric_limits<double>::infinity();
}

Verdict ac6() {
  const auto fqe = run(chain_config("fqe", mlp_params(8000), 5));
  const auto dfiv = run(chain_config("dfiv", mlp_params(1000), 5));
  const auto& agmm = agmm_report();
  std::string detail;
  bool pass = true;
  for (const auto* rep : {&fqe, &dfiv, &agmm}) {
    double worst = 0.0;
    for (const auto& s : rep->seeds) worst = std::max(worst, s.q0_relative_error);
    pass = pass && worst < 0.10;
    detail += rep->config.estimator.name + " worst rel err " + fmt(worst, 3) + ", ";
  }
  int faster = 0;
  std::string steps;
  for (std::size_t i = 0; i < 5; ++i) {
    const double truth = fqe.seeds[i].q0_true;
    const double a = steps_to(dfiv.seeds[i].curve, truth, 0.10), b = steps_to(fqe.seeds[i].curve, truth, 0.10);
    faster += a < b;
    steps += (i ? " " : "") + fmt(a, 6) + "<" + fmt(b, 6);
  }
  pass = pass && faster >= 3;
  return {pass, detail + "DFIV faster at " + std::to_string(faster) + "/5 seeds (steps DFIV<FQE: " + steps + ")"};
}

Verdict ac7() {
  Rng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 64;
    const auto q = check::gaussian(n, 1, rng), qn = check::gaussian(n, 1, rng), g = check::gaussian(n, 1, rng);
    const auto r = check::gaussian(n, 1, rng);
    const auto nd = check::bernoulli(n, 0.8, rng);
    const nn::Tensor zero = nn::Tensor::constant(nn::Matrix::Zero(1, 1));
    const auto payoff = [&](neural::AdversarialMethod m, const nn::Matrix& gv) {
      return -neural::adversarial_objective(nn::Tensor::constant(q), nn::Tensor::constant(gv), r,
                                            nn::Tensor::constant(qn), nd, 0.99, m, neural::AdversarialConstants{}, zero,
                                            zero, nn::Matrix())
                  .g_loss.item();
    };
    const double asem = payoff(neural::AdversarialMethod::asem, 2.0 * g);
    const double agmm = payoff(neural::AdversarialMethod::agmm, g);
    worst = std::max(worst, std::abs(asem - 2.0 * agmm) / std::max(1.0, std::abs(asem)));
  }
  return {worst <= 1e-12, "max |ASEM(2g) - 2 AGMM(g)| = " + fmt(worst, 3) + " over 20 batches"};
}

Verdict ac8() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t n = 0;
  for (std::uint64_t seed : {1u, 2u, 3u})
    for (const auto& c : check::make_loss_cases(seed)) {
      const double e = check::check_gradient(c.loss, c.params).relative_error;
      ++n;
      if (e >= worst) worst = e, worst_name = c.name;
    }
  return {worst < 1e-4, std::to_string(n) + " loss/seed pairs, worst " + fmt(worst, 3) + " (" + worst_name + ")"};
}

Verdict ac9() {
  const auto oracle = run(chain_config(
      "deep_iv", Json{{"n_steps", 2000}, {"hidden", {50, 50}}, {"stage1", {{"kind", "oracle"}}}}));
  const double err = oracle.seeds[0].q0_relative_error;

  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto pi = env::chain_policy(mdp);
  const auto [train, valid] = data::split(data::generate_chain_dataset(mdp, 100000, 0), data::kTrainValidRatio, 0);
  const neural::Problem problem{train, valid, pi, neural::positional_input_space(mdp), 0.99, &mdp};
  neural::TreatmentConfig t;
  t.common.n_steps = 3000;
  t.common.hidden = {64, 64};
  t.kind = neural::TreatmentKind::categorical;
  const auto model = neural::fit_treatment(problem, mdp, t);
  double total = 0.0, worst = 0.0;
  for (std::size_t s = 0; s + 1 < 100; ++s) {
    const double adv = neural::next_state_distribution(model, s, 0)(static_cast<Eigen::Index>(s + 1));
    total += adv;
    worst = std::max(worst, std::abs(adv - 0.5));
  }
  const double mean = total / 99.0;
  return {err < 0.05 && std::abs(mean - 0.5) <= 0.02,
          "oracle stage 1: Q(s0) rel err " + fmt(err, 3) + " (< 0.05); learned P(advance) mean " + fmt(mean) +
              " (0.5 +- 0.02), worst state off by " + fmt(worst, 3)};
}

// ---- evaluation ---------------------------------------------------------

// sqrt(sum_{s,a} mu (dQ - g sum_{s'} P sum_{a'} pi dQ(s',a'))^2), terminals contribute nothing after.
double brute_projected_rmse(const env::QTable& f, const env::QTable& f0, const env::TabularMdp& mdp,
                            const env::Policy& pi, const Eigen::MatrixXd& mu) {
  double total = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      double inner = f(s, a) - f0(s, a);
      for (std::size_t t = 0; t < mdp.n_states(); ++t) {
        if (mdp.is_terminal(t)) continue;
        for (std::size_t b = 0; b < mdp.n_actions(); ++b)
          inner -= mdp.discount() * mdp.transition(s, a, t) * pi.prob(t, b) * (f(t, b) - f0(t, b));
      }
      total += mu(s, a) * inner * inner;
    }
  return std::sqrt(total);
}

env::TabularMdp random_mdp(std::size_t S, std::size_t A, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bool> terminal(S, false);
  terminal[S - 1] = true;
  std::vector<double> p(S * A * S, 0.0), r(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double* row = &p[(s * A + a) * S];
      if (terminal[s]) {
        row[s] = 1.0;
        continue;
      }
      double z = 0.0;
      for (std::size_t t = 0; t < S; ++t) z += row[t] = u(rng);
      for (std::size_t t = 0; t < S; ++t) row[t] /= z;
      r[s * A + a] = u(rng);
    }
  std::vector<double> mu0(S, 0.0);
  mu0[0] = 1.0;
  return env::TabularMdp(S, A, p, r, mu0, terminal, 0.9);
}

Verdict ac10() {
  Rng rng(23);
  double worst = 0.0;
  const auto check = [&](const env::TabularMdp& mdp, const env::Policy& pi, Eigen::MatrixXd mu) {
    mu /= mu.sum();
    for (int k = 0; k < 5; ++k) {
      const auto S = static_cast<Eigen::Index>(mdp.n_states()), A = static_cast<Eigen::Index>(mdp.n_actions());
      const env::QTable f = check::gaussian(S, A, rng), f0 = check::gaussian(S, A, rng);
      const double a = evaluation::projected_rmse(f, f0, mdp, pi, mu), b = brute_projected_rmse(f, f0, mdp, pi, mu);
      worst = std::max(worst, std::abs(a - b) / std::max(1.0, b));
    }
  };
  const auto chain = env::make_chain_mdp(100, 0.5, 0.99);
  check(chain, env::chain_policy(chain), env::chain_behavior_distribution(chain));
  for (int trial = 0; trial < 5; ++trial) {
    const auto mdp = random_mdp(8, 3, rng);
    check(mdp, env::Policy::uniform(8, 3), check::gaussian(8, 3, rng).cwiseAbs());
  }
  return {worst <= 1e-10, "max deviation from the double-sum oracle " + fmt(worst, 3) + " over 30 Q pairs"};
}

// ---- protocol -----------------------------------------------------------

Verdict ac11() {
  std::vector<std::string> bad;
  const auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto [train, valid] = data::split(data::generate_chain_dataset(mdp, 100000, 0), data::kTrainValidRatio, 0);
  expect(train.size() == 90000 && valid.size() == 10000, "9:1 split");
  for (const auto& name : harness::estimator_names()) {
    const Json p = harness::make_estimator(name, Json::object())->params();
    if (!p.contains("batch_size")) continue;
    expect(p["batch_size"] == (name == "dfiv" ? 2048 : 1024), name + " batch size");
    if (harness::is_adversarial_estimator(name)) expect(p["optimizer"] == "oadam", name + " optimizer");
    if (name == "deep_iv") expect(p["stage1"]["batch_size"] == 1024, "deep_iv stage-1 batch size");
  }
  expect(neural::AdversarialConfig{}.optimizer.kind == nn::OptimizerKind::oadam, "adversarial library default");
  const Json spec = {{"base", chain_config("dfiv", Json::object())}};
  const auto search = harness::parse_search_spec(spec);
  expect(search.max_settings == 100, "search cap");
  expect(harness::sample_settings(search.grid, search.max_settings, 0).size() == 100, "cap binds on DFIV grid");
  expect(harness::default_grid("kiv").size() == 64, "KIV grid");
  expect(harness::scaled_steps(harness::kTwoStageSteps, 1.0) == 100000, "two-stage steps");
  expect(harness::scaled_steps(harness::kAdversarialSteps, 1.0) == 200000, "adversarial steps");
  std::string msg = bad.empty() ? "split, batch sizes, search cap, optimizer and budgets match" : "mismatch:";
  for (const auto& b : bad) msg += " " + b;
  return {bad.empty(), msg};
}

Verdict ac12() {
  const auto& agmm = agmm_report();
  Json p = agmm_params();
  const auto deepgmm = run(chain_config("deepgmm", p, 5));
  const auto spread = [](const harness::ExperimentReport& r) {
    std::vector<double> q;
    for (const auto& s : r.seeds) q.push_back(s.q0_hat);
    return harness::aggregate(q);
  };
  const auto a = spread(agmm), d = spread(deepgmm);
  return {d.std > a.std, "std of Q(s0): DeepGMM " + fmt(d.std) + " (mean " + fmt(d.mean) + "), AGMM " + fmt(a.std) +
                             " (mean " + fmt(a.mean) + ")"};
}

struct Criterion {
  std::string id;
  double budget_seconds;
  bool warn_only;
  std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  const std::vector<Criterion> all = {
      {"AC1", 60, false, ac1},   {"AC2", 30, false, ac2},   {"AC3", 30, false, ac3},  {"AC4", 10, false, ac4},
      {"AC5", 600, false, ac5},  {"AC6", 900, false, ac6},  {"AC7", 60, false, ac7},  {"AC8", 60, false, ac8},
      {"AC9", 300, false, ac9},  {"AC10", 60, false, ac10}, {"AC11", 60, false, ac11}, {"AC12", 900, true, ac12},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      v.pass = false;
      v.detail += "; took " + fmt(secs) + " s, budget " + fmt(c.budget_seconds) + " s";
    }
    const char* tag = v.pass ? "PASS" : (c.warn_only ? "WARN" : "FAIL");
    std::printf("%-5s %s  [%.1f s]  %s\n", c.id.c_str(), tag, secs, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass && !c.warn_only) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
