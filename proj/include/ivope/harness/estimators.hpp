#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ivope/data.hpp"
#include "ivope/env.hpp"
#include "ivope/harness/json_fields.hpp"
#include "ivope/neural/common.hpp"

namespace ivope::harness {

/// What one fit needs from the experiment.
struct RunContext {
  const env::TabularMdp& mdp;
  const env::Policy& policy;
  const data::TransitionDataset& train;
  const data::TransitionDataset& valid;
  std::uint64_t seed = 0;
  /// Multiplies default training-step budgets (explicit n_steps win).
  double step_scale = 1.0;
};

struct FitOutcome {
  env::QTable q;
  /// Lower is better; the estimator's held-out selection metric.
  double validation_metric = 0.0;
  std::vector<neural::CurvePoint> curve;
  std::map<std::string, double> diagnostics;
  std::optional<std::string> abort_reason;
};

class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::string name() const = 0;
  virtual FitOutcome fit(const RunContext& ctx) const = 0;
  /// Canonical parameter echo, defaults filled in.
  virtual Json params() const = 0;
};

/// Parses and validates `params` for `name`; unknown names or keys throw
/// ConfigError before any computation happens.
std::unique_ptr<Estimator> make_estimator(const std::string& name, const Json& params);

std::vector<std::string> estimator_names();
bool is_linear_estimator(const std::string& name);
bool is_adversarial_estimator(const std::string& name);

/// Default step budgets before scaling.
inline constexpr std::size_t kTwoStageSteps = 100000;
inline constexpr std::size_t kAdversarialSteps = 200000;
inline constexpr std::size_t kDefaultBatch = 1024;
inline constexpr std::size_t kDfivBatch = 2048;

std::size_t scaled_steps(std::size_t base, double scale);

/// Mean squared TD error of a Q table on a dataset with one fixed action draw.
double td_objective(const env::QTable& q, const data::TransitionDataset& dataset, const env::Policy& policy,
                    double discount, std::uint64_t seed);

/// Stage-1 model fit for the sequential Deep IV search. Returns the negated
/// validation log-likelihood (lower is better).
double deep_iv_stage1_metric(const Json& params, const RunContext& ctx);

}  // namespace ivope::harness
