#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ivope/harness/experiment.hpp"

namespace ivope::harness {

enum class AblationAxis { dataset_size, n_features, p_advance, alpha };

AblationAxis parse_axis(const std::string& name);
std::string axis_name(AblationAxis axis);

struct AblationSpec {
  ExperimentConfig base;
  AblationAxis axis = AblationAxis::dataset_size;
  std::vector<double> values;
  /// Estimators to sweep; empty means the base config's estimator only.
  std::vector<std::string> estimators;
  std::string output;
};

/// {"base": <experiment config>, "axis": ..., "values": [...],
///  "estimators": [...], "output": dir}
AblationSpec parse_ablation_spec(const Json& j);
AblationSpec load_ablation_spec(const std::filesystem::path& path);

/// The base config with the axis set to `value` for `estimator`. Axis values
/// the estimator cannot take (feature count of a neural method, fractional
/// dataset size) are ConfigErrors.
ExperimentConfig ablation_config(const AblationSpec& spec, const std::string& estimator, double value);

struct AblationResult {
  std::vector<ExperimentReport> reports;  // value-major, then estimator
  /// axis,value,estimator,seed,q0_abs_error,normalized_error
  std::string csv;
};

/// Every config is built (and so validated) before the first fit. With an
/// output directory each report goes under <axis>_<index>_<estimator>/ and the
/// merged table to ablation.csv.
AblationResult run_ablation(const AblationSpec& spec);

}  // namespace ivope::harness
