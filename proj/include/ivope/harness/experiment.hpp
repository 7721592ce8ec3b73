#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ivope/harness/estimators.hpp"

namespace ivope::harness {

inline constexpr const char* kReportSchema = "ivope.report/1";

struct EnvSpec {
  std::size_t n_states = 100;
  double p_advance = 0.5;
  double discount = 0.99;
};

struct DatasetSpec {
  std::size_t n_transitions = 100000;
  /// When set, states are resampled with weights proportional to exp(alpha s)
  /// instead of rolling episodes.
  std::optional<double> alpha;
  std::uint64_t seed = 0;
  /// Load this CSV instead of generating (same rows for every seed).
  std::optional<std::string> path;
};

struct EstimatorSpec {
  std::string name;
  Json params = Json::object();
};

struct ExperimentConfig {
  EnvSpec env;
  DatasetSpec dataset;
  EstimatorSpec estimator;
  std::size_t n_seeds = 1;
  std::uint64_t seed = 0;
  double step_scale = 1.0;
  std::size_t workers = 1;
  /// Output directory; empty keeps everything in memory.
  std::string output;
  /// Group name in merged reports; defaults to the estimator name.
  std::string label;
  /// Free-form annotations propagated to the report (ablation axis and value).
  Json tags = Json::object();
};

/// Validates against the schema, rejecting unknown keys and unknown
/// estimators (the estimator parameters are parsed too).
ExperimentConfig parse_experiment_config(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical form with defaults filled in; parse(to_json(c)) == c.
Json to_json(const ExperimentConfig& config);

env::TabularMdp build_mdp(const EnvSpec& env);
/// Dataset of seed index `i` (generated with dataset.seed + i, or loaded).
data::TransitionDataset build_dataset(const ExperimentConfig& config, const env::TabularMdp& mdp, std::size_t i);
/// State-action weights of the logging process, for projected RMSE.
Eigen::MatrixXd behavior_weights(const ExperimentConfig& config, const env::TabularMdp& mdp);

struct SeedResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double rho_hat = 0.0;
  double rho_true = 0.0;
  double normalized_error = 0.0;
  double q0_hat = 0.0;
  double q0_true = 0.0;
  double q0_abs_error = 0.0;
  double q0_relative_error = 0.0;
  double projected_rmse = 0.0;
  double validation_metric = 0.0;
  std::vector<double> q_values;  // Q-hat(s, action 0) per state
  std::vector<neural::CurvePoint> curve;
  std::map<std::string, double> diagnostics;
  std::optional<std::string> abort_reason;
  std::string curve_path;
  double wall_seconds = 0.0;  // kept out of report.json
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one seed
};
Aggregate aggregate(const std::vector<double>& values);

struct ExperimentReport {
  ExperimentConfig config;
  Json estimator_params;
  std::vector<double> oracle_q;
  double rho_min = 0.0;
  double rho_max = 0.0;
  std::vector<SeedResult> seeds;

  Json to_json() const;
};

/// env -> dataset -> 9:1 split -> fit per seed -> oracle comparison. Seeds run
/// on `config.workers` threads. With a non-empty output directory writes
/// report.json (byte-identical across re-runs), timing.csv and curves/.
ExperimentReport run_experiment(const ExperimentConfig& config);

void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// The machine-independent report file content.
std::string report_text(const ExperimentReport& report);

}  // namespace ivope::harness
