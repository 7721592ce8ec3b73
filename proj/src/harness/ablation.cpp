#include "ivope/harness/ablation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ivope::harness {

AblationAxis parse_axis(const std::string& name) {
  if (name == "dataset_size") return AblationAxis::dataset_size;
  if (name == "n_features") return AblationAxis::n_features;
  if (name == "p_advance") return AblationAxis::p_advance;
  if (name == "alpha") return AblationAxis::alpha;
  throw ConfigError("axis: expected dataset_size, n_features, p_advance or alpha, got '" + name + "'");
}

std::string axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::dataset_size: return "dataset_size";
    case AblationAxis::n_features: return "n_features";
    case AblationAxis::p_advance: return "p_advance";
    case AblationAxis::alpha: return "alpha";
  }
  return "unknown";
}

AblationSpec parse_ablation_spec(const Json& j) {
  JsonFields r(j, "");
  AblationSpec s;
  const Json& base = r.raw("base");
  if (!base.is_object()) throw ConfigError("base: expected an experiment config object");
  s.base = parse_experiment_config(base);
  s.axis = parse_axis(r.require<std::string>("axis"));
  s.values = r.require<std::vector<double>>("values");
  s.estimators = r.get<std::vector<std::string>>("estimators", {});
  s.output = r.get<std::string>("output", "");
  r.finish();
  if (s.values.empty()) throw ConfigError("values: at least one axis value is required");
  for (const auto& name : s.estimators) make_estimator(name, Json::object());
  return s;
}

AblationSpec load_ablation_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ablation spec '" + path.string() + "'");
  try {
    return parse_ablation_spec(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("ablation spec is not valid JSON: " + std::string(e.what()));
  }
}

ExperimentConfig ablation_config(const AblationSpec& spec, const std::string& estimator, double value) {
  Json j = to_json(spec.base);
  if (estimator != spec.base.estimator.name) {
    j["estimator"] = {{"name", estimator}, {"params", make_estimator(estimator, Json::object())->params()}};
  }
  j["label"] = estimator;
  j["output"] = "";
  Json& params = j["estimator"]["params"];
  switch (spec.axis) {
    case AblationAxis::dataset_size: {
      if (!(value >= 2.0) || value != std::floor(value)) throw ConfigError("dataset_size values must be integers >= 2");
      j["dataset"]["n_transitions"] = static_cast<std::size_t>(value);
      break;
    }
    case AblationAxis::n_features: {
      if (!(value >= 1.0) || value != std::floor(value)) throw ConfigError("n_features values must be positive integers");
      const auto dim = static_cast<std::size_t>(value);
      if (estimator == "kiv") {
        params["n_features"] = dim;
      } else if (is_linear_estimator(estimator) && params["features"].value("kind", "") != "tabular") {
        params["features"]["dim"] = dim;
      } else {
        throw ConfigError("n_features axis needs a feature-based linear estimator, not '" + estimator + "'");
      }
      break;
    }
    case AblationAxis::p_advance: j["env"]["p_advance"] = value; break;
    case AblationAxis::alpha: j["dataset"]["alpha"] = value; break;
  }
  j["tags"]["axis"] = axis_name(spec.axis);
  j["tags"]["value"] = value;
  return parse_experiment_config(j);
}

AblationResult run_ablation(const AblationSpec& spec) {
  const std::vector<std::string> estimators =
      spec.estimators.empty() ? std::vector<std::string>{spec.base.estimator.name} : spec.estimators;
  std::vector<ExperimentConfig> configs;
  for (double v : spec.values)
    for (const auto& name : estimators) configs.push_back(ablation_config(spec, name, v));

  AblationResult result;
  std::ostringstream csv;
  csv << "axis,value,estimator,seed,q0_abs_error,normalized_error\n";
  for (std::size_t k = 0; k < configs.size(); ++k) {
    ExperimentConfig c = configs[k];
    if (!spec.output.empty())
      c.output = (std::filesystem::path(spec.output) /
                  (axis_name(spec.axis) + "_" + std::to_string(k / estimators.size()) + "_" + c.label))
                     .string();
    ExperimentReport report = run_experiment(c);
    for (const auto& s : report.seeds)
      csv << axis_name(spec.axis) << "," << data::format_real(c.tags["value"].get<double>()) << ","
          << c.estimator.name << "," << s.seed << "," << data::format_real(s.q0_abs_error) << ","
          << data::format_real(s.normalized_error) << "\n";
    result.reports.push_back(std::move(report));
  }
  result.csv = csv.str();
  if (!spec.output.empty()) {
    std::filesystem::create_directories(spec.output);
    std::ofstream(std::filesystem::path(spec.output) / "ablation.csv", std::ios::binary) << result.csv;
  }
  return result;
}

}  // namespace ivope::harness
