#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ivope/harness/experiment.hpp"

namespace ivope::harness {

/// Candidate values per hyperparameter. Keys are dotted paths into the
/// estimator params ("stage1.hidden"); iteration order is the grid product's
/// mixed-radix order.
struct Grid {
  std::vector<std::pair<std::string, std::vector<Json>>> axes;

  std::uint64_t size() const;
  /// Key/value object for the setting at `index` in [0, size()).
  Json setting(std::uint64_t index) const;
};

/// Published search spaces for the methods that have one; ConfigError for
/// the others.
Grid default_grid(const std::string& estimator);

struct SearchSpec {
  ExperimentConfig base;
  Grid grid;
  std::size_t max_settings = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string output;
};

/// {"base": <experiment config>, "grid": {key: [values]} | "default",
///  "max_settings": 100, "seed": 0, "workers": 1, "output": dir}
SearchSpec parse_search_spec(const Json& j);
SearchSpec load_search_spec(const std::filesystem::path& path);

/// Distinct grid indices drawn uniformly without replacement, capped at
/// `max_settings`, in draw order.
std::vector<std::uint64_t> sample_settings(const Grid& grid, std::size_t max_settings, std::uint64_t seed);

/// Base params with each dotted key of `setting` overwritten.
Json apply_setting(const Json& params, const Json& setting);

struct LedgerRow {
  std::size_t index = 0;
  std::string stage;  // "stage1", "stage2" or "full"
  Json setting;
  bool aborted = false;
  double metric = 0.0;
  std::string abort_kind;
};

struct SearchResult {
  std::vector<LedgerRow> ledger;
  Json best_params;
  double best_metric = 0.0;
  /// The base config with the winning params, runnable by `run`.
  ExperimentConfig best_config;
};

/// Fits every sampled setting on the first seed's split and keeps the lowest
/// validation metric. Deep IV runs twice: stage1.* keys scored by held-out
/// likelihood with the rest at base values, then the remaining keys with the
/// winning stage 1. Throws when every setting of a stage aborted.
SearchResult hyperparam_search(const SearchSpec& spec);

std::string ledger_csv(const std::vector<LedgerRow>& ledger);

}  // namespace ivope::harness
