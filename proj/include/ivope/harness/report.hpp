#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ivope/harness/json_fields.hpp"

namespace ivope::harness {

/// Reports grouped by label, seed rows concatenated in input order, with
/// aggregates recomputed from the rows.
struct MergedReport {
  Json summary;
  std::string fig2_csv;  // method,state,q_oracle,q_mean,q_std,n_seeds
  std::string fig3_csv;  // method,seed,step,value_estimate,normalized_error
  std::string fig4_csv;  // axis,value,method,seed,q0_abs_error,normalized_error
};

Json load_report(const std::filesystem::path& path);

/// ConfigError on an empty list; InvalidArgument on a foreign schema or on
/// reports of the same label computed against different environments.
MergedReport merge_reports(const std::vector<Json>& reports);

/// Writes summary.json, fig2.csv, fig3.csv and fig4.csv.
void write_merged(const MergedReport& merged, const std::filesystem::path& dir);

}  // namespace ivope::harness
