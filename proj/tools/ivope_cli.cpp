// ivope: command-line front end for data generation, experiments, ablations,
// hyperparameter search and report merging.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "ivope/data.hpp"
#include "ivope/env.hpp"
#include "ivope/harness/ablation.hpp"
#include "ivope/harness/experiment.hpp"
#include "ivope/harness/report.hpp"
#include "ivope/harness/search.hpp"

using namespace ivope;
using harness::Json;

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
  const Json err = {{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
  return code;
}

void emit(const Json& j) { std::cout << j.dump(2) << "\n"; }

Json summary_line(const harness::ExperimentReport& rep) {
  Json j = rep.to_json();
  return {{"label", j["label"]}, {"output", rep.config.output}, {"aggregate", j["aggregate"]}};
}

// Large Eigen temporaries otherwise go through mmap/munmap on every step.
void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Offline policy evaluation as instrumental-variable regression"};
  app.require_subcommand(1);
  app.set_version_flag("--version", IVOPE_VERSION);

  auto* gen = app.add_subcommand("gen-data", "Log a chain dataset to CSV");
  std::size_t n_states = 100, n_transitions = 100000;
  double p_advance = 0.5, discount = 0.99;
  std::optional<double> alpha;
  std::uint64_t data_seed = 0;
  std::string data_out, mdp_out;
  gen->add_option("--n-states", n_states, "Chain length")->capture_default_str();
  gen->add_option("--p-advance", p_advance, "Probability of moving right")->capture_default_str();
  gen->add_option("--discount", discount, "Discount factor")->capture_default_str();
  gen->add_option("-n,--n-transitions", n_transitions, "Rows to log")->capture_default_str();
  gen->add_option("--alpha", alpha, "Resample states with weights exp(alpha s)");
  gen->add_option("--seed", data_seed, "Dataset seed")->capture_default_str();
  gen->add_option("-o,--output", data_out, "CSV path")->required();
  gen->add_option("--mdp-output", mdp_out, "Also write the MDP tables");

  auto* run = app.add_subcommand("run", "Run one experiment config");
  std::string run_config, run_output;
  std::optional<std::size_t> run_seeds, run_workers;
  std::optional<double> run_scale;
  run->add_option("config", run_config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", run_output, "Output directory (overrides the config)");
  run->add_option("--seeds", run_seeds, "Number of seeds (overrides the config)");
  run->add_option("--workers", run_workers, "Worker threads (overrides the config)");
  run->add_option("--step-scale", run_scale, "Step budget multiplier (overrides the config)");

  auto* ablate = app.add_subcommand("ablate", "Sweep one axis of a base config");
  std::string ablate_spec, ablate_output;
  ablate->add_option("spec", ablate_spec, "Ablation spec JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("-o,--output", ablate_output, "Output directory (overrides the spec)");

  auto* search = app.add_subcommand("search", "Random hyperparameter search");
  std::string search_spec, search_output;
  search->add_option("spec", search_spec, "Search spec JSON")->required()->check(CLI::ExistingFile);
  search->add_option("-o,--output", search_output, "Output directory (overrides the spec)");

  auto* report = app.add_subcommand("report", "Merge reports into summary and figure CSVs");
  std::vector<std::string> report_inputs;
  std::string report_output;
  report->add_option("reports", report_inputs, "report.json files");
  report->add_option("-o,--output", report_output, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    if (*gen) {
      const env::TabularMdp mdp = env::make_chain_mdp(n_states, p_advance, discount);
      const data::TransitionDataset ds = alpha ? data::resample_shifted(mdp, env::chain_policy(mdp), *alpha,
                                                                          n_transitions, data_seed)
                                               : data::generate_chain_dataset(mdp, n_transitions, data_seed);
      data::save(ds, data_out);
      if (!mdp_out.empty()) env::save_mdp(mdp, mdp_out);
      emit({{"output", data_out}, {"rows", ds.size()}, {"seed", data_seed}});
    } else if (*run) {
      harness::ExperimentConfig c = harness::load_experiment_config(run_config);
      if (!run_output.empty()) c.output = run_output;
      if (run_seeds) c.n_seeds = *run_seeds;
      if (run_workers) c.workers = *run_workers;
      if (run_scale) c.step_scale = *run_scale;
      c = harness::parse_experiment_config(harness::to_json(c));
      emit(summary_line(harness::run_experiment(c)));
    } else if (*ablate) {
      harness::AblationSpec s = harness::load_ablation_spec(ablate_spec);
      if (!ablate_output.empty()) s.output = ablate_output;
      const auto result = harness::run_ablation(s);
      Json runs = Json::array();
      for (const auto& rep : result.reports) runs.push_back(summary_line(rep));
      emit({{"axis", harness::axis_name(s.axis)}, {"output", s.output}, {"runs", runs}});
    } else if (*search) {
      harness::SearchSpec s = harness::load_search_spec(search_spec);
      if (!search_output.empty()) s.output = search_output;
      const auto result = harness::hyperparam_search(s);
      emit({{"evaluated", result.ledger.size()},
            {"best_metric", result.best_metric},
            {"best_params", result.best_params},
            {"output", s.output}});
    } else if (*report) {
      std::vector<Json> reports;
      for (const auto& p : report_inputs) reports.push_back(harness::load_report(p));
      const auto merged = harness::merge_reports(reports);
      harness::write_merged(merged, report_output);
      emit({{"output", report_output}, {"groups", merged.summary["groups"].size()}});
    }
  } catch (const ConfigError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
  return 0;
}
