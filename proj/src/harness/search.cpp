#include "ivope/harness/search.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>

#include "ivope/harness/pool.hpp"
#include "ivope/rng.hpp"

namespace ivope::harness {

namespace {

Json reals(std::initializer_list<double> v) { return Json(std::vector<double>(v)); }

Json widths(std::initializer_list<std::size_t> v) {
  Json out = Json::array();
  for (std::size_t w : v) out.push_back(Json::array({w, w}));
  return out;
}

void add(Grid& g, const std::string& key, const Json& values) {
  g.axes.emplace_back(key, std::vector<Json>(values.begin(), values.end()));
}

void add_adversarial(Grid& g) {
  add(g, "g_hidden", widths({50, 100, 150}));
  add(g, "learning_rate", reals({1e-5, 3e-5, 1e-4, 3e-4, 1e-3}));
  add(g, "g_lr_multiplier", reals({1, 5, 10, 50}));
  add(g, "betas", Json::array({Json::array({0.0, 0.01}), Json::array({0.5, 0.9})}));
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Scored {
  bool aborted = false;
  double metric = 0.0;
  std::string kind;
};

template <class Fn>
std::vector<LedgerRow> evaluate(const std::vector<Json>& settings, const std::vector<Json>& params,
                                const std::string& stage, std::size_t workers, Fn&& score) {
  std::vector<Scored> out(settings.size());
  parallel_for(settings.size(), workers, [&](std::size_t i) {
    try {
      out[i] = score(params[i]);
      if (!std::isfinite(out[i].metric)) out[i] = {true, 0.0, "non_finite_metric"};
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      out[i] = {true, 0.0, e.kind()};
    }
  });
  std::vector<LedgerRow> rows;
  for (std::size_t i = 0; i < settings.size(); ++i)
    rows.push_back(LedgerRow{i, stage, settings[i], out[i].aborted, out[i].metric, out[i].kind});
  return rows;
}

std::size_t best_row(const std::vector<LedgerRow>& rows, const std::string& stage) {
  std::size_t best = rows.size();
  std::map<std::string, std::size_t> census;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].aborted) {
      ++census[rows[i].abort_kind];
      continue;
    }
    if (best == rows.size() || rows[i].metric < rows[best].metric) best = i;
  }
  if (best == rows.size()) {
    std::string msg = "every " + stage + " setting aborted (" + std::to_string(rows.size()) + " total:";
    for (const auto& [kind, n] : census) msg += " " + kind + "=" + std::to_string(n);
    throw TrainingAborted(msg + ")", 0);
  }
  return best;
}

}  // namespace

std::uint64_t Grid::size() const {
  if (axes.empty()) return 0;
  std::uint64_t n = 1;
  for (const auto& [key, values] : axes) {
    if (values.empty()) return 0;
    if (n > std::numeric_limits<std::uint64_t>::max() / values.size()) throw ConfigError("grid: too many combinations");
    n *= values.size();
  }
  return n;
}

Json Grid::setting(std::uint64_t index) const {
  Json out = Json::object();
  for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
    const auto& [key, values] = *it;
    out[key] = values[index % values.size()];
    index /= values.size();
  }
  Json ordered = Json::object();
  for (const auto& [key, values] : axes) ordered[key] = out[key];
  return ordered;
}

Grid default_grid(const std::string& estimator) {
  Grid g;
  const Json reg = reals({1e-8, 1e-6, 1e-4, 1e-2});
  if (estimator == "kiv") {
    add(g, "lambda1", reg);
    add(g, "lambda2", reg);
    add(g, "n_features", Json::array({128, 256, 512, 1024}));
  } else if (estimator == "dfiv") {
    const Json lr = reals({1e-5, 3e-5, 1e-4, 3e-4, 1e-3});
    add(g, "lambda1", reg);
    add(g, "lambda2", reg);
    add(g, "value_l2", reg);
    add(g, "instrument_l2", reg);
    add(g, "value_learning_rate", lr);
    add(g, "instrument_learning_rate", lr);
    add(g, "instrument_hidden", widths({50, 100, 150}));
  } else if (estimator == "deep_iv") {
    const Json lr = reals({1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3});
    add(g, "stage1.hidden", widths({32, 64, 128}));
    add(g, "stage1.n_components", Json::array({1, 3, 10}));
    add(g, "stage1.learning_rate", lr);
    add(g, "n_mc_samples", Json::array({1, 3, 10}));
    add(g, "learning_rate", lr);
  } else if (estimator == "deepgmm") {
    add_adversarial(g);
  } else if (estimator == "agmm") {
    add_adversarial(g);
    const Json ab = reals({1e-10, 1e-8, 1e-6, 1e-4, 1e-2});
    add(g, "a", ab);
    add(g, "b", ab);
  } else if (estimator == "asem") {
    add_adversarial(g);
    add(g, "a", reg);
    add(g, "b", reg);
    add(g, "alpha", reg);
  } else {
    make_estimator(estimator, Json::object());
    throw ConfigError("grid: no published search space for '" + estimator + "'; give an explicit grid");
  }
  return g;
}

SearchSpec parse_search_spec(const Json& j) {
  JsonFields r(j, "");
  SearchSpec s;
  const Json& base = r.raw("base");
  if (!base.is_object()) throw ConfigError("base: expected an experiment config object");
  s.base = parse_experiment_config(base);
  const Json& grid = r.raw("grid");
  if (grid.is_null() || grid == "default") {
    s.grid = default_grid(s.base.estimator.name);
    // Component counts only matter for the mixture stage 1.
    if (s.base.estimator.name == "deep_iv" && s.base.estimator.params["stage1"].value("kind", "") != "mixture")
      std::erase_if(s.grid.axes, [](const auto& axis) { return axis.first == "stage1.n_components"; });
  } else if (grid.is_object()) {
    for (const auto& [key, values] : grid.items()) {
      if (!values.is_array() || values.empty()) throw ConfigError("grid." + key + ": expected a non-empty list");
      add(s.grid, key, values);
    }
    if (s.grid.axes.empty()) throw ConfigError("grid: no hyperparameters given");
  } else {
    throw ConfigError("grid: expected an object or \"default\"");
  }
  s.max_settings = r.count("max_settings", 100);
  s.seed = r.get<std::uint64_t>("seed", 0);
  s.workers = r.count("workers", 1);
  s.output = r.get<std::string>("output", "");
  r.finish();
  if (s.max_settings == 0) throw ConfigError("max_settings must be positive");
  return s;
}

SearchSpec load_search_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open search spec '" + path.string() + "'");
  try {
    return parse_search_spec(Json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("search spec is not valid JSON: " + std::string(e.what()));
  }
}

std::vector<std::uint64_t> sample_settings(const Grid& grid, std::size_t max_settings, std::uint64_t seed) {
  const std::uint64_t n = grid.size();
  const std::uint64_t k = std::min<std::uint64_t>(n, max_settings);
  // Partial Fisher-Yates over a sparse permutation, so huge grids stay cheap.
  Rng rng = make_rng(seed, Stream::search);
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  const auto at = [&](std::uint64_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<std::uint64_t> out;
  out.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = std::uniform_int_distribution<std::uint64_t>(i, n - 1)(rng);
    const std::uint64_t vi = at(i), vj = at(j);
    swapped[i] = vj;
    swapped[j] = vi;
    out.push_back(vj);
  }
  return out;
}

Json apply_setting(const Json& params, const Json& setting) {
  Json out = params;
  for (const auto& [key, value] : setting.items()) {
    Json* node = &out;
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
      Json& child = (*node)[key.substr(start, dot - start)];
      if (child.is_null()) child = Json::object();
      if (!child.is_object()) throw ConfigError("grid." + key + ": '" + key.substr(0, dot) + "' is not an object");
      node = &child;
    }
    (*node)[key.substr(start)] = value;
  }
  return out;
}

SearchResult hyperparam_search(const SearchSpec& spec) {
  const ExperimentConfig& base = spec.base;
  const env::TabularMdp mdp = build_mdp(base.env);
  const env::Policy policy = env::chain_policy(mdp);

  const bool sequential = base.estimator.name == "deep_iv";
  Grid first, second;
  for (const auto& axis : spec.grid.axes)
    (sequential && axis.first.rfind("stage1.", 0) == 0 ? first : second).axes.push_back(axis);
  if (!sequential) std::swap(first, second);

  // Draw and validate every setting before any fit.
  const auto draw = [&](const Grid& g, const Json& params, std::uint64_t stream_seed) {
    std::vector<Json> settings, full;
    for (std::uint64_t idx : sample_settings(g, spec.max_settings, stream_seed)) {
      settings.push_back(g.setting(idx));
      full.push_back(make_estimator(base.estimator.name, apply_setting(params, settings.back()))->params());
    }
    return std::pair{settings, full};
  };

  const data::TransitionDataset ds = build_dataset(base, mdp, 0);
  const auto [train, valid] = data::split(ds, data::kTrainValidRatio, base.seed);
  const RunContext ctx{mdp, policy, train, valid, base.seed, base.step_scale};
  const auto full_metric = [&](const Json& params) {
    const FitOutcome fit = make_estimator(base.estimator.name, params)->fit(ctx);
    return Scored{false, fit.validation_metric, fit.abort_reason ? "recovered" : ""};
  };

  SearchResult result;
  Json params = base.estimator.params;
  double metric = 0.0;
  if (sequential && !first.axes.empty()) {
    auto [settings, full] = draw(first, params, spec.seed);
    auto rows = evaluate(settings, full, "stage1", spec.workers,
                         [&](const Json& p) { return Scored{false, deep_iv_stage1_metric(p, ctx), ""}; });
    const std::size_t b = best_row(rows, "stage1");
    params = full[b];
    metric = rows[b].metric;
    result.ledger = std::move(rows);
  }
  const Grid& main = sequential ? second : first;
  if (!main.axes.empty()) {
    auto [settings, full] = draw(main, params, spec.seed + (sequential ? 1 : 0));
    auto rows = evaluate(settings, full, sequential ? "stage2" : "full", spec.workers, full_metric);
    const std::size_t b = best_row(rows, sequential ? "stage2" : "full");
    params = full[b];
    metric = rows[b].metric;
    const std::size_t offset = result.ledger.size();
    for (auto& row : rows) {
      row.index += offset;
      result.ledger.push_back(std::move(row));
    }
  }
  result.best_params = params;
  result.best_metric = metric;
  result.best_config = base;
  result.best_config.estimator.params = params;
  result.best_config.output = "";

  if (!spec.output.empty()) {
    const std::filesystem::path dir(spec.output);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "ledger.csv", std::ios::binary) << ledger_csv(result.ledger);
    std::ofstream(dir / "best_config.json", std::ios::binary) << to_json(result.best_config).dump(2) << "\n";
  }
  return result;
}

std::string ledger_csv(const std::vector<LedgerRow>& ledger) {
  std::ostringstream out;
  out << "index,stage,status,metric,setting\n";
  for (const auto& r : ledger) {
    const std::string status = r.aborted ? "aborted:" + r.abort_kind : (r.abort_kind.empty() ? "ok" : r.abort_kind);
    out << r.index << "," << r.stage << "," << status << "," << (r.aborted ? "" : data::format_real(r.metric)) << ","
        << csv_quote(r.setting.dump()) << "\n";
  }
  return out.str();
}

}  // namespace ivope::harness
