#include "ivope/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ivope/data.hpp"
#include "ivope/evaluation.hpp"
#include "ivope/harness/experiment.hpp"

namespace ivope::harness {

namespace {

struct Group {
  std::string label;
  std::string estimator;
  Json tags;
  std::vector<double> oracle_q;
  double rho_min = 0.0;
  double rho_max = 0.0;
  std::vector<Json> seeds;
  std::size_t sources = 0;
};

std::string r(double v) { return data::format_real(v); }

Json stats(const std::vector<Json>& seeds, const char* key) {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.at(key).get<double>());
  const Aggregate a = aggregate(v);
  return Json{{"mean", a.mean}, {"std", a.std}};
}

}  // namespace

Json load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("report '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

MergedReport merge_reports(const std::vector<Json>& reports) {
  if (reports.empty()) throw ConfigError("report: no input reports given");
  std::vector<Group> groups;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const Json& rep = reports[i];
    if (!rep.is_object() || rep.value("schema", "") != kReportSchema)
      throw InvalidArgument("report " + std::to_string(i) + ": expected schema '" + kReportSchema + "'");
    try {
      const std::string label = rep.at("label").get<std::string>();
      const Json& tags = rep.at("tags");
      const auto oracle = rep.at("oracle_q").get<std::vector<double>>();
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const Group& g) { return g.label == label && g.tags == tags; });
      if (it == groups.end()) {
        Group g;
        g.label = label;
        g.estimator = rep.at("estimator").get<std::string>();
        g.tags = tags;
        g.oracle_q = oracle;
        g.rho_min = rep.at("rho_bounds").at(0).get<double>();
        g.rho_max = rep.at("rho_bounds").at(1).get<double>();
        groups.push_back(std::move(g));
        it = groups.end() - 1;
      } else if (it->oracle_q != oracle) {
        throw InvalidArgument("report " + std::to_string(i) + ": label '" + label +
                              "' already seen with a different environment");
      }
      for (const auto& s : rep.at("seeds")) it->seeds.push_back(s);
      ++it->sources;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("report " + std::to_string(i) + ": malformed (" + std::string(e.what()) + ")");
    }
  }

  MergedReport out;
  Json list = Json::array();
  std::ostringstream fig2, fig3, fig4;
  fig2 << "method,state,q_oracle,q_mean,q_std,n_seeds\n";
  fig3 << "method,seed,step,value_estimate,normalized_error\n";
  fig4 << "axis,value,method,seed,q0_abs_error,normalized_error\n";
  for (const auto& g : groups) {
    list.push_back({{"label", g.label},
                    {"estimator", g.estimator},
                    {"tags", g.tags},
                    {"n_reports", g.sources},
                    {"n_seeds", g.seeds.size()},
                    {"rho_true", g.seeds.front().at("rho_true")},
                    {"rho_hat", stats(g.seeds, "rho_hat")},
                    {"normalized_error", stats(g.seeds, "normalized_error")},
                    {"q0_hat", stats(g.seeds, "q0_hat")},
                    {"q0_abs_error", stats(g.seeds, "q0_abs_error")},
                    {"projected_rmse", stats(g.seeds, "projected_rmse")}});

    for (std::size_t s = 0; s < g.oracle_q.size(); ++s) {
      std::vector<double> v;
      for (const auto& seed : g.seeds) v.push_back(seed.at("q_values").at(s).get<double>());
      const Aggregate a = aggregate(v);
      fig2 << g.label << "," << s << "," << r(g.oracle_q[s]) << "," << r(a.mean) << "," << r(a.std) << "," << v.size()
           << "\n";
    }
    for (const auto& seed : g.seeds) {
      const double truth = seed.at("rho_true").get<double>();
      for (const auto& p : seed.at("curve")) {
        const double v = p.at(3).get<double>();
        const double err = evaluation::abs_error(evaluation::normalize(v, g.rho_min, g.rho_max),
                                                 evaluation::normalize(truth, g.rho_min, g.rho_max));
        fig3 << g.label << "," << seed.at("seed").get<std::uint64_t>() << "," << p.at(0).get<std::size_t>() << ","
             << r(v) << "," << r(err) << "\n";
      }
    }
    if (g.tags.contains("axis") && g.tags.contains("value")) {
      for (const auto& seed : g.seeds)
        fig4 << g.tags["axis"].get<std::string>() << "," << r(g.tags["value"].get<double>()) << "," << g.label << ","
             << seed.at("seed").get<std::uint64_t>() << "," << r(seed.at("q0_abs_error").get<double>()) << ","
             << r(seed.at("normalized_error").get<double>()) << "\n";
    }
  }
  out.summary = {{"schema", "ivope.summary/1"}, {"groups", list}};
  out.fig2_csv = fig2.str();
  out.fig3_csv = fig3.str();
  out.fig4_csv = fig4.str();
  return out;
}

void write_merged(const MergedReport& merged, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "summary.json", std::ios::binary) << merged.summary.dump(2) << "\n";
  std::ofstream(dir / "fig2.csv", std::ios::binary) << merged.fig2_csv;
  std::ofstream(dir / "fig3.csv", std::ios::binary) << merged.fig3_csv;
  std::ofstream(dir / "fig4.csv", std::ios::binary) << merged.fig4_csv;
}

}  // namespace ivope::harness
