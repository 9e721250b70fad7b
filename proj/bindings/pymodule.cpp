// Python face of the library: config handling, stream generation, the full
// experiment runner, the ablation grid, and the evaluation metrics. Heavy
// calls drop the GIL so a long run does not freeze the host interpreter.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "driftmeta/config.hpp"
#include "driftmeta/errors.hpp"
#include "driftmeta/metrics.hpp"
#include "driftmeta/runner.hpp"
#include "driftmeta/stream.hpp"

namespace py = pybind11;
using namespace driftmeta;

namespace {

Vector to_vector(const std::vector<double>& xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  for (size_t i = 0; i < xs.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = xs[i];
  return v;
}

std::string hex16(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

PYBIND11_MODULE(_driftmeta, m) {
  m.doc() = "incremental drift-aware forecasting: config, runner, metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<LookaheadError>(m, "LookaheadError",
                                         PyExc_RuntimeError);

  m.def(
      "canonical_config",
      [](const std::string& text) {
        return canonical_config(parse_config(text));
      },
      py::arg("config_json"),
      "Parse config JSON and return its canonical form (all defaults "
      "explicit, keys sorted). Equal configs canonicalize identically.");

  m.def(
      "config_hash",
      [](const std::string& text) {
        return hex16(config_hash(parse_config(text)));
      },
      py::arg("config_json"),
      "16-digit hex hash of the canonical config; the same value is stamped "
      "into reports and checkpoints.");

  m.def(
      "generate",
      [](const std::string& text, const std::string& out_dir) {
        const ExperimentConfig cfg = parse_config(text);
        if (!cfg.scenario)
          throw ConfigError("generate needs a scenario config");
        std::filesystem::create_directories(out_dir);
        const DriftScenario sc = build_scenario(*cfg.scenario, cfg.seed);
        const GeneratedStream gs =
            generate_stream(sc, cfg.scenario->dates, cfg.scenario->symbols,
                            cfg.scenario->features);
        write_stream_csv(gs.days, out_dir + "/stream.csv");
        write_regime_log_csv(gs.regime_log, out_dir + "/regimes.csv");
      },
      py::arg("config_json"), py::arg("out_dir"),
      py::call_guard<py::gil_scoped_release>(),
      "Generate the config's synthetic stream into out_dir as stream.csv "
      "plus the ground-truth regimes.csv.");

  m.def(
      "run",
      [](const std::string& text, const std::string& out_dir, bool resume,
         bool force) {
        const ExperimentConfig cfg = parse_config(text);
        if (out_dir.empty()) return report_json(run_experiment(cfg));
        const RunArtifacts art{out_dir, resume, force};
        return report_json(run_experiment(cfg, &art));
      },
      py::arg("config_json"), py::arg("out_dir") = std::string(),
      py::arg("resume") = false, py::arg("force") = false,
      py::call_guard<py::gil_scoped_release>(),
      "Run the three-stage experiment and return the report as a JSON "
      "string. With out_dir set, also write report/daily/train_log/timing "
      "files and stage checkpoints (resume reuses matching checkpoints).");

  m.def(
      "ablate",
      [](const std::vector<std::string>& config_texts, int seeds, int jobs) {
        std::vector<ExperimentConfig> cfgs;
        cfgs.reserve(config_texts.size());
        for (const std::string& t : config_texts)
          cfgs.push_back(parse_config(t));
        AblationResult r;
        {
          py::gil_scoped_release release;
          r = run_ablation(cfgs, seeds, jobs);
        }
        py::dict out;
        out["csv"] = ablation_csv(r);
        out["ranks"] = ranks_json(r);
        return out;
      },
      py::arg("config_jsons"), py::arg("seeds") = 5, py::arg("jobs") = 1,
      "Run a full method x scenario grid, every cell over seeds shared "
      "streams. Returns {'csv': table, 'ranks': friedman json}.");

  m.def(
      "pearson",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return pearson(to_vector(a), to_vector(b));
      },
      py::arg("a"), py::arg("b"),
      "Pearson correlation; None when either side is constant.");

  m.def(
      "spearman",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return spearman(to_vector(a), to_vector(b));
      },
      py::arg("a"), py::arg("b"),
      "Rank correlation with average ranks for ties; None when degenerate.");

  m.def(
      "friedman_ranks",
      [](const std::vector<std::vector<double>>& scores) {
        const FriedmanResult r = friedman_ranks(scores);
        return py::make_tuple(r.avg_ranks, r.chi_square);
      },
      py::arg("scores"),
      "scores[method][scenario], higher better. Returns (average ranks, "
      "chi-square statistic); rank 1 is best.");

  m.def(
      "percentile",
      [](std::vector<double> xs, double pct) {
        return percentile(std::move(xs), pct);
      },
      py::arg("xs"), py::arg("pct"),
      "Linear-interpolation percentile (numpy's 'linear' convention).");
}
