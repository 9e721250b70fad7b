#pragma once

#include <optional>
#include <string>

#include "driftmeta/models.hpp"
#include "driftmeta/stream.hpp"

namespace driftmeta {

// Which stage-3 machinery an experiment runs with. Il is the plain
// incremental baseline, MetaIl adds the data/label adapters, MetaDa adds
// task inference and memory selection on top.
enum class Method { Il, MetaIl, MetaDa };

std::string method_name(Method m);
// Inverse of method_name; throws ConfigError on anything else.
Method parse_method_name(const std::string& s);

// Date boundaries of the train/validation/test splits. A task belongs to the
// split its test window starts in: [0, train_end) / [train_end, val_end) /
// [val_end, end).
struct SplitBounds {
  int train_end = 450;
  int val_end = 600;
};

// Full experiment recipe. Everything an experiment does is a pure function
// of this struct, so its canonical hash identifies artifacts on disk.
struct ExperimentConfig {
  uint64_t seed = 0;  // required in JSON, no default
  Method method = Method::MetaDa;

  // Data source: a synthetic scenario (default) or a stream CSV. Exactly one.
  std::optional<ScenarioSpec> scenario;
  std::string stream_csv;

  SplitBounds split;

  // forecaster
  Arch arch = Arch::Mlp;
  int hidden = 64;
  int q = 32;
  int steps = 6;  // recurrent only

  // adaptation cycle
  int t_ada = 15;
  int n_proj = 8;
  double omega = 1.0;
  double eta = 1e-3;
  double eta_a = 1e-2;
  int patience = 5;
  int max_epochs = 50;

  // task inference
  int lookback = 8;
  double kappa = 80.0;
  double gamma = 1.0;
  int p = 16;
  double eta_t = 1e-3;

  // evaluation
  int topk = 30;
};

// Parses and validates config JSON. Unknown keys, missing seed, and
// out-of-range values all throw ConfigError naming the JSON pointer path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical form: every field explicit, keys sorted, shortest round-trip
// doubles. Equal configs produce equal strings.
std::string canonical_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical form; stamped into checkpoints and reports.
uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace driftmeta
