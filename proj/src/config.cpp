#include "driftmeta/config.hpp"

#include <nlohmann/json.hpp>

#include "driftmeta/errors.hpp"
#include "driftmeta/io.hpp"
#include "driftmeta/rng.hpp"

namespace driftmeta {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) fail(path + "/" + it.key(), "unknown key");
  }
}

double take_num(const json& obj, const std::string& path, const char* key,
                double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(path + "/" + key, "expected a number");
  return v.get<double>();
}

int take_int(const json& obj, const std::string& path, const char* key,
             int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(path + "/" + key, "expected an integer");
  return v.get<int>();
}

std::string take_str(const json& obj, const std::string& path, const char* key,
                     const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

void require_positive(int v, const std::string& path) {
  if (v < 1) fail(path, "must be >= 1");
}

void require_nonneg(double v, const std::string& path) {
  if (!(v >= 0.0)) fail(path, "must be >= 0");
}

ScenarioKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "recurring-cycle") return ScenarioKind::RecurringCycle;
  if (s == "random-walk") return ScenarioKind::RandomWalk;
  if (s == "mixed") return ScenarioKind::Mixed;
  fail(path, "unknown scenario kind '" + s +
                 "' (expected recurring-cycle, random-walk or mixed)");
}

std::string kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::RecurringCycle: return "recurring-cycle";
    case ScenarioKind::RandomWalk: return "random-walk";
    case ScenarioKind::Mixed: return "mixed";
  }
  throw ValueError("bad scenario kind");
}

Method parse_method(const std::string& s, const std::string& path) {
  if (s == "il") return Method::Il;
  if (s == "meta-il") return Method::MetaIl;
  if (s == "meta-da") return Method::MetaDa;
  fail(path, "unknown method '" + s + "' (expected il, meta-il or meta-da)");
}

}  // namespace

Method parse_method_name(const std::string& s) {
  return parse_method(s, "method");
}

namespace {

ScenarioSpec parse_scenario(const json& obj, const std::string& path) {
  check_keys(obj, path,
             {"kind", "num_regimes", "dates", "symbols", "features", "sigma",
              "bias_scale", "feature_shift", "period_windows", "emerge_prob"});
  ScenarioSpec s;
  s.kind = parse_kind(take_str(obj, path, "kind", "recurring-cycle"),
                      path + "/kind");
  s.num_regimes = take_int(obj, path, "num_regimes", s.num_regimes);
  s.dates = take_int(obj, path, "dates", s.dates);
  s.symbols = take_int(obj, path, "symbols", s.symbols);
  s.features = take_int(obj, path, "features", s.features);
  s.sigma = take_num(obj, path, "sigma", s.sigma);
  s.bias_scale = take_num(obj, path, "bias_scale", s.bias_scale);
  s.feature_shift = take_num(obj, path, "feature_shift", s.feature_shift);
  s.period_windows = take_int(obj, path, "period_windows", s.period_windows);
  s.emerge_prob = take_num(obj, path, "emerge_prob", s.emerge_prob);

  require_positive(s.num_regimes, path + "/num_regimes");
  require_positive(s.dates, path + "/dates");
  if (s.symbols < 2) fail(path + "/symbols", "must be >= 2");
  require_positive(s.features, path + "/features");
  require_nonneg(s.sigma, path + "/sigma");
  require_nonneg(s.bias_scale, path + "/bias_scale");
  require_nonneg(s.feature_shift, path + "/feature_shift");
  require_positive(s.period_windows, path + "/period_windows");
  if (!(s.emerge_prob >= 0.0 && s.emerge_prob <= 1.0))
    fail(path + "/emerge_prob", "must be in [0, 1]");
  return s;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Il: return "il";
    case Method::MetaIl: return "meta-il";
    case Method::MetaDa: return "meta-da";
  }
  throw ValueError("bad method");
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("/: config must be a JSON object");
  check_keys(root, "",
             {"seed", "method", "scenario", "stream_csv", "split", "model",
              "adapt", "taskinfer", "eval"});

  ExperimentConfig cfg;

  if (!root.contains("seed")) throw ConfigError("seed required");
  const json& seed = root.at("seed");
  if (!seed.is_number_unsigned()) fail("/seed", "must be a non-negative integer");
  cfg.seed = seed.get<uint64_t>();

  cfg.method = parse_method(take_str(root, "", "method", "meta-da"), "/method");

  if (root.contains("scenario") && root.contains("stream_csv"))
    throw ConfigError("/: scenario and stream_csv are mutually exclusive");
  cfg.stream_csv = take_str(root, "", "stream_csv", "");
  if (cfg.stream_csv.empty()) {
    if (root.contains("scenario") && !root.at("scenario").is_object())
      fail("/scenario", "expected an object");
    cfg.scenario = root.contains("scenario")
                       ? parse_scenario(root.at("scenario"), "/scenario")
                       : ScenarioSpec{};
  }

  if (root.contains("split")) {
    const json& sp = root.at("split");
    if (!sp.is_object()) fail("/split", "expected an object");
    check_keys(sp, "/split", {"train_end", "val_end"});
    cfg.split.train_end = take_int(sp, "/split", "train_end", cfg.split.train_end);
    cfg.split.val_end = take_int(sp, "/split", "val_end", cfg.split.val_end);
  }
  require_positive(cfg.split.train_end, "/split/train_end");
  if (cfg.split.val_end <= cfg.split.train_end)
    fail("/split/val_end", "must be > train_end");

  if (root.contains("model")) {
    const json& m = root.at("model");
    if (!m.is_object()) fail("/model", "expected an object");
    check_keys(m, "/model", {"arch", "hidden", "q", "steps"});
    const std::string arch = take_str(m, "/model", "arch", "mlp");
    if (arch == "mlp") cfg.arch = Arch::Mlp;
    else if (arch == "recurrent") cfg.arch = Arch::Recurrent;
    else fail("/model/arch", "expected mlp or recurrent");
    cfg.hidden = take_int(m, "/model", "hidden", cfg.hidden);
    cfg.q = take_int(m, "/model", "q", cfg.q);
    cfg.steps = take_int(m, "/model", "steps", cfg.steps);
  }
  require_positive(cfg.hidden, "/model/hidden");
  require_positive(cfg.q, "/model/q");
  require_positive(cfg.steps, "/model/steps");
  if (cfg.arch == Arch::Recurrent && cfg.scenario &&
      cfg.scenario->features % cfg.steps != 0)
    fail("/model/steps", "must divide scenario features for recurrent arch");

  if (root.contains("adapt")) {
    const json& a = root.at("adapt");
    if (!a.is_object()) fail("/adapt", "expected an object");
    check_keys(a, "/adapt",
               {"t_ada", "n_proj", "omega", "eta", "eta_a", "patience",
                "max_epochs"});
    cfg.t_ada = take_int(a, "/adapt", "t_ada", cfg.t_ada);
    cfg.n_proj = take_int(a, "/adapt", "n_proj", cfg.n_proj);
    cfg.omega = take_num(a, "/adapt", "omega", cfg.omega);
    cfg.eta = take_num(a, "/adapt", "eta", cfg.eta);
    cfg.eta_a = take_num(a, "/adapt", "eta_a", cfg.eta_a);
    cfg.patience = take_int(a, "/adapt", "patience", cfg.patience);
    cfg.max_epochs = take_int(a, "/adapt", "max_epochs", cfg.max_epochs);
  }
  if (cfg.t_ada < 2) fail("/adapt/t_ada", "must be >= 2");
  require_positive(cfg.n_proj, "/adapt/n_proj");
  if (!(cfg.omega > 0)) fail("/adapt/omega", "must be > 0");
  require_nonneg(cfg.eta, "/adapt/eta");
  require_nonneg(cfg.eta_a, "/adapt/eta_a");
  require_positive(cfg.patience, "/adapt/patience");
  require_positive(cfg.max_epochs, "/adapt/max_epochs");

  if (root.contains("taskinfer")) {
    const json& t = root.at("taskinfer");
    if (!t.is_object()) fail("/taskinfer", "expected an object");
    check_keys(t, "/taskinfer", {"lookback", "kappa", "gamma", "p", "eta_t"});
    cfg.lookback = take_int(t, "/taskinfer", "lookback", cfg.lookback);
    cfg.kappa = take_num(t, "/taskinfer", "kappa", cfg.kappa);
    cfg.gamma = take_num(t, "/taskinfer", "gamma", cfg.gamma);
    cfg.p = take_int(t, "/taskinfer", "p", cfg.p);
    cfg.eta_t = take_num(t, "/taskinfer", "eta_t", cfg.eta_t);
  }
  require_positive(cfg.lookback, "/taskinfer/lookback");
  if (!(cfg.kappa >= 0.0 && cfg.kappa <= 100.0))
    fail("/taskinfer/kappa", "must be in [0, 100]");
  require_nonneg(cfg.gamma, "/taskinfer/gamma");
  require_positive(cfg.p, "/taskinfer/p");
  require_nonneg(cfg.eta_t, "/taskinfer/eta_t");

  if (root.contains("eval")) {
    const json& e = root.at("eval");
    if (!e.is_object()) fail("/eval", "expected an object");
    check_keys(e, "/eval", {"topk"});
    cfg.topk = take_int(e, "/eval", "topk", cfg.topk);
  }
  require_positive(cfg.topk, "/eval/topk");

  if (cfg.scenario) {
    cfg.scenario->t_ada = cfg.t_ada;  // schedule aligns to adaptation windows
    if (cfg.split.val_end >= cfg.scenario->dates)
      fail("/split/val_end", "must be < scenario dates");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  return parse_config(read_file(path));
}

std::string canonical_config(const ExperimentConfig& cfg) {
  json j;  // nlohmann::json orders keys, so the dump is canonical
  j["seed"] = cfg.seed;
  j["method"] = method_name(cfg.method);
  if (cfg.scenario) {
    const ScenarioSpec& s = *cfg.scenario;
    j["scenario"] = {{"kind", kind_name(s.kind)},
                     {"num_regimes", s.num_regimes},
                     {"dates", s.dates},
                     {"symbols", s.symbols},
                     {"features", s.features},
                     {"sigma", s.sigma},
                     {"bias_scale", s.bias_scale},
                     {"feature_shift", s.feature_shift},
                     {"period_windows", s.period_windows},
                     {"emerge_prob", s.emerge_prob}};
  } else {
    j["stream_csv"] = cfg.stream_csv;
  }
  j["split"] = {{"train_end", cfg.split.train_end},
                {"val_end", cfg.split.val_end}};
  j["model"] = {{"arch", cfg.arch == Arch::Mlp ? "mlp" : "recurrent"},
                {"hidden", cfg.hidden},
                {"q", cfg.q},
                {"steps", cfg.steps}};
  j["adapt"] = {{"t_ada", cfg.t_ada},       {"n_proj", cfg.n_proj},
                {"omega", cfg.omega},       {"eta", cfg.eta},
                {"eta_a", cfg.eta_a},       {"patience", cfg.patience},
                {"max_epochs", cfg.max_epochs}};
  j["taskinfer"] = {{"lookback", cfg.lookback},
                    {"kappa", cfg.kappa},
                    {"gamma", cfg.gamma},
                    {"p", cfg.p},
                    {"eta_t", cfg.eta_t}};
  j["eval"] = {{"topk", cfg.topk}};
  return j.dump();
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(canonical_config(cfg));
}

}  // namespace driftmeta
