#include "certopt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "certopt/doe.hpp"
#include "certopt/errors.hpp"
#include "certopt/rng.hpp"
#include "certopt/tuner.hpp"

#ifndef CERTOPT_VERSION
#define CERTOPT_VERSION "0.0.0"
#endif

namespace certopt::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------- manifest

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw ConfigError("manifest: " + what); }

void require(const json& j, const char* key, json::value_t type, const char* type_name) {
  if (!j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  const auto t = j.at(key).type();
  const bool ok = t == type || (type == json::value_t::number_unsigned && t == json::value_t::number_integer &&
                                j.at(key).get<std::int64_t>() >= 0);
  if (!ok) schema_error(std::string("field '") + key + "' must be " + type_name);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

const json& manifest_schema() {
  static const json schema = json::parse(R"({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "$id": "certopt.manifest/1",
  "title": "certopt run manifest",
  "type": "object",
  "required": ["schema", "run_id", "problem", "tool_version", "seeds", "config", "outputs"],
  "properties": {
    "schema": {"const": "certopt.manifest/1"},
    "run_id": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
    "problem": {"type": "string", "minLength": 1},
    "tool_version": {"type": "string", "minLength": 1},
    "seeds": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
    "config": {"type": "object", "additionalProperties": {"type": "string"}},
    "outputs": {"type": "object", "additionalProperties": {"type": "string", "minLength": 1, "pattern": "^(?!/)(?!.*(^|/)\\.\\.(/|$)).+$"}}
  },
  "additionalProperties": false
})");
  return schema;
}

void validate_manifest(const json& j) {
  if (!j.is_object()) schema_error("document must be an object");
  require(j, "schema", json::value_t::string, "a string");
  if (j.at("schema") != kManifestSchema) schema_error("unsupported schema '" + j.at("schema").get<std::string>() + "'");
  require(j, "run_id", json::value_t::string, "a string");
  const auto id = j.at("run_id").get<std::string>();
  if (id.size() != 16 || id.find_first_not_of("0123456789abcdef") != std::string::npos) {
    schema_error("run_id must be 16 lowercase hex digits");
  }
  require(j, "problem", json::value_t::string, "a string");
  if (j.at("problem").get<std::string>().empty()) schema_error("problem must be nonempty");
  require(j, "tool_version", json::value_t::string, "a string");
  require(j, "seeds", json::value_t::object, "an object");
  for (const auto& [k, v] : j.at("seeds").items()) {
    if (!v.is_number_unsigned()) schema_error("seed '" + k + "' must be a non-negative integer");
  }
  require(j, "config", json::value_t::object, "an object");
  for (const auto& [k, v] : j.at("config").items()) {
    if (!v.is_string()) schema_error("config value '" + k + "' must be a string");
  }
  require(j, "outputs", json::value_t::object, "an object");
  for (const auto& [k, v] : j.at("outputs").items()) {
    if (!v.is_string() || v.get<std::string>().empty()) schema_error("output '" + k + "' must be a nonempty path");
    const fs::path rel = v.get<std::string>();
    const bool escapes = std::any_of(rel.begin(), rel.end(), [](const fs::path& part) { return part == ".."; });
    if (rel.is_absolute() || escapes) schema_error("output '" + k + "' must be relative to the run directory");
  }
  static const std::set<std::string> allowed = {"schema", "run_id", "problem", "tool_version", "seeds", "config", "outputs"};
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) schema_error("unexpected field '" + k + "'");
  }
}

json RunManifest::to_json() const {
  json j;
  j["schema"] = kManifestSchema;
  j["run_id"] = run_id;
  j["problem"] = problem;
  j["tool_version"] = tool_version;
  j["seeds"] = seeds;
  j["config"] = config;
  j["outputs"] = outputs;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  validate_manifest(j);
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.problem = j.at("problem").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.config = j.at("config");
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  return m;
}

std::vector<std::string> RunManifest::missing_outputs(const fs::path& dir) const {
  std::vector<std::string> missing;
  for (const auto& [role, rel] : outputs) {
    if (!fs::exists(dir / rel)) missing.push_back(role + " (" + rel + ")");
  }
  return missing;
}

void RunManifest::save(const fs::path& dir) const {
  const auto missing = missing_outputs(dir);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw StateError("manifest: referenced outputs do not exist: " + list);
  }
  const json j = to_json();
  validate_manifest(j);
  write_json(dir / kManifestFile, j);
}

RunManifest RunManifest::load(const fs::path& dir) { return from_json(read_json(dir / kManifestFile)); }

// ---------------------------------------------------------------- settings

const std::set<std::string>& Settings::known_keys() {
  static const std::set<std::string> keys = {
      "seed", "threads", "doe.points", "problem.dtlz2_form",
      "train.learning_rate", "train.batch_size", "train.epochs", "train.patience", "train.activation",
      "train.schedule", "train.lr_factor", "train.lr_patience", "train.min_learning_rate",
      "train.validation_fraction", "train.test_fraction",
      "pso.swarm_size", "pso.iterations", "pso.inertia", "pso.cognitive", "pso.social", "pso.archive_capacity",
      "certify.epsilon", "certify.confidence", "certify.zscore", "certify.sigma", "certify.margin",
      "certify.population_size", "certify.normalize", "certify.population", "certify.method",
      "hb.R", "hb.eta", "hb.seed"};
  return keys;
}

namespace {

const std::set<std::string>& train_params() {
  static const std::set<std::string> params = {"learning_rate", "batch_size",     "epochs",        "patience",
                                               "activation",    "schedule",       "lr_factor",     "lr_patience",
                                               "min_learning_rate", "validation_fraction", "test_fraction"};
  return params;
}

// Reads `<prefix><param>` keys over `t`.
surrogate::TrainConfig read_train(const Config& c, const std::string& prefix, surrogate::TrainConfig t) {
  t.learning_rate = c.get_double(prefix + "learning_rate", t.learning_rate);
  t.batch_size = c.get_size(prefix + "batch_size", t.batch_size);
  t.epochs = c.get_size(prefix + "epochs", t.epochs);
  t.patience = c.get_size(prefix + "patience", t.patience);
  t.activation = surrogate::parse_activation(c.get_string(prefix + "activation", to_string(t.activation)));
  t.schedule = surrogate::parse_lr_schedule(c.get_string(prefix + "schedule", to_string(t.schedule)));
  t.lr_factor = c.get_double(prefix + "lr_factor", t.lr_factor);
  t.lr_patience = c.get_size(prefix + "lr_patience", t.lr_patience);
  t.min_learning_rate = c.get_double(prefix + "min_learning_rate", t.min_learning_rate);
  t.validation_fraction = c.get_double(prefix + "validation_fraction", t.validation_fraction);
  t.test_fraction = c.get_double(prefix + "test_fraction", t.test_fraction);
  t.validate();
  return t;
}

// "train.<target>.<param>" -> (target, param); nullopt for any other key.
std::optional<std::pair<std::string, std::string>> split_target_key(const std::string& key) {
  if (key.rfind("train.", 0) != 0) return std::nullopt;
  const auto dot = key.find('.', 6);
  if (dot == std::string::npos || dot == 6 || key.find('.', dot + 1) != std::string::npos) return std::nullopt;
  return std::make_pair(key.substr(6, dot - 6), key.substr(dot + 1));
}

}  // namespace

Settings Settings::from_config(const Config& c, std::uint64_t default_seed) {
  Config global;
  Settings s;
  for (const auto& [key, value] : c.entries()) {
    const auto split = split_target_key(key);
    if (split && known_keys().count(key) == 0) {
      if (train_params().count(split->second) == 0) throw ConfigError("config: unknown key '" + key + "'");
      s.target_train[split->first].set(split->second, value);
    } else {
      global.set(key, value);
    }
  }
  global.check_known(known_keys());
  s.seed = global.get_u64("seed", default_seed);
  s.threads = std::max<std::size_t>(1, global.get_size("threads", s.threads));
  s.doe_points = global.get_size("doe.points", s.doe_points);
  s.dtlz2_form = parse_dtlz2_form(global.get_string("problem.dtlz2_form", to_string(s.dtlz2_form)));
  s.train = read_train(global, "train.", s.train);
  for (const auto& [target, overrides] : s.target_train) read_train(overrides, "", s.train);  // validates early

  auto& p = s.pso;
  p.swarm_size = global.get_size("pso.swarm_size", p.swarm_size);
  p.iterations = global.get_size("pso.iterations", p.iterations);
  p.inertia = global.get_double("pso.inertia", p.inertia);
  p.cognitive = global.get_double("pso.cognitive", p.cognitive);
  p.social = global.get_double("pso.social", p.social);
  p.archive_capacity = global.get_size("pso.archive_capacity", p.archive_capacity);
  p.validate();

  auto& r = s.certify;
  r.epsilon = global.get_double("certify.epsilon", r.epsilon);
  r.confidence = global.get_double("certify.confidence", r.confidence);
  if (global.has("certify.zscore")) {
    r.spec.zscore = global.get_double("certify.zscore", r.spec.zscore);
  } else if (global.has("certify.confidence")) {
    r.spec.zscore = robustness::zscore_for_confidence(r.confidence);
  }
  r.spec.sigma = global.get_double("certify.sigma", r.spec.sigma);
  r.spec.margin = global.get_double("certify.margin", r.spec.margin);
  if (global.has("certify.population_size")) {
    const auto n = global.get_size("certify.population_size", 0);
    if (n > 0) r.spec.finite_population = n;
  }
  r.normalize = global.get_bool("certify.normalize", r.normalize);
  r.population = robustness::parse_population_mode(global.get_string("certify.population", to_string(r.population)));
  r.method = doe::parse_subsample_method(global.get_string("certify.method", to_string(r.method)));
  r.validate();

  s.hb_max_resource = global.get_size("hb.R", s.hb_max_resource);
  s.hb_eta = global.get_size("hb.eta", s.hb_eta);
  if (global.has("hb.seed")) s.hb_seed = global.get_u64("hb.seed", 0);
  if (s.doe_points < 10) throw ConfigError("config: doe.points must be at least 10");
  return s;
}

Config Settings::snapshot() const {
  Config c;
  c.set("seed", std::to_string(seed));
  c.set("threads", std::to_string(threads));
  c.set("doe.points", std::to_string(doe_points));
  c.set("problem.dtlz2_form", to_string(dtlz2_form));
  c.set("train.learning_rate", format_double(train.learning_rate));
  c.set("train.batch_size", std::to_string(train.batch_size));
  c.set("train.epochs", std::to_string(train.epochs));
  c.set("train.patience", std::to_string(train.patience));
  c.set("train.activation", to_string(train.activation));
  c.set("train.schedule", to_string(train.schedule));
  c.set("train.lr_factor", format_double(train.lr_factor));
  c.set("train.lr_patience", std::to_string(train.lr_patience));
  c.set("train.min_learning_rate", format_double(train.min_learning_rate));
  c.set("train.validation_fraction", format_double(train.validation_fraction));
  c.set("train.test_fraction", format_double(train.test_fraction));
  c.set("pso.swarm_size", std::to_string(pso.swarm_size));
  c.set("pso.iterations", std::to_string(pso.iterations));
  c.set("pso.inertia", format_double(pso.inertia));
  c.set("pso.cognitive", format_double(pso.cognitive));
  c.set("pso.social", format_double(pso.social));
  c.set("pso.archive_capacity", std::to_string(pso.archive_capacity));
  c.set("certify.epsilon", format_double(certify.epsilon));
  c.set("certify.confidence", format_double(certify.confidence));
  c.set("certify.zscore", format_double(certify.spec.zscore));
  c.set("certify.sigma", format_double(certify.spec.sigma));
  c.set("certify.margin", format_double(certify.spec.margin));
  c.set("certify.population_size", std::to_string(certify.spec.finite_population.value_or(0)));
  c.set("certify.normalize", certify.normalize ? "true" : "false");
  c.set("certify.population", to_string(certify.population));
  c.set("certify.method", to_string(certify.method));
  c.set("hb.R", std::to_string(hb_max_resource));
  c.set("hb.eta", std::to_string(hb_eta));
  if (hb_seed) c.set("hb.seed", std::to_string(*hb_seed));
  for (const auto& [target, overrides] : target_train) {
    for (const auto& [param, value] : overrides.entries()) c.set("train." + target + "." + param, value);
  }
  return c;
}

surrogate::TrainConfig Settings::train_for(const std::string& target) const {
  const auto it = target_train.find(target);
  return it == target_train.end() ? train : read_train(it->second, "", train);
}

// ---------------------------------------------------------------- run directory

std::vector<std::size_t> table_architecture(const std::string& problem, const std::string& target) {
  if (problem == "binh_korn") {
    if (target == "f1" || target == "f2" || target == "g1" || target == "g2") return {2, 60, 60, 60, 1};
  } else if (problem == "zdt3") {
    if (target == "f1") return {3, 100, 1};
    if (target == "f2") return {3, 80, 80, 80, 80, 80, 1};
  } else if (problem == "dtlz2") {
    if (target == "f1") return {3, 180, 180, 180, 180, 180, 1};
    if (target == "f2") return {3, 220, 220, 220, 220, 220, 1};
    if (target == "f3") return {3, 220, 220, 1};
  }
  throw LookupError("no table architecture for " + problem + "/" + target + "; pass explicit widths or --tune");
}

std::map<std::string, std::string> table_training(const std::string& problem, const std::string& target) {
  // The two-layer DTLZ2 f3 network underfits at the shared defaults; the deeper ones do not
  // tolerate this rate.
  if (problem == "dtlz2" && target == "f3") return {{"learning_rate", "0.003"}, {"batch_size", "16"}};
  return {};
}

std::uint64_t stage_seed(std::uint64_t base, const std::string& stage) { return Rng::derive(base, stage).next_u64(); }

Run Run::open(const fs::path& dir, const std::string& problem, const Settings& settings) {
  Run run;
  run.dir = dir;
  run.settings = settings;
  run.problem = registry_lookup(problem, RegistryOptions{settings.dtlz2_form});
  for (const auto& target : run.problem.output_names()) {
    for (const auto& [param, value] : table_training(problem, target)) {
      auto& overrides = run.settings.target_train[target];
      if (!overrides.has(param)) overrides.set(param, value);
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

  const auto snapshot = run.settings.snapshot();
  if (fs::exists(dir / kManifestFile)) {
    run.manifest = RunManifest::load(dir);
    if (run.manifest.problem != problem) {
      throw ConfigError("run directory " + dir.string() + " belongs to problem '" + run.manifest.problem + "'");
    }
  }
  run.manifest.problem = problem;
  run.manifest.tool_version = CERTOPT_VERSION;
  run.manifest.config = snapshot.to_json();
  char id[17];
  std::snprintf(id, sizeof id, "%016llx",
                static_cast<unsigned long long>(mix64(fnv1a(problem + "\n" + snapshot.to_text()))));
  run.manifest.run_id = id;
  return run;
}

void Run::record(const std::string& role, const fs::path& file) {
  manifest.outputs[role] = fs::relative(file, dir).generic_string();
}

void Run::save_manifest() const { manifest.save(dir); }

fs::path Run::path(const std::string& role) const {
  const auto it = manifest.outputs.find(role);
  if (it == manifest.outputs.end()) {
    throw StateError("run " + dir.string() + " has no '" + role + "' output; run the producing stage first");
  }
  return dir / it->second;
}

// ---------------------------------------------------------------- generate

Dataset stage_generate(Run& run) {
  const auto& p = run.problem;
  const auto seed = run.settings.seed;
  const auto plan = doe::lhs_sample(run.settings.doe_points, p.dim, seed);
  Dataset data = build_dataset(p, doe::scale_to_bounds(plan, p.bounds), seed);
  const auto csv = run.dir / "dataset.csv";
  save_dataset(data, csv);

  const auto corr = doe::correlation_matrix(data.values, data.columns);
  Matrix table(corr.r.rows(), corr.r.cols());
  std::vector<std::string> header{"variable"};
  header.insert(header.end(), corr.labels.begin(), corr.labels.end());
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (std::size_t i = 0; i < corr.labels.size(); ++i) {
    os << corr.labels[i];
    for (std::size_t j = 0; j < corr.labels.size(); ++j) os << "," << format_double(corr.r(i, j));
    os << "\n";
  }
  const auto corr_path = run.dir / "correlation.csv";
  write_text(corr_path, os.str());

  run.manifest.seeds["doe"] = seed;
  run.record("dataset", csv);
  run.record("dataset_sidecar", dataset_sidecar_path(csv));
  run.record("correlation", corr_path);
  run.save_manifest();
  if (run.log) {
    *run.log << "generate: " << data.rows() << " rows of " << p.name << " -> " << csv.string() << "\n";
    if (!corr.constant_columns.empty()) {
      *run.log << "generate: constant columns (correlation set to 0):";
      for (const auto& c : corr.constant_columns) *run.log << " " << c;
      *run.log << "\n";
    }
  }
  return data;
}

// ---------------------------------------------------------------- train

TrainOutcome stage_train(Run& run, const std::string& target, const TrainOptions& options) {
  const Dataset data = load_dataset(run.path("dataset"));
  data.column_index(target);  // names the available columns when absent

  surrogate::TrainConfig cfg = run.settings.train_for(target);
  cfg.seed = stage_seed(run.settings.seed, "train." + target);
  run.manifest.seeds["train." + target] = cfg.seed;

  std::vector<std::size_t> widths;
  if (options.tune) {
    const auto hb_seed = run.settings.hb_seed.value_or(stage_seed(run.settings.seed, "hyperband." + target));
    run.manifest.seeds["hyperband." + target] = hb_seed;
    const auto regression = surrogate::prepare_regression(data, target, cfg);
    const auto plan = tuner::make_plan(run.settings.hb_max_resource, run.settings.hb_eta);
    const auto result = tuner::run_search(tuner::SearchSpace::defaults(), regression, plan, hb_seed, cfg);
    widths = result.best.widths;
    cfg.learning_rate = result.best.learning_rate;
    cfg.batch_size = result.best.batch_size;
    const auto lb_path = run.dir / ("leaderboard_" + target + ".json");
    json lb;
    lb["target"] = target;
    lb["R"] = plan.max_resource;
    lb["eta"] = plan.eta;
    lb["seed"] = hb_seed;
    lb["best"] = {{"widths", widths}, {"lr", cfg.learning_rate}, {"batch", cfg.batch_size}};
    lb["entries"] = tuner::leaderboard_to_json(result.leaderboard);
    write_json(lb_path, lb);
    run.record("leaderboard." + target, lb_path);
    if (run.log) *run.log << "train: hyperband picked " << result.best.key() << " for " << target << "\n";
  } else {
    widths = options.widths ? *options.widths : table_architecture(run.problem.name, target);
    if (widths.empty() || widths.front() != data.n_inputs) {
      throw ConfigError("train: widths must start with the input count " + std::to_string(data.n_inputs));
    }
  }

  auto fit = surrogate::fit(data, target, widths, cfg);
  const auto model_path = run.dir / ("model_" + target + ".json");
  surrogate::save_model(fit.model, model_path, target);

  const auto train_m = surrogate::evaluate(fit.model, fit.data, fit.data.splits.train);
  const auto val_m = surrogate::evaluate(fit.model, fit.data, fit.data.splits.validation);
  json metrics;
  metrics["target"] = target;
  metrics["widths"] = widths;
  metrics["param_count"] = surrogate::param_count(widths).total;
  metrics["learning_rate"] = cfg.learning_rate;
  metrics["batch_size"] = cfg.batch_size;
  metrics["epochs_trained"] = fit.history.train.size();
  metrics["best_epoch"] = fit.history.best_epoch;
  metrics["normalized"] = true;
  metrics["train"] = {{"mse", train_m.mse}, {"mae", train_m.mae}, {"n", fit.data.splits.train.size()}};
  metrics["validation"] = {{"mse", val_m.mse}, {"mae", val_m.mae}, {"n", fit.data.splits.validation.size()}};
  metrics["test"] = {{"mse", fit.test.mse}, {"mae", fit.test.mae}, {"n", fit.data.splits.test.size()}};
  const auto metrics_path = run.dir / ("metrics_" + target + ".json");
  write_json(metrics_path, metrics);

  std::ostringstream parity;
  parity << "split,actual,predicted\n";
  auto emit = [&](const char* split, const surrogate::RegressionMetrics& m) {
    for (const auto& [pred, actual] : m.parity) parity << split << "," << format_double(actual) << "," << format_double(pred) << "\n";
  };
  emit("train", train_m);
  emit("validation", val_m);
  emit("test", fit.test);
  const auto parity_path = run.dir / ("parity_" + target + ".csv");
  write_text(parity_path, parity.str());

  std::ostringstream loss;
  loss << "epoch,train,validation\n";
  for (std::size_t e = 0; e < fit.history.train.size(); ++e) {
    loss << e + 1 << "," << format_double(fit.history.train[e]) << "," << format_double(fit.history.validation[e]) << "\n";
  }
  const auto loss_path = run.dir / ("loss_" + target + ".csv");
  write_text(loss_path, loss.str());

  run.record("model." + target, model_path);
  run.record("metrics." + target, metrics_path);
  run.record("parity." + target, parity_path);
  run.record("loss." + target, loss_path);
  run.save_manifest();
  if (run.log) {
    *run.log << "train: " << target << " widths";
    for (auto w : widths) *run.log << " " << w;
    *run.log << "  epochs " << fit.history.train.size() << "  test mae " << fit.test.mae << " mse " << fit.test.mse << "\n";
  }
  return TrainOutcome{target, widths, fit.test, fit.history.train.size()};
}

// ---------------------------------------------------------------- optimize

std::vector<surrogate::MlpModel> load_models(const Run& run) {
  std::vector<surrogate::MlpModel> models;
  for (const auto& name : run.problem.output_names()) {
    const auto it = run.manifest.outputs.find("model." + name);
    if (it == run.manifest.outputs.end()) {
      throw ConfigError("optimize: no model for output '" + name + "' of " + run.problem.name + "; train it first");
    }
    auto model = surrogate::load_model(run.dir / it->second);
    if (model.input_width() != run.problem.dim) {
      throw ConfigError("optimize: model for '" + name + "' takes " + std::to_string(model.input_width()) +
                        " inputs but " + run.problem.name + " has " + std::to_string(run.problem.dim));
    }
    models.push_back(std::move(model));
  }
  return models;
}

mopso::BatchEvaluator surrogate_evaluator(const std::vector<surrogate::MlpModel>& models, const Problem& problem) {
  if (models.size() != problem.n_outputs()) {
    throw ConfigError("optimize: " + std::to_string(models.size()) + " models for " + std::to_string(problem.n_outputs()) +
                      " outputs of " + problem.name);
  }
  for (const auto& m : models) {
    if (m.input_width() != problem.dim) throw ConfigError("optimize: model input width does not match " + problem.name);
  }
  return [models, m = problem.n_objectives](const Matrix& x) {
    std::vector<Evaluation> out(x.rows());
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto pred = models[k].predict(x);
      for (std::size_t i = 0; i < x.rows(); ++i) (k < m ? out[i].f : out[i].g).push_back(pred[i]);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) out[i].x.assign(x.row(i).begin(), x.row(i).end());
    return out;
  };
}

namespace {

std::vector<std::string> history_header(const Problem& p, bool with_index) {
  std::vector<std::string> h;
  if (with_index) h = {"iter", "particle"};
  for (const auto& n : p.input_names()) h.push_back(n);
  for (const auto& n : p.output_names()) h.push_back(n);
  return h;
}

void append_eval(std::vector<double>& row, const Evaluation& e) {
  row.insert(row.end(), e.x.begin(), e.x.end());
  row.insert(row.end(), e.f.begin(), e.f.end());
  row.insert(row.end(), e.g.begin(), e.g.end());
}

Evaluation eval_from_row(std::span<const double> row, const Problem& p) {
  Evaluation e;
  e.x.assign(row.begin(), row.begin() + p.dim);
  e.f.assign(row.begin() + p.dim, row.begin() + p.dim + p.n_objectives);
  e.g.assign(row.begin() + p.dim + p.n_objectives, row.begin() + p.dim + p.n_outputs());
  return e;
}

void check_header(const CsvTable& t, const std::vector<std::string>& expected, const fs::path& path) {
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ConfigError(path.string() + ": expected columns " + want);
  }
}

}  // namespace

void write_history(const fs::path& path, const mopso::PopulationHistory& history, const Problem& problem) {
  Matrix m(0, 2 + problem.dim + problem.n_outputs());
  for (const auto& r : history.records) {
    std::vector<double> row{static_cast<double>(r.iteration), static_cast<double>(r.particle)};
    append_eval(row, r.eval);
    m.append_row(row);
  }
  write_csv(path, history_header(problem, true), m);
}

mopso::PopulationHistory read_history(const fs::path& path, const Problem& problem) {
  const auto t = read_csv(path);
  check_header(t, history_header(problem, true), path);
  mopso::PopulationHistory h{problem.dim, problem.n_objectives, problem.n_constraints, {}};
  h.records.reserve(t.values.rows());
  for (std::size_t i = 0; i < t.values.rows(); ++i) {
    const auto row = t.values.row(i);
    h.records.push_back({static_cast<std::size_t>(row[0]), static_cast<std::size_t>(row[1]), eval_from_row(row.subspan(2), problem)});
  }
  return h;
}

void write_archive(const fs::path& path, const std::vector<Evaluation>& members, const Problem& problem) {
  Matrix m(0, problem.dim + problem.n_outputs());
  for (const auto& e : members) {
    std::vector<double> row;
    append_eval(row, e);
    m.append_row(row);
  }
  write_csv(path, history_header(problem, false), m);
}

std::vector<Evaluation> read_archive(const fs::path& path, const Problem& problem) {
  const auto t = read_csv(path);
  check_header(t, history_header(problem, false), path);
  std::vector<Evaluation> out;
  for (std::size_t i = 0; i < t.values.rows(); ++i) out.push_back(eval_from_row(t.values.row(i), problem));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (i != j && mopso::feasibility_dominates(out[i], out[j]) == mopso::Dominance::a_dominates) {
        throw StateError(path.string() + ": archive row " + std::to_string(j + 1) + " is dominated by row " +
                         std::to_string(i + 1));
      }
    }
  }
  return out;
}

mopso::RunResult stage_optimize(Run& run) {
  const auto models = load_models(run);
  auto pso = run.settings.pso;
  pso.seed = stage_seed(run.settings.seed, "pso");
  auto result = mopso::run(surrogate_evaluator(models, run.problem), run.problem.bounds, run.problem.n_objectives,
                           run.problem.n_constraints, pso);
  const auto history_path = run.dir / "history.csv";
  const auto archive_path = run.dir / "archive.csv";
  write_history(history_path, result.history, run.problem);
  write_archive(archive_path, result.archive.members(), run.problem);
  run.manifest.seeds["pso"] = pso.seed;
  run.record("history", history_path);
  run.record("archive", archive_path);
  run.save_manifest();
  if (run.log) {
    *run.log << "optimize: " << result.history.size() << " surrogate evaluations, archive " << result.archive.size()
             << " -> " << archive_path.string() << "\n";
  }
  return result;
}

// ---------------------------------------------------------------- certify

std::string format_report(const robustness::RobustnessReport& report, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "problem " << report.problem << "  source " << report.rigorous_source << "\n";
  os << "Np " << report.np << " of " << report.population_size << " eligible (" << report.history_size
     << " evaluated)  z " << report.spec.zscore << "  sigma " << report.spec.sigma << "  E " << report.spec.margin
     << "  confidence " << report.confidence << "\n";
  os << "test |Rb| <= " << report.epsilon << (report.normalized ? " on normalized outputs" : " in raw units") << "\n";
  os << std::left << std::setw(10) << "objective" << std::right << std::setw(14) << "Rb" << std::setw(14) << "MAE"
     << std::setw(8) << "pass" << "\n";
  for (std::size_t j = 0; j < report.objectives.size(); ++j) {
    const auto& o = report.objectives[j];
    os << std::left << std::setw(10) << (j < names.size() ? names[j] : "f" + std::to_string(j + 1)) << std::right
       << std::setw(14) << std::setprecision(6) << o.rb << std::setw(14) << o.mae << std::setw(8)
       << (o.pass ? "yes" : "no") << "\n";
  }
  os << "verdict " << (report.verdict ? "pass" : "fail") << "\n";
  return os.str();
}

robustness::RobustnessReport stage_certify(Run& run, bool self_certify) {
  const auto& p = run.problem;
  const auto history = read_history(run.path("history"), p);
  auto cfg = run.settings.certify;

  std::vector<surrogate::MlpModel> models;
  if (cfg.normalize || self_certify) models = load_models(run);
  if (cfg.normalize) {
    cfg.objective_scales.clear();
    for (std::size_t j = 0; j < p.n_objectives; ++j) cfg.objective_scales.push_back(models[j].normalization().output);
  }

  Oracle oracle = p.evaluate;
  std::string source = p.name + " analytic oracle";
  if (self_certify) {
    auto batch = surrogate_evaluator(models, p);
    oracle = [batch](std::span<const double> x) {
      Matrix m(1, x.size());
      std::copy(x.begin(), x.end(), m.row(0).begin());
      return batch(m).front();
    };
    source = "surrogate (self-certification)";
  }
  const auto seed = stage_seed(run.settings.seed, "certify");
  auto report = robustness::certify(history, oracle, p.name, source, cfg, seed, run.settings.threads);
  const auto report_path = run.dir / "report.json";
  write_json(report_path, report.to_json());
  run.manifest.seeds["certify"] = seed;
  run.record("report", report_path);
  run.save_manifest();
  if (run.log) {
    auto names = p.output_names();
    names.resize(p.n_objectives);
    *run.log << format_report(report, names);
  }
  return report;
}

// ---------------------------------------------------------------- compare

robustness::FrontAgreement stage_compare(Run& run) {
  const auto& p = run.problem;
  const auto surrogate_front = read_archive(run.path("archive"), p);
  auto pso = run.settings.pso;
  // Same swarm seed as the surrogate run so the comparison isolates the model error.
  pso.seed = stage_seed(run.settings.seed, "pso");
  const auto rigorous = mopso::run(mopso::batch_from_oracle(p.evaluate, run.settings.threads), p.bounds, p.n_objectives,
                                   p.n_constraints, pso);
  const auto rig_path = run.dir / "rigorous_archive.csv";
  write_archive(rig_path, rigorous.archive.members(), p);

  std::vector<std::vector<double>> a;
  for (const auto& e : surrogate_front)
    if (e.feasible()) a.push_back(e.f);
  std::vector<std::vector<double>> b;
  for (const auto& e : rigorous.archive.members())
    if (e.feasible()) b.push_back(e.f);
  if (a.empty() || b.empty()) throw StateError("compare: a front has no feasible member");
  const auto ref = robustness::default_reference(a, b);
  // GD in the objective scales of the trained surrogates (the same normalization Rb uses).
  std::vector<surrogate::MinMax> scales;
  for (const auto& name : p.output_names()) {
    if (scales.size() == p.n_objectives) break;
    const auto it = run.manifest.outputs.find("model." + name);
    if (it == run.manifest.outputs.end()) break;
    scales.push_back(surrogate::load_model(run.dir / it->second).normalization().output);
  }
  if (scales.size() != p.n_objectives) scales.clear();
  const auto agreement = robustness::front_agreement(a, b, ref, scales);

  json j = agreement.to_json();
  j["problem"] = p.name;
  j["front_a"] = "archive";
  j["front_b"] = "rigorous_archive";
  j["size_a"] = a.size();
  j["size_b"] = b.size();
  const auto fa_path = run.dir / "front_agreement.json";
  write_json(fa_path, j);
  run.manifest.seeds["rigorous_pso"] = pso.seed;
  run.record("rigorous_archive", rig_path);
  run.record("front_agreement", fa_path);
  run.save_manifest();
  if (run.log) {
    *run.log << "compare: GD " << agreement.generational_distance << "  HV surrogate " << agreement.hypervolume_a
             << "  HV rigorous " << agreement.hypervolume_b << "  ratio " << agreement.hypervolume_ratio() << "\n";
  }
  return agreement;
}

// ---------------------------------------------------------------- repro

ReproResult repro(Run& run) {
  ReproResult out;
  auto stage = [&out](const std::string& name, auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto result = body();
      out.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return result;
    } catch (const StageFailed&) {
      throw;
    } catch (const std::exception& e) {
      throw StageFailed(name, e.what());
    }
  };
  stage("generate", [&] { return stage_generate(run); });
  for (const auto& target : run.problem.output_names()) {
    out.models.push_back(stage("train." + target, [&] { return stage_train(run, target); }));
  }
  stage("optimize", [&] { return stage_optimize(run); });
  out.report = stage("certify", [&] { return stage_certify(run); });
  out.agreement = stage("compare", [&] { return stage_compare(run); });
  return out;
}

}  // namespace certopt::pipeline
