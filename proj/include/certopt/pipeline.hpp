#pragma once

// Pipeline stages behind the command-line tool: generate, train, optimize, certify,
// the rigorous-oracle comparison, and their composition into a reproduction run.
// Every stage writes its artifacts into a run directory and records them, with
// their seeds, in `<dir>/manifest.json`.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "certopt/config.hpp"
#include "certopt/dataset.hpp"
#include "certopt/errors.hpp"
#include "certopt/mopso.hpp"
#include "certopt/problems.hpp"
#include "certopt/robustness.hpp"
#include "certopt/surrogate.hpp"

namespace certopt::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kManifestSchema = "certopt.manifest/1";
inline constexpr const char* kManifestFile = "manifest.json";

struct RunManifest {
  std::string run_id;
  std::string problem;
  std::string tool_version;
  std::map<std::string, std::uint64_t> seeds;      // per stochastic stage, e.g. "doe", "train.f1", "pso"
  nlohmann::json config = nlohmann::json::object();  // resolved flat settings
  std::map<std::string, std::string> outputs;      // role -> path relative to the run directory

  nlohmann::json to_json() const;
  // Validates first; throws ConfigError describing the offending field.
  static RunManifest from_json(const nlohmann::json& j);

  // Throws StateError if an output is missing on disk.
  void save(const fs::path& dir) const;
  static RunManifest load(const fs::path& dir);
  std::vector<std::string> missing_outputs(const fs::path& dir) const;
};

// Structural validation against the published schema; throws ConfigError.
void validate_manifest(const nlohmann::json& j);
// The JSON Schema document for certopt.manifest/1.
const nlohmann::json& manifest_schema();

struct Settings {
  std::uint64_t seed = 7;
  std::size_t doe_points = 1000;
  Dtlz2Form dtlz2_form = Dtlz2Form::paper;
  surrogate::TrainConfig train;
  // Per-output overrides of `train.*`, from keys `train.<target>.<param>`.
  std::map<std::string, Config> target_train;
  mopso::PsoConfig pso;
  robustness::RobustnessConfig certify;
  std::size_t hb_max_resource = 27;
  std::size_t hb_eta = 3;
  std::optional<std::uint64_t> hb_seed;
  std::size_t threads = 1;

  // Unknown keys are rejected. `certify.confidence` sets the z-score unless
  // `certify.zscore` is also given.
  static Settings from_config(const Config& config, std::uint64_t default_seed);
  // `train` with the target's overrides applied.
  surrogate::TrainConfig train_for(const std::string& target) const;
  static const std::set<std::string>& known_keys();
  Config snapshot() const;
};

// Paper architecture for one output of a registered benchmark.
std::vector<std::size_t> table_architecture(const std::string& problem, const std::string& target);
// Built-in per-output training overrides (param -> value), applied by Run::open
// unless the configuration sets the same `train.<target>.<param>`.
std::map<std::string, std::string> table_training(const std::string& problem, const std::string& target);

struct Run {
  fs::path dir;
  Problem problem;
  Settings settings;
  RunManifest manifest;
  std::ostream* log = nullptr;

  // Creates the directory; resumes an existing manifest for the same problem.
  static Run open(const fs::path& dir, const std::string& problem, const Settings& settings);
  void record(const std::string& role, const fs::path& file);
  void save_manifest() const;
  fs::path path(const std::string& role) const;
};

std::uint64_t stage_seed(std::uint64_t base, const std::string& stage);

// LHS dataset, sidecar and correlation CSV.
Dataset stage_generate(Run& run);

struct TrainOptions {
  std::optional<std::vector<std::size_t>> widths;  // defaults to the table architecture
  bool tune = false;
};

struct TrainOutcome {
  std::string target;
  std::vector<std::size_t> widths;
  surrogate::RegressionMetrics test;
  std::size_t epochs = 0;
};

TrainOutcome stage_train(Run& run, const std::string& target, const TrainOptions& options = {});

// Loads the objective and constraint models recorded in the manifest; throws
// ConfigError if any is missing or does not match the problem's arity.
std::vector<surrogate::MlpModel> load_models(const Run& run);
mopso::BatchEvaluator surrogate_evaluator(const std::vector<surrogate::MlpModel>& models, const Problem& problem);

mopso::RunResult stage_optimize(Run& run);

// `self_certify` uses the surrogate as the rigorous source (identity check).
robustness::RobustnessReport stage_certify(Run& run, bool self_certify = false);

// Optimizes with the rigorous oracle and compares the fronts.
robustness::FrontAgreement stage_compare(Run& run);

// History CSV: iter,particle,x..,f..,g..
void write_history(const fs::path& path, const mopso::PopulationHistory& history, const Problem& problem);
mopso::PopulationHistory read_history(const fs::path& path, const Problem& problem);
void write_archive(const fs::path& path, const std::vector<Evaluation>& members, const Problem& problem);
// Throws StateError if the rows are not mutually nondominated.
std::vector<Evaluation> read_archive(const fs::path& path, const Problem& problem);

// Human-readable table mirroring the paper's robustness tables.
std::string format_report(const robustness::RobustnessReport& report, const std::vector<std::string>& objective_names);

struct ReproResult {
  robustness::RobustnessReport report;
  robustness::FrontAgreement agreement;
  std::vector<TrainOutcome> models;
  // Wall-clock seconds per stage ("generate", "train.<target>", "optimize", ...); not persisted.
  std::map<std::string, double> seconds;
};

// generate -> train (all outputs) -> optimize -> certify -> compare. A failing stage
// is rethrown as StageFailed naming it ("train.<target>" for training).
ReproResult repro(Run& run);

class StageFailed : public Error {
 public:
  StageFailed(const std::string& stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace certopt::pipeline
