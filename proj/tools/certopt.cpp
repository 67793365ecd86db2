// certopt: surrogate-assisted multiobjective optimization with robustness certification.
//
//   certopt generate --problem zdt3 --out runs/zdt3
//   certopt train    --out runs/zdt3 --all
//   certopt optimize --out runs/zdt3
//   certopt certify  --out runs/zdt3
//   certopt repro zdt3 --out runs/zdt3
//   certopt report   --out runs/zdt3
//
// Exit codes: 0 success / certified, 1 error, 2 certification failed.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "certopt/config.hpp"
#include "certopt/errors.hpp"
#include "certopt/kernels.hpp"
#include "certopt/pipeline.hpp"
#include "certopt/rng.hpp"

using namespace certopt;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string out = "run";
  std::string config_file;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> dtlz2_form;
  std::optional<std::size_t> hb_r;
  std::optional<std::size_t> hb_eta;
  std::optional<std::uint64_t> hb_seed;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-o,--out", c.out, "Run directory")->capture_default_str();
  app->add_option("-c,--config", c.config_file, "Configuration file (flat dotted key=value lines)");
  app->add_option("--set", c.set, "Override one configuration key (key=value); repeatable");
  app->add_option("--seed", c.seed, "Base seed (default: $CERTOPT_SEED, else 7)");
  app->add_option("--threads", c.threads, "Worker threads for oracle evaluations");
  app->add_option("--dtlz2-form", c.dtlz2_form, "DTLZ2 variant")->check(CLI::IsMember({"paper", "standard"}));
  app->add_option("--hb-R", c.hb_r, "Hyperband maximum epochs per configuration");
  app->add_option("--hb-eta", c.hb_eta, "Hyperband reduction factor");
  app->add_option("--hb-seed", c.hb_seed, "Hyperband sampling seed");
  app->add_flag("-q,--quiet", c.quiet, "Only print errors");
}

// Resolution order: manifest snapshot < config file < --set < dedicated flags.
pipeline::Run open_run(const Common& c, std::optional<std::string> problem, Config extra = {}) {
  const fs::path dir = c.out;
  Config cfg;
  std::string problem_name = problem.value_or("");
  if (fs::exists(dir / pipeline::kManifestFile)) {
    const auto manifest = pipeline::RunManifest::load(dir);
    if (problem_name.empty()) problem_name = manifest.problem;
    if (problem_name == manifest.problem) {
      for (const auto& [k, v] : manifest.config.items()) cfg.set(k, v.get<std::string>());
    }
  }
  if (problem_name.empty()) {
    throw ArgumentError("no problem given and " + (dir / pipeline::kManifestFile).string() + " does not exist");
  }
  Config overrides;
  if (!c.config_file.empty()) overrides.merge(Config::load(c.config_file));
  for (const auto& kv : c.set) overrides.merge(Config::parse(kv, "--set"));
  if (c.seed) overrides.set("seed", std::to_string(*c.seed));
  if (c.threads) overrides.set("threads", std::to_string(*c.threads));
  if (c.dtlz2_form) overrides.set("problem.dtlz2_form", *c.dtlz2_form);
  if (c.hb_r) overrides.set("hb.R", std::to_string(*c.hb_r));
  if (c.hb_eta) overrides.set("hb.eta", std::to_string(*c.hb_eta));
  if (c.hb_seed) overrides.set("hb.seed", std::to_string(*c.hb_seed));
  overrides.merge(extra);
  // A new confidence level re-derives the z-score unless one is given explicitly.
  if (overrides.has("certify.confidence") && !overrides.has("certify.zscore")) cfg.erase("certify.zscore");
  cfg.merge(overrides);

  auto settings = pipeline::Settings::from_config(cfg, default_seed());
  auto run = pipeline::Run::open(dir, problem_name, settings);
  if (!c.quiet) run.log = &std::cout;
  return run;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ArgumentError("--widths: '" + item + "' is not a positive integer");
    }
  }
  return out;
}

int cmd_report(const Common& c) {
  const fs::path dir = c.out;
  const auto manifest = pipeline::RunManifest::load(dir);
  std::cout << "run " << manifest.run_id << "  problem " << manifest.problem << "  certopt " << manifest.tool_version
            << "\n";
  std::cout << "seeds:";
  for (const auto& [k, v] : manifest.seeds) std::cout << " " << k << "=" << v;
  std::cout << "\n\nsurrogates (normalized units)\n";
  std::cout << "  target  params       test MSE      test MAE  epochs\n";
  for (const auto& [role, rel] : manifest.outputs) {
    if (role.rfind("metrics.", 0) != 0) continue;
    std::ifstream in(dir / rel);
    const auto m = nlohmann::json::parse(in);
    std::printf("  %-6s %7zu  %13.6e  %12.6f  %6zu\n", m.at("target").get<std::string>().c_str(),
                m.at("param_count").get<std::size_t>(), m.at("test").at("mse").get<double>(),
                m.at("test").at("mae").get<double>(), m.at("epochs_trained").get<std::size_t>());
  }
  int code = 0;
  if (const auto it = manifest.outputs.find("report"); it != manifest.outputs.end()) {
    std::ifstream in(dir / it->second);
    const auto report = robustness::RobustnessReport::from_json(nlohmann::json::parse(in));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < report.objectives.size(); ++j) names.push_back("f" + std::to_string(j + 1));
    std::cout << "\nrobustness\n" << pipeline::format_report(report, names);
    code = report.verdict ? 0 : 2;
  }
  if (const auto it = manifest.outputs.find("front_agreement"); it != manifest.outputs.end()) {
    std::ifstream in(dir / it->second);
    const auto fa = nlohmann::json::parse(in);
    std::cout << "\nfront agreement (surrogate vs rigorous)\n  GD " << fa.at("generational_distance").get<double>()
              << "  HV ratio " << fa.at("hypervolume_ratio").get<double>() << "\n";
  }
  const auto missing = manifest.missing_outputs(dir);
  for (const auto& m : missing) std::cout << "warning: missing output " << m << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certopt: surrogate-based multiobjective optimization with robustness certification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CERTOPT_VERSION);
  auto* kernels_flag = app.add_flag("--print-kernels", "Print the selected numeric kernel variant");

  Common common;

  std::string problem;
  std::size_t n = 1000;
  auto* gen = app.add_subcommand("generate", "Sample a problem on a Latin hypercube and evaluate it");
  gen->add_option("-p,--problem", problem, "binh_korn | zdt3 | dtlz2")->required();
  gen->add_option("-n,--points", n, "Number of samples (>= 10)")->capture_default_str();
  add_common(gen, common);

  std::vector<std::string> targets;
  std::string widths;
  bool tune = false;
  bool all_targets = false;
  auto* train = app.add_subcommand("train", "Fit one surrogate per output column");
  train->add_option("-t,--target", targets, "Output column(s) to model");
  train->add_flag("--all", all_targets, "Model every output column");
  train->add_option("--widths", widths, "Layer widths, e.g. 2,60,60,60,1 (default: paper table)");
  train->add_flag("--tune", tune, "Pick the architecture with Hyperband first");
  add_common(train, common);

  bool compare = false;
  auto* opt = app.add_subcommand("optimize", "Run MOPSO on the trained surrogates");
  opt->add_flag("--compare", compare, "Also optimize with the rigorous oracle and compare the fronts");
  add_common(opt, common);

  std::optional<double> epsilon;
  std::optional<double> confidence;
  std::optional<std::string> population;
  bool self_certify = false;
  bool raw = false;
  auto* cert = app.add_subcommand("certify", "Certify the optimization against the rigorous oracle");
  cert->add_option("--epsilon", epsilon, "Per-objective tolerance on |Rb|");
  cert->add_option("--confidence", confidence, "Confidence level for the sample size");
  cert->add_option("--population", population, "history | feasible")->check(CLI::IsMember({"history", "feasible"}));
  cert->add_flag("--self", self_certify, "Use the surrogate itself as the rigorous source");
  cert->add_flag("--raw", raw, "Compare in raw objective units instead of normalized");
  add_common(cert, common);

  std::string bench;
  auto* rep = app.add_subcommand("repro", "Run the whole pipeline on a benchmark");
  rep->add_option("benchmark", bench, "binh_korn | zdt3 | dtlz2")->required();
  add_common(rep, common);

  auto* report = app.add_subcommand("report", "Summarize a run directory");
  add_common(report, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; usage errors map onto the generic error code.
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (*kernels_flag) std::cerr << "kernels: " << kernels::isa_name(kernels::active().isa) << "\n";

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (*gen) {
      Config extra;
      extra.set("doe.points", std::to_string(n));
      auto run = open_run(common, problem, extra);
      pipeline::stage_generate(run);
      return 0;
    }
    if (*train) {
      auto run = open_run(common, std::nullopt);
      if (all_targets) targets = run.problem.output_names();
      if (targets.empty()) throw ArgumentError("train: give --target or --all");
      pipeline::TrainOptions options;
      options.tune = tune;
      if (!widths.empty()) options.widths = parse_widths(widths);
      for (const auto& t : targets) pipeline::stage_train(run, t, options);
      return 0;
    }
    if (*opt) {
      auto run = open_run(common, std::nullopt);
      pipeline::stage_optimize(run);
      if (compare) pipeline::stage_compare(run);
      return 0;
    }
    if (*cert) {
      Config extra;
      if (epsilon) extra.set("certify.epsilon", format_double(*epsilon));
      if (confidence) extra.set("certify.confidence", format_double(*confidence));
      if (population) extra.set("certify.population", *population);
      if (raw) extra.set("certify.normalize", "false");
      auto run = open_run(common, std::nullopt, extra);
      const auto r = pipeline::stage_certify(run, self_certify);
      return r.verdict ? 0 : 2;
    }
    if (*rep) {
      auto run = open_run(common, bench);
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = pipeline::repro(run);
      if (run.log) {
        *run.log << "repro: " << bench << " finished in "
                 << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s; manifest "
                 << (run.dir / pipeline::kManifestFile).string() << "\n";
      }
      return r.report.verdict ? 0 : 2;
    }
    if (*report) return cmd_report(common);
  } catch (const pipeline::StageFailed& e) {
    std::cerr << "certopt: " << e.what() << "\n";
    return 1;
  } catch (const TrainingDiverged& e) {
    std::cerr << "certopt " << stage << ": " << e.what() << " (epoch " << e.epoch() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "certopt " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 1;
}
