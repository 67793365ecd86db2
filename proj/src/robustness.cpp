#include "certopt/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "certopt/errors.hpp"

namespace certopt::robustness {

using nlohmann::json;

void SampleSizeSpec::validate() const {
  if (!(zscore > 0.0)) throw ArgumentError("sample size: zscore must be positive");
  if (!(sigma > 0.0 && sigma < 1.0)) throw ArgumentError("sample size: sigma must lie in (0,1)");
  if (!(margin > 0.0)) throw ArgumentError("sample size: E must be positive");
  if (finite_population && *finite_population == 0) throw ArgumentError("sample size: population size must be positive");
}

double zscore_for_confidence(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ArgumentError("confidence must lie in (0,1)");
  // Bisection on P(|Z| > z) = erfc(z / sqrt 2), which is monotone decreasing in z.
  const double tail = 1.0 - confidence;
  double lo = 0.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::erfc(mid / std::sqrt(2.0)) > tail) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

// ceil that ignores representation noise of a few ulps above an integer.
std::size_t ceil_count(double v) {
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v))) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(v));
}

}  // namespace

std::size_t sample_size(const SampleSizeSpec& spec) {
  spec.validate();
  const double raw = spec.zscore * spec.zscore * spec.sigma * (1.0 - spec.sigma) / (spec.margin * spec.margin);
  std::size_t np = std::max<std::size_t>(1, ceil_count(raw));
  if (spec.finite_population) {
    const double n = static_cast<double>(np);
    const double big_n = static_cast<double>(*spec.finite_population);
    np = std::max<std::size_t>(1, ceil_count(n / (1.0 + (n - 1.0) / big_n)));
  }
  return np;
}

RbResult compute_rb(std::span<const double> rigorous, std::span<const double> surrogate) {
  if (rigorous.empty()) throw ArgumentError("compute_rb: no samples");
  if (rigorous.size() != surrogate.size()) throw ArgumentError("compute_rb: rigorous/surrogate length mismatch");
  RbResult r;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < rigorous.size(); ++i) {
    const double d = rigorous[i] - surrogate[i];
    if (!std::isfinite(d)) throw ArgumentError("compute_rb: non-finite deviation at sample " + std::to_string(i));
    r.rb += d;
    abs_sum += std::abs(d);
  }
  r.np = rigorous.size();
  r.mae = abs_sum / static_cast<double>(r.np);
  return r;
}

std::string to_string(PopulationMode mode) { return mode == PopulationMode::feasible ? "feasible" : "history"; }

PopulationMode parse_population_mode(const std::string& text) {
  if (text == "history") return PopulationMode::history;
  if (text == "feasible") return PopulationMode::feasible;
  throw ArgumentError("population mode must be 'history' or 'feasible', got '" + text + "'");
}

void RobustnessConfig::validate() const {
  if (!(epsilon > 0.0)) throw ArgumentError("robustness: epsilon must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ArgumentError("robustness: confidence must lie in (0,1)");
  spec.validate();
}

json RobustnessReport::to_json() const {
  json per = json::array();
  for (const auto& o : objectives) per.push_back({{"rb", o.rb}, {"mae", o.mae}, {"np", o.np}, {"pass", o.pass}});
  json spec_json{{"z", spec.zscore}, {"sigma", spec.sigma}, {"E", spec.margin}, {"N", nullptr}};
  if (spec.finite_population) spec_json["N"] = *spec.finite_population;
  return json{{"schema", "certopt.report/1"},
              {"problem", problem},
              {"rigorous_source", rigorous_source},
              {"epsilon", epsilon},
              {"confidence", confidence},
              {"np", np},
              {"spec", spec_json},
              {"test", "abs(rb) <= epsilon per objective"},
              {"per_objective", per},
              {"population", to_string(population)},
              {"population_size", population_size},
              {"history_size", history_size},
              {"subsample_method", doe::to_string(method)},
              {"sample_indices", sample_indices},
              {"seed", seed},
              {"normalized", normalized},
              {"verdict", verdict ? "pass" : "fail"}};
}

RobustnessReport RobustnessReport::from_json(const json& j) {
  try {
    RobustnessReport r;
    r.problem = j.at("problem").get<std::string>();
    r.rigorous_source = j.value("rigorous_source", "");
    r.epsilon = j.at("epsilon").get<double>();
    r.confidence = j.at("confidence").get<double>();
    r.np = j.at("np").get<std::size_t>();
    const auto& s = j.at("spec");
    r.spec.zscore = s.at("z").get<double>();
    r.spec.sigma = s.at("sigma").get<double>();
    r.spec.margin = s.at("E").get<double>();
    if (!s.at("N").is_null()) r.spec.finite_population = s.at("N").get<std::size_t>();
    for (const auto& o : j.at("per_objective")) {
      r.objectives.push_back({o.at("rb").get<double>(), o.at("mae").get<double>(), o.at("np").get<std::size_t>(),
                              o.at("pass").get<bool>()});
    }
    r.population = parse_population_mode(j.value("population", "history"));
    r.population_size = j.value("population_size", std::size_t{0});
    r.history_size = j.value("history_size", std::size_t{0});
    r.method = doe::parse_subsample_method(j.value("subsample_method", "lhs_nearest"));
    r.sample_indices = j.at("sample_indices").get<std::vector<std::size_t>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.normalized = j.at("normalized").get<bool>();
    r.verdict = j.at("verdict").get<std::string>() == "pass";
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("report: malformed JSON: ") + e.what());
  }
}

RobustnessReport certify(const mopso::PopulationHistory& history, const Oracle& rigorous, const std::string& problem,
                         const std::string& rigorous_source, const RobustnessConfig& config, std::uint64_t seed,
                         std::size_t threads) {
  config.validate();
  if (history.size() == 0) throw ArgumentError("certify: population history is empty");
  const std::size_t m = history.n_objectives;
  if (config.normalize && config.objective_scales.size() != m) {
    throw ArgumentError("certify: normalized mode needs one output scale per objective (" + std::to_string(m) + ")");
  }

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (config.population == PopulationMode::history || history.records[i].eval.feasible()) eligible.push_back(i);
  }

  RobustnessReport report;
  report.problem = problem;
  report.rigorous_source = rigorous_source;
  report.epsilon = config.epsilon;
  report.confidence = config.confidence;
  report.spec = config.spec;
  report.np = sample_size(config.spec);
  report.population_size = eligible.size();
  report.history_size = history.size();
  report.seed = seed;
  report.normalized = config.normalize;
  report.population = config.population;
  report.method = config.method;

  if (report.np > eligible.size()) {
    throw InsufficientPopulation("certify: " + std::to_string(report.np) + " samples are required but the " +
                                 to_string(config.population) + " population has only " +
                                 std::to_string(eligible.size()) +
                                 " members; enlarge the optimization run (swarm_size x iterations)");
  }

  Matrix positions(eligible.size(), history.dim);
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    const auto& x = history.records[eligible[i]].eval.x;
    std::copy(x.begin(), x.end(), positions.row(i).begin());
  }
  const auto picks = doe::lhs_subsample(positions, report.np, seed, config.method);
  for (std::size_t p : picks) report.sample_indices.push_back(eligible[p]);

  Matrix sample_x(report.np, history.dim);
  for (std::size_t s = 0; s < report.np; ++s) {
    const auto& x = history.records[report.sample_indices[s]].eval.x;
    std::copy(x.begin(), x.end(), sample_x.row(s).begin());
  }
  const auto evaluations = mopso::batch_from_oracle(rigorous, threads)(sample_x);

  bool all_pass = true;
  std::vector<double> f(report.np);
  std::vector<double> h(report.np);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t s = 0; s < report.np; ++s) {
      const auto& rec = history.records[report.sample_indices[s]].eval;
      if (evaluations[s].f.size() != m) throw ArgumentError("certify: rigorous source objective count mismatch");
      f[s] = evaluations[s].f[j];
      h[s] = rec.f[j];
      if (config.normalize) {
        f[s] = config.objective_scales[j].normalize(f[s]);
        h[s] = config.objective_scales[j].normalize(h[s]);
      }
    }
    const RbResult r = compute_rb(f, h);
    const bool pass = std::abs(r.rb) <= config.epsilon;
    all_pass = all_pass && pass;
    report.objectives.push_back({r.rb, r.mae, r.np, pass});
  }
  report.verdict = all_pass;
  return report;
}

// ---------------------------------------------------------------------------
// Front comparison

namespace {

double hv_recursive(std::vector<std::vector<double>> pts, std::span<const double> ref, std::size_t m) {
  if (pts.empty()) return 0.0;
  if (m == 1) {
    double best = ref[0];
    for (const auto& p : pts) best = std::min(best, p[0]);
    return ref[0] - best;
  }
  std::sort(pts.begin(), pts.end(), [m](const auto& a, const auto& b) { return a[m - 1] < b[m - 1]; });
  if (m == 2) {
    double volume = 0.0;
    double best_first = ref[0];
    for (std::size_t i = 0; i < pts.size(); ++i) {
      best_first = std::min(best_first, pts[i][0]);
      const double next = i + 1 < pts.size() ? pts[i + 1][1] : ref[1];
      volume += (ref[0] - best_first) * (next - pts[i][1]);
    }
    return volume;
  }
  double volume = 0.0;
  std::vector<std::vector<double>> prefix;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    prefix.push_back(pts[i]);
    const double next = i + 1 < pts.size() ? pts[i + 1][m - 1] : ref[m - 1];
    const double height = next - pts[i][m - 1];
    if (height > 0.0) volume += height * hv_recursive(prefix, ref, m - 1);
  }
  return volume;
}

}  // namespace

double hypervolume(const std::vector<std::vector<double>>& front, std::span<const double> reference) {
  const std::size_t m = reference.size();
  if (m == 0) throw ArgumentError("hypervolume: empty reference point");
  std::vector<std::vector<double>> pts;
  for (const auto& p : front) {
    if (p.size() != m) throw ArgumentError("hypervolume: front/reference arity mismatch");
    if (mopso::pareto_dominates(reference, p)) throw ArgumentError("hypervolume: reference point dominates a front member");
    bool inside = true;
    for (std::size_t i = 0; i < m; ++i) inside = inside && p[i] < reference[i];
    if (inside) pts.push_back(p);
  }
  return hv_recursive(std::move(pts), reference, m);
}

std::vector<surrogate::MinMax> joint_ranges(const std::vector<std::vector<double>>& a,
                                            const std::vector<std::vector<double>>& b) {
  if (a.empty() && b.empty()) throw ArgumentError("joint_ranges: both fronts are empty");
  const std::size_t m = a.empty() ? b.front().size() : a.front().size();
  std::vector<surrogate::MinMax> r(m, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (const auto* front : {&a, &b}) {
    for (const auto& p : *front) {
      if (p.size() != m) throw ArgumentError("joint_ranges: arity mismatch");
      for (std::size_t i = 0; i < m; ++i) {
        r[i].lo = std::min(r[i].lo, p[i]);
        r[i].hi = std::max(r[i].hi, p[i]);
      }
    }
  }
  for (auto& mm : r)
    if (!(mm.hi > mm.lo)) mm.hi = mm.lo + 1.0;
  return r;
}

double generational_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                             std::span<const surrogate::MinMax> ranges) {
  if (a.empty() || b.empty()) throw ArgumentError("generational_distance: fronts must be nonempty");
  double total = 0.0;
  for (const auto& p : a) {
    if (p.size() != ranges.size()) throw ArgumentError("generational_distance: arity mismatch");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      if (q.size() != ranges.size()) throw ArgumentError("generational_distance: arity mismatch");
      double d2 = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = ranges[i].normalize(p[i]) - ranges[i].normalize(q[i]);
        d2 += d * d;
      }
      best = std::min(best, d2);
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(a.size());
}

json FrontAgreement::to_json() const {
  json scales = json::array();
  for (const auto& r : ranges) scales.push_back({r.lo, r.hi});
  return json{{"generational_distance", generational_distance},
              {"hypervolume_surrogate", hypervolume_a},
              {"hypervolume_rigorous", hypervolume_b},
              {"hypervolume_ratio", hypervolume_ratio()},
              {"reference", reference},
              {"gd_normalization", joint_ranges ? "joint_front_ranges" : "objective_scales"},
              {"gd_ranges", scales}};
}

FrontAgreement front_agreement(const std::vector<std::vector<double>>& front_a,
                               const std::vector<std::vector<double>>& front_b, std::span<const double> reference,
                               std::span<const surrogate::MinMax> ranges) {
  if (front_a.empty() || front_b.empty()) throw ArgumentError("front_agreement: fronts must be nonempty");
  FrontAgreement fa;
  fa.joint_ranges = ranges.empty();
  if (fa.joint_ranges) {
    fa.ranges = joint_ranges(front_a, front_b);
  } else {
    fa.ranges.assign(ranges.begin(), ranges.end());
  }
  fa.generational_distance = generational_distance(front_a, front_b, fa.ranges);
  fa.hypervolume_a = hypervolume(front_a, reference);
  fa.hypervolume_b = hypervolume(front_b, reference);
  fa.reference.assign(reference.begin(), reference.end());
  return fa;
}

std::vector<double> default_reference(const std::vector<std::vector<double>>& a,
                                      const std::vector<std::vector<double>>& b, double margin) {
  const auto ranges = joint_ranges(a, b);
  std::vector<double> ref;
  for (const auto& r : ranges) ref.push_back(r.hi + margin * (r.hi - r.lo));
  return ref;
}

}  // namespace certopt::robustness
