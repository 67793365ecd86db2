#pragma once

// Robustness certification of a surrogate-based optimization run.
//
// The certifier re-evaluates a statistically sized subsample of the optimizer's
// population with a rigorous source and sums the signed deviations
//
//   Rb_j = sum_i (f_j(x_i) - h_j(x_i)),   i = 1..Np
//
// per objective j. The run is certified when |Rb_j| <= epsilon for every objective.
// The zero-sum condition is the stationarity condition of a Gaussian likelihood of
// the deviations, so Rb measures how far the sampled population is from it.
// Np follows the proportion sample-size formula Np = z^2 sigma (1 - sigma) / E^2,
// optionally corrected for a finite population of size N.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "certopt/doe.hpp"
#include "certopt/mopso.hpp"
#include "certopt/problems.hpp"
#include "certopt/surrogate.hpp"

namespace certopt::robustness {

struct SampleSizeSpec {
  double zscore = 2.576;
  double sigma = 0.5;
  // Maximum allowed difference between population and sample averages (E).
  double margin = 0.066;
  std::optional<std::size_t> finite_population;

  void validate() const;
};

// Two-sided critical value: P(|Z| <= z) = confidence for a standard normal Z.
double zscore_for_confidence(double confidence);

// ceil(z^2 sigma (1 - sigma) / E^2), then n / (1 + (n - 1) / N) when N is given; at least 1.
std::size_t sample_size(const SampleSizeSpec& spec);

struct RbResult {
  double rb = 0.0;   // signed sum of (rigorous - surrogate)
  double mae = 0.0;  // mean |rigorous - surrogate|
  std::size_t np = 0;
};

// Deviations are summed in index order. Throws ArgumentError on empty or mismatched input.
RbResult compute_rb(std::span<const double> rigorous, std::span<const double> surrogate);

enum class PopulationMode { history, feasible };
std::string to_string(PopulationMode mode);
PopulationMode parse_population_mode(const std::string& text);

struct RobustnessConfig {
  double epsilon = 0.05;
  double confidence = 0.99;
  SampleSizeSpec spec;
  // Deviations on min-max normalized outputs (objective_scales) instead of raw units.
  bool normalize = true;
  std::vector<surrogate::MinMax> objective_scales;
  PopulationMode population = PopulationMode::history;
  doe::SubsampleMethod method = doe::SubsampleMethod::lhs_nearest;

  void validate() const;
};

struct ObjectiveResult {
  double rb = 0.0;
  double mae = 0.0;
  std::size_t np = 0;
  bool pass = false;
};

struct RobustnessReport {
  std::string problem;
  std::string rigorous_source;
  double epsilon = 0.0;
  double confidence = 0.0;
  SampleSizeSpec spec;
  std::size_t np = 0;
  std::size_t population_size = 0;
  std::size_t history_size = 0;
  std::vector<ObjectiveResult> objectives;
  // Indices into the population history.
  std::vector<std::size_t> sample_indices;
  std::uint64_t seed = 0;
  bool normalized = true;
  PopulationMode population = PopulationMode::history;
  doe::SubsampleMethod method = doe::SubsampleMethod::lhs_nearest;
  bool verdict = false;

  nlohmann::json to_json() const;
  static RobustnessReport from_json(const nlohmann::json& j);
};

// Samples Np members of `history`, evaluates `rigorous` at each and compares with the
// surrogate objectives stored in the history. Throws InsufficientPopulation when
// Np exceeds the eligible population.
RobustnessReport certify(const mopso::PopulationHistory& history, const Oracle& rigorous, const std::string& problem,
                         const std::string& rigorous_source, const RobustnessConfig& config, std::uint64_t seed,
                         std::size_t threads = 1);

// Hypervolume dominated by `front` up to `reference` (minimization). Members that do
// not strictly improve on the reference in every objective contribute nothing.
// Throws ArgumentError on arity mismatch or if the reference dominates a member.
double hypervolume(const std::vector<std::vector<double>>& front, std::span<const double> reference);

// Per-objective (lo, hi) over the union of the fronts; zero ranges become width 1.
std::vector<surrogate::MinMax> joint_ranges(const std::vector<std::vector<double>>& a,
                                            const std::vector<std::vector<double>>& b);

// Mean over a of the Euclidean distance to the nearest member of b, after scaling by `ranges`.
double generational_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                             std::span<const surrogate::MinMax> ranges);

struct FrontAgreement {
  double generational_distance = 0.0;
  double hypervolume_a = 0.0;
  double hypervolume_b = 0.0;
  std::vector<double> reference;
  // Per-objective scales used to normalize GD.
  std::vector<surrogate::MinMax> ranges;
  bool joint_ranges = true;

  double hypervolume_ratio() const { return hypervolume_b > 0.0 ? hypervolume_a / hypervolume_b : 0.0; }
  nlohmann::json to_json() const;
};

// GD is normalized by `ranges`, or by joint_ranges(a, b) when `ranges` is empty. Joint
// ranges degenerate when one front collapses to a point; pass the objective scales then.
FrontAgreement front_agreement(const std::vector<std::vector<double>>& front_a,
                               const std::vector<std::vector<double>>& front_b, std::span<const double> reference,
                               std::span<const surrogate::MinMax> ranges = {});

// Nadir of the union of the fronts pushed out by `margin` times each objective's range.
std::vector<double> default_reference(const std::vector<std::vector<double>>& a,
                                      const std::vector<std::vector<double>>& b, double margin = 0.1);

}  // namespace certopt::robustness
