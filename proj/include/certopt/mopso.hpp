#pragma once

// Constrained multiobjective particle swarm with a feasibility-dominance Pareto
// archive. Every evaluation the swarm makes is kept in a PopulationHistory,
// which is what the robustness certifier samples from.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "certopt/matrix.hpp"
#include "certopt/problems.hpp"

namespace certopt::mopso {

enum class Dominance { a_dominates, b_dominates, neither };

// Deb's rules: feasible beats infeasible; two infeasible points compare by total
// violation sum(max(0, g_j)); two feasible points compare by Pareto dominance on f.
// Throws ArgumentError on arity mismatch.
Dominance feasibility_dominates(const Evaluation& a, const Evaluation& b);

// Plain Pareto dominance on objective vectors (minimization).
bool pareto_dominates(std::span<const double> a, std::span<const double> b);

// NSGA-II crowding distance, each objective's contribution normalized by its range.
// Boundary members (per objective) get +inf; an objective with zero range contributes nothing.
std::vector<double> crowding_distance(const std::vector<std::vector<double>>& front);

class ParetoArchive {
 public:
  explicit ParetoArchive(std::size_t capacity = std::numeric_limits<std::size_t>::max()) : capacity_(capacity) {}

  // Adds `candidate` unless a member dominates it or an identical (f, g) is already
  // stored; removes members it dominates; over capacity, evicts the least crowded
  // member. Returns true if the candidate was kept.
  bool insert(const Evaluation& candidate);

  const std::vector<Evaluation>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return members_.empty(); }

  std::vector<std::vector<double>> objectives() const;

 private:
  std::size_t capacity_;
  std::vector<Evaluation> members_;
};

struct HistoryRecord {
  std::size_t iteration = 0;
  std::size_t particle = 0;
  Evaluation eval;
};

// Append-only log of every evaluation made during a run.
struct PopulationHistory {
  std::size_t dim = 0;
  std::size_t n_objectives = 0;
  std::size_t n_constraints = 0;
  std::vector<HistoryRecord> records;

  std::size_t size() const { return records.size(); }
  Matrix positions() const;
};

struct PsoConfig {
  std::size_t swarm_size = 100;
  std::size_t iterations = 100;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  std::uint64_t seed = 0;
  std::size_t archive_capacity = 200;

  void validate() const;
};

// Evaluates every row of `positions` (problem units); one Evaluation per row, in order.
using BatchEvaluator = std::function<std::vector<Evaluation>(const Matrix& positions)>;

struct RunResult {
  ParetoArchive archive;
  PopulationHistory history;
};

// Throws OptimizationAborted if an evaluation returns a non-finite value.
RunResult run(const BatchEvaluator& evaluate, std::span<const Interval> bounds, std::size_t n_objectives,
              std::size_t n_constraints, const PsoConfig& config);

// Wraps a pointwise oracle; rows are evaluated on up to `threads` threads.
BatchEvaluator batch_from_oracle(Oracle oracle, std::size_t threads = 1);

}  // namespace certopt::mopso
