#include "certopt/mopso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "certopt/errors.hpp"
#include "certopt/rng.hpp"

namespace certopt::mopso {

bool pareto_dominates(std::span<const double> a, std::span<const double> b) {
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly = true;
  }
  return strictly;
}

Dominance feasibility_dominates(const Evaluation& a, const Evaluation& b) {
  if (a.f.size() != b.f.size() || a.g.size() != b.g.size()) {
    throw ArgumentError("feasibility_dominates: objective/constraint arity mismatch");
  }
  const bool fa = a.feasible();
  const bool fb = b.feasible();
  if (fa && !fb) return Dominance::a_dominates;
  if (fb && !fa) return Dominance::b_dominates;
  if (!fa) {
    const double va = a.violation();
    const double vb = b.violation();
    if (va < vb) return Dominance::a_dominates;
    if (vb < va) return Dominance::b_dominates;
    return Dominance::neither;
  }
  if (pareto_dominates(a.f, b.f)) return Dominance::a_dominates;
  if (pareto_dominates(b.f, a.f)) return Dominance::b_dominates;
  return Dominance::neither;
}

std::vector<double> crowding_distance(const std::vector<std::vector<double>>& front) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n == 0) return dist;
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    return dist;
  }
  const std::size_t m = front.front().size();
  std::vector<std::size_t> order(n);
  for (std::size_t obj = 0; obj < m; ++obj) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return front[a][obj] < front[b][obj]; });
    const double lo = front[order.front()][obj];
    const double hi = front[order.back()][obj];
    const double range = hi - lo;
    if (!(range > 0.0)) continue;
    dist[order.front()] = std::numeric_limits<double>::infinity();
    dist[order.back()] = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < n; ++i) {
      dist[order[i]] += (front[order[i + 1]][obj] - front[order[i - 1]][obj]) / range;
    }
  }
  return dist;
}

std::vector<std::vector<double>> ParetoArchive::objectives() const {
  std::vector<std::vector<double>> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m.f);
  return out;
}

bool ParetoArchive::insert(const Evaluation& candidate) {
  for (const auto& m : members_) {
    if (m.f == candidate.f && m.g == candidate.g) return false;
    if (feasibility_dominates(m, candidate) == Dominance::a_dominates) return false;
  }
  std::erase_if(members_, [&](const Evaluation& m) {
    return feasibility_dominates(candidate, m) == Dominance::a_dominates;
  });
  members_.push_back(candidate);
  if (members_.size() > capacity_) {
    const auto dist = crowding_distance(objectives());
    // First minimum wins, so eviction is deterministic.
    const auto victim = std::min_element(dist.begin(), dist.end()) - dist.begin();
    const bool kept = static_cast<std::size_t>(victim) != members_.size() - 1;
    members_.erase(members_.begin() + victim);
    return kept;
  }
  return true;
}

Matrix PopulationHistory::positions() const {
  Matrix m(records.size(), dim);
  for (std::size_t i = 0; i < records.size(); ++i)
    std::copy(records[i].eval.x.begin(), records[i].eval.x.end(), m.row(i).begin());
  return m;
}

void PsoConfig::validate() const {
  if (swarm_size < 2) throw ArgumentError("pso: swarm_size must be at least 2");
  if (iterations < 1) throw ArgumentError("pso: iterations must be at least 1");
  if (!(inertia >= 0.0 && inertia <= 1.0)) throw ArgumentError("pso: inertia must lie in [0,1]");
  if (!(cognitive > 0.0 && social > 0.0)) throw ArgumentError("pso: cognitive and social coefficients must be positive");
  if (archive_capacity < 1) throw ArgumentError("pso: archive capacity must be at least 1");
}

namespace {

struct Particle {
  std::vector<double> x;
  std::vector<double> v;
  Evaluation pbest;
};

bool all_finite(const Evaluation& e) {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(e.f.begin(), e.f.end(), finite) && std::all_of(e.g.begin(), e.g.end(), finite);
}

// Binary tournament on crowding distance; ties go to the first draw.
const Evaluation& pick_leader(const ParetoArchive& archive, const std::vector<double>& crowding, Rng& rng) {
  const auto& members = archive.members();
  const std::size_t a = rng.below(members.size());
  const std::size_t b = rng.below(members.size());
  return crowding[b] > crowding[a] ? members[b] : members[a];
}

}  // namespace

RunResult run(const BatchEvaluator& evaluate, std::span<const Interval> bounds, std::size_t n_objectives,
              std::size_t n_constraints, const PsoConfig& config) {
  config.validate();
  const std::size_t dim = bounds.size();
  if (dim == 0) throw ArgumentError("pso: no decision variables");

  Rng rng(config.seed);
  RunResult result{ParetoArchive(config.archive_capacity), PopulationHistory{dim, n_objectives, n_constraints, {}}};
  result.history.records.reserve(config.swarm_size * config.iterations);

  std::vector<Particle> swarm(config.swarm_size);
  for (auto& p : swarm) {
    p.x.resize(dim);
    p.v.assign(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) p.x[d] = rng.uniform(bounds[d].lo, bounds[d].hi);
  }

  Matrix positions(config.swarm_size, dim);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (it > 0) {
      const auto crowding = crowding_distance(result.archive.objectives());
      for (auto& p : swarm) {
        const Evaluation& leader = pick_leader(result.archive, crowding, rng);
        for (std::size_t d = 0; d < dim; ++d) {
          const double r1 = rng.uniform();
          const double r2 = rng.uniform();
          p.v[d] = config.inertia * p.v[d] + config.cognitive * r1 * (p.pbest.x[d] - p.x[d]) +
                   config.social * r2 * (leader.x[d] - p.x[d]);
          p.x[d] += p.v[d];
          if (p.x[d] < bounds[d].lo) {
            p.x[d] = bounds[d].lo;
            p.v[d] = 0.0;
          } else if (p.x[d] > bounds[d].hi) {
            p.x[d] = bounds[d].hi;
            p.v[d] = 0.0;
          }
        }
      }
    }
    for (std::size_t i = 0; i < swarm.size(); ++i) std::copy(swarm[i].x.begin(), swarm[i].x.end(), positions.row(i).begin());

    std::vector<Evaluation> evals = evaluate(positions);
    if (evals.size() != swarm.size()) throw ArgumentError("pso: evaluator returned the wrong number of results");

    for (std::size_t i = 0; i < swarm.size(); ++i) {
      Evaluation& e = evals[i];
      if (e.f.size() != n_objectives || e.g.size() != n_constraints) {
        throw ArgumentError("pso: evaluator arity does not match the declared objectives/constraints");
      }
      if (!all_finite(e)) {
        throw OptimizationAborted("pso: non-finite surrogate output at iteration " + std::to_string(it) +
                                      ", particle " + std::to_string(i),
                                  it, i);
      }
      e.x = swarm[i].x;
      result.history.records.push_back(HistoryRecord{it, i, e});
      result.archive.insert(e);
      Particle& p = swarm[i];
      if (it == 0) {
        p.pbest = e;
      } else {
        const Dominance d = feasibility_dominates(e, p.pbest);
        if (d == Dominance::a_dominates || (d == Dominance::neither && rng.uniform() < 0.5)) p.pbest = e;
      }
    }
  }
  return result;
}

BatchEvaluator batch_from_oracle(Oracle oracle, std::size_t threads) {
  return [oracle = std::move(oracle), threads](const Matrix& positions) {
    std::vector<Evaluation> out(positions.rows());
    const std::size_t n = positions.rows();
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
      for (std::size_t i = 0; i < n; ++i) out[i] = oracle(positions.row(i));
      return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) out[i] = oracle(positions.row(i));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return out;
  };
}

}  // namespace certopt::mopso
