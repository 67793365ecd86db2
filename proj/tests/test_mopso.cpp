#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "certopt/errors.hpp"
#include "certopt/mopso.hpp"
#include "certopt/robustness.hpp"
#include "certopt/rng.hpp"

using namespace certopt;
using namespace certopt::mopso;

namespace {

Evaluation ev(std::vector<double> f, std::vector<double> g = {}) {
  Evaluation e;
  e.f = std::move(f);
  e.g = std::move(g);
  return e;
}

// O(n^2) nondominated filter under feasibility dominance.
std::vector<Evaluation> brute_force_front(const std::vector<Evaluation>& stream) {
  std::vector<Evaluation> out;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < stream.size() && !dominated; ++j) {
      dominated = j != i && feasibility_dominates(stream[j], stream[i]) == Dominance::a_dominates;
    }
    if (!dominated) out.push_back(stream[i]);
  }
  return out;
}

std::set<std::vector<double>> keys(const std::vector<Evaluation>& v) {
  std::set<std::vector<double>> s;
  for (const auto& e : v) s.insert(e.f);
  return s;
}

}  // namespace

TEST_CASE("feasibility dominance examples") {
  CHECK(feasibility_dominates(ev({1, 1}, {-1}), ev({0, 0}, {2})) == Dominance::a_dominates);
  CHECK(feasibility_dominates(ev({1, 2}), ev({2, 1})) == Dominance::neither);
  CHECK(feasibility_dominates(ev({1, 1}), ev({2, 2})) == Dominance::a_dominates);
  CHECK(feasibility_dominates(ev({2, 2}), ev({1, 1})) == Dominance::b_dominates);
  CHECK(feasibility_dominates(ev({5, 5}, {1.0}), ev({0, 0}, {3.0})) == Dominance::a_dominates);
  CHECK(feasibility_dominates(ev({1, 1}), ev({1, 1})) == Dominance::neither);
  CHECK_THROWS_AS(feasibility_dominates(ev({1, 1}), ev({1})), ArgumentError);
}

TEST_CASE("feasibility dominance is antisymmetric and transitive") {
  Rng rng(31);
  auto random_eval = [&] {
    auto e = ev({std::floor(rng.uniform(0, 4)), std::floor(rng.uniform(0, 4))}, {rng.uniform(-1, 1)});
    if (e.g[0] > 0.5) e.g[0] = std::floor(e.g[0] * 4);
    return e;
  };
  for (int t = 0; t < 3000; ++t) {
    const auto a = random_eval();
    const auto b = random_eval();
    const auto c = random_eval();
    const auto ab = feasibility_dominates(a, b);
    const auto ba = feasibility_dominates(b, a);
    if (ab == Dominance::a_dominates) CHECK(ba == Dominance::b_dominates);
    if (ab == Dominance::neither) CHECK(ba == Dominance::neither);
    if (ab == Dominance::a_dominates && feasibility_dominates(b, c) == Dominance::a_dominates) {
      CHECK(feasibility_dominates(a, c) == Dominance::a_dominates);
    }
  }
}

TEST_CASE("archive examples") {
  ParetoArchive a(10);
  CHECK(a.insert(ev({1, 1})));
  CHECK_FALSE(a.insert(ev({2, 2})));
  CHECK(a.size() == 1);
  CHECK(a.insert(ev({0, 0})));
  REQUIRE(a.size() == 1);
  CHECK(a.members()[0].f == std::vector<double>{0, 0});
  CHECK_FALSE(a.insert(ev({0, 0})));
}

TEST_CASE("archive matches a brute-force filter on random streams") {
  Rng rng(2718);
  for (int t = 0; t < 100; ++t) {
    std::vector<Evaluation> stream;
    const bool constrained = t % 2 == 1;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> g;
      if (constrained) g = {rng.uniform(-1.0, 0.3)};
      stream.push_back(ev({rng.uniform(), rng.uniform()}, g));
    }
    ParetoArchive archive(std::numeric_limits<std::size_t>::max());
    for (const auto& e : stream) {
      archive.insert(e);
      const auto& m = archive.members();
      for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j)
          if (i != j) REQUIRE(feasibility_dominates(m[i], m[j]) != Dominance::a_dominates);
    }
    CHECK(keys(archive.members()) == keys(brute_force_front(stream)));
  }
}

TEST_CASE("archive respects capacity") {
  ParetoArchive a(5);
  for (int i = 0; i <= 20; ++i) a.insert(ev({i / 20.0, 1.0 - i / 20.0}));
  CHECK(a.size() == 5);
  // Extremes have infinite crowding distance and survive truncation.
  const auto f = keys(a.members());
  CHECK(f.count({0.0, 1.0}) == 1);
  CHECK(f.count({1.0, 0.0}) == 1);
}

TEST_CASE("crowding distance examples") {
  const auto inf = std::numeric_limits<double>::infinity();
  CHECK(crowding_distance({{0, 1}, {1, 0}}) == std::vector<double>{inf, inf});
  const auto d = crowding_distance({{0, 2}, {1, 1}, {2, 0}});
  CHECK(d[0] == inf);
  CHECK(d[2] == inf);
  CHECK(d[1] == doctest::Approx(2.0));
  const auto dup = crowding_distance({{0, 3}, {1, 2}, {1, 2}, {3, 0}});
  // Duplicates are not special-cased: each sees the other as a neighbour in one objective.
  CHECK(dup[1] == doctest::Approx(1.0));
  CHECK(dup[2] == doctest::Approx(1.0));
}

TEST_CASE("pso history count, bounds and determinism") {
  const auto p = registry_lookup("binh_korn");
  PsoConfig cfg;
  cfg.swarm_size = 10;
  cfg.iterations = 5;
  cfg.seed = 4;
  const auto r = run(batch_from_oracle(p.evaluate), p.bounds, 2, 2, cfg);
  CHECK(r.history.size() == 50);
  std::set<std::pair<std::size_t, std::size_t>> ids;
  for (const auto& rec : r.history.records) {
    ids.insert({rec.iteration, rec.particle});
    for (std::size_t d = 0; d < 2; ++d) CHECK(p.bounds[d].contains(rec.eval.x[d]));
  }
  CHECK(ids.size() == 50);
  for (const auto& m : r.archive.members())
    for (std::size_t d = 0; d < 2; ++d) CHECK(p.bounds[d].contains(m.x[d]));

  const auto again = run(batch_from_oracle(p.evaluate, 3), p.bounds, 2, 2, cfg);
  REQUIRE(again.history.size() == r.history.size());
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    CHECK(again.history.records[i].eval.x == r.history.records[i].eval.x);
    CHECK(again.history.records[i].eval.f == r.history.records[i].eval.f);
  }
  CHECK(keys(again.archive.members()) == keys(r.archive.members()));

  PsoConfig full;
  full.seed = 1;
  CHECK(run(batch_from_oracle(p.evaluate), p.bounds, 2, 2, full).history.size() == 10000);
}

TEST_CASE("single-objective bowl converges to its centre") {
  const std::vector<Interval> bounds{{-5.0, 5.0}, {-5.0, 5.0}};
  const double cx = 1.3, cy = -2.1;
  Oracle bowl = [&](std::span<const double> x) {
    return ev({(x[0] - cx) * (x[0] - cx) + (x[1] - cy) * (x[1] - cy)});
  };
  PsoConfig cfg;
  cfg.seed = 8;
  const auto r = run(batch_from_oracle(bowl), bounds, 1, 0, cfg);
  REQUIRE(r.archive.size() >= 1);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : r.archive.members()) best = std::min(best, m.f[0]);
  CHECK(best < 1e-3);
}

TEST_CASE("Binh-Korn rigorous front is close to a brute-force grid front") {
  const auto p = registry_lookup("binh_korn");
  PsoConfig cfg;
  cfg.seed = 12;
  const auto r = run(batch_from_oracle(p.evaluate), p.bounds, 2, 2, cfg);

  std::vector<Evaluation> grid;
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j) {
      const std::vector<double> x{5.0 * i / 199.0, 3.0 * j / 199.0};
      auto e = p.evaluate(x);
      if (e.feasible()) grid.push_back(std::move(e));
    }
  ParetoArchive ref(std::numeric_limits<std::size_t>::max());
  for (const auto& e : grid) ref.insert(e);

  std::vector<std::vector<double>> a;
  for (const auto& m : r.archive.members())
    if (m.feasible()) a.push_back(m.f);
  const auto b = ref.objectives();
  const auto ranges = robustness::joint_ranges(a, b);
  CHECK(robustness::generational_distance(a, b, ranges) <= 0.05);
}

TEST_CASE("non-finite surrogate output aborts the run") {
  const std::vector<Interval> bounds{{0.0, 1.0}};
  Oracle bad = [](std::span<const double> x) {
    return ev({x[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : x[0]});
  };
  PsoConfig cfg;
  cfg.swarm_size = 20;
  cfg.iterations = 3;
  try {
    run(batch_from_oracle(bad), bounds, 1, 0, cfg);
    FAIL("expected OptimizationAborted");
  } catch (const OptimizationAborted& e) {
    CHECK(e.particle() < 20);
  }
}

TEST_CASE("pso config validation") {
  PsoConfig c;
  CHECK_NOTHROW(c.validate());
  c.swarm_size = 1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.inertia = 1.5;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.social = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}
