#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "certopt/doe.hpp"
#include "certopt/errors.hpp"
#include "certopt/problems.hpp"
#include "certopt/rng.hpp"

using namespace certopt;
using namespace certopt::doe;

namespace {

bool stratified(const LhsPlan& plan) {
  for (std::size_t d = 0; d < plan.dim; ++d) {
    std::vector<int> hits(plan.n, 0);
    for (std::size_t i = 0; i < plan.n; ++i) {
      const double u = plan.points(i, d);
      if (!(u >= 0.0 && u < 1.0)) return false;
      const auto k = static_cast<std::size_t>(u * static_cast<double>(plan.n));
      if (k >= plan.n) return false;
      // The stratum test must also hold in exact arithmetic at the edges.
      if (u < static_cast<double>(k) / plan.n || u >= static_cast<double>(k + 1) / plan.n) return false;
      ++hits[k];
    }
    if (!std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; })) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lhs examples") {
  const auto p = lhs_sample(4, 1, 99);
  CHECK(stratified(p));
  const auto single = lhs_sample(1, 3, 5);
  CHECK(single.points.rows() == 1);
  CHECK(single.points.cols() == 3);
  CHECK(stratified(single));
  CHECK(lhs_sample(1000, 2, 7).points == lhs_sample(1000, 2, 7).points);
  CHECK_FALSE(lhs_sample(100, 2, 7).points == lhs_sample(100, 2, 8).points);
  CHECK_THROWS_AS(lhs_sample(0, 2, 1), ArgumentError);
  CHECK_THROWS_AS(lhs_sample(3, 0, 1), ArgumentError);
}

TEST_CASE("lhs stratification over random cases") {
  Rng rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const auto n = 1 + rng.below(64);
    const auto dim = 1 + rng.below(8);
    const auto plan = lhs_sample(n, dim, rng.next_u64());
    REQUIRE(stratified(plan));
  }
}

TEST_CASE("scale_to_bounds corners, midpoint and round trip") {
  const std::vector<Interval> b{{0.0, 5.0}, {0.0, 3.0}};
  Matrix u(3, 2);
  u(1, 0) = 1.0;
  u(1, 1) = 1.0;
  u(2, 0) = 0.5;
  u(2, 1) = 0.5;
  const auto s = scale_to_bounds(u, b);
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 0) == 5.0);
  CHECK(s(1, 1) == 3.0);
  CHECK(s(2, 0) == 2.5);
  CHECK(s(2, 1) == 1.5);

  const auto plan = lhs_sample(200, 2, 3);
  const auto scaled = scale_to_bounds(plan, b);
  const auto back = unscale_from_bounds(scaled, b);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(b[d].contains(scaled(i, d)));
      CHECK(std::abs(back(i, d) - plan.points(i, d)) <= 1e-12);
    }
  CHECK_THROWS_AS(scale_to_bounds(plan, std::vector<Interval>{{0.0, 1.0}}), ArgumentError);
}

TEST_CASE("correlation examples") {
  Matrix m(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    m(i, 0) = 1.0 + i;
    m(i, 1) = 3.0 - i;
    m(i, 2) = 5.0;
  }
  const auto c = correlation_matrix(m, {"x", "y", "k"});
  CHECK(c.r(0, 0) == doctest::Approx(1.0));
  CHECK(c.r(0, 1) == doctest::Approx(-1.0));
  CHECK(c.r(0, 2) == 0.0);
  CHECK(c.r(2, 1) == 0.0);
  CHECK(c.constant_columns == std::vector<std::size_t>{2});
  CHECK(c.labels == std::vector<std::string>{"x", "y", "k"});
  CHECK_THROWS_AS(correlation_matrix(Matrix(1, 2)), ArgumentError);
}

TEST_CASE("lhs inputs are nearly uncorrelated for every benchmark") {
  for (const auto& name : registered_problems()) {
    const auto p = registry_lookup(name);
    const auto x = scale_to_bounds(lhs_sample(1000, p.dim, 7), p.bounds);
    const auto c = correlation_matrix(x);
    for (std::size_t i = 0; i < p.dim; ++i)
      for (std::size_t j = 0; j < p.dim; ++j) {
        CHECK(std::abs(c.r(i, j)) <= 1.0 + 1e-12);
        CHECK(c.r(i, j) == doctest::Approx(c.r(j, i)));
        if (i != j) CHECK(std::abs(c.r(i, j)) < 0.1);
      }
  }
}

TEST_CASE("lhs_subsample draws distinct members") {
  Rng rng(1);
  Matrix pop(10000, 3);
  for (auto& v : pop.data()) v = rng.uniform();
  for (const auto method : {SubsampleMethod::lhs_nearest, SubsampleMethod::uniform}) {
    const auto idx = lhs_subsample(pop, 381, 17, method);
    CHECK(idx.size() == 381);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 381);
    CHECK(*std::max_element(idx.begin(), idx.end()) < 10000);
    CHECK(idx == lhs_subsample(pop, 381, 17, method));
  }

  Matrix small(25, 2);
  for (auto& v : small.data()) v = rng.uniform();
  auto all = lhs_subsample(small, 25, 3);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 25; ++i) CHECK(all[i] == i);
  CHECK(lhs_subsample(small, 1, 3).size() == 1);
  CHECK_THROWS_AS(lhs_subsample(small, 26, 3), ArgumentError);
  CHECK_THROWS_AS(lhs_subsample(small, 0, 3), ArgumentError);
}

TEST_CASE("lhs_subsample handles degenerate populations") {
  // Every member identical: the bounding box has zero width.
  Matrix same(50, 2, 0.25);
  const auto idx = lhs_subsample(same, 10, 4);
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 10);
}

TEST_CASE("subsample method names") {
  CHECK(parse_subsample_method("lhs_nearest") == SubsampleMethod::lhs_nearest);
  CHECK(parse_subsample_method(to_string(SubsampleMethod::uniform)) == SubsampleMethod::uniform);
  CHECK_THROWS_AS(parse_subsample_method("sobol"), ArgumentError);
}
