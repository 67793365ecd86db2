#include <doctest.h>

#include <cmath>
#include <vector>

#include "certopt/errors.hpp"
#include "certopt/problems.hpp"
#include "certopt/rng.hpp"

using namespace certopt;

namespace {
std::vector<double> v(std::initializer_list<double> x) { return x; }
}  // namespace

TEST_CASE("binh_korn values and constraint signs") {
  const auto e = eval_binh_korn(v({1.0, 2.0}));
  CHECK(e.f == v({20.0, 25.0}));
  CHECK(e.g[0] == doctest::Approx(-5.0));
  CHECK(e.g[1] == doctest::Approx(-66.3));
  CHECK(e.feasible());
  CHECK(e.violation() == 0.0);

  const auto corner = eval_binh_korn(v({0.0, 0.0}));
  CHECK(corner.f[0] == 0.0);
  CHECK(corner.f[1] == 50.0);
}

TEST_CASE("binh_korn objectives are nonnegative over the box") {
  for (int i = 0; i <= 50; ++i)
    for (int j = 0; j <= 30; ++j) {
      const auto e = eval_binh_korn(v({i * 0.1, j * 0.1}));
      CHECK(e.f[0] >= 0.0);
      CHECK(e.f[1] >= 0.0);
    }
}

TEST_CASE("zdt3 paper form examples") {
  const auto a = eval_zdt3_paper(v({1.0, 0.0, 0.0}));
  CHECK(a.f[0] == 1.0);
  CHECK(a.f[1] == doctest::Approx(0.0).epsilon(1e-12));
  const auto b = eval_zdt3_paper(v({0.5, 0.0, 0.0}));
  CHECK(b.f[0] == 0.5);
  CHECK(b.f[1] == doctest::Approx(0.2928932188134521).epsilon(1e-12));
  const auto c = eval_zdt3_paper(v({0.3, 0.6, 0.9}));
  CHECK(c.f[1] == doctest::Approx(0.802452257826572).epsilon(1e-12));
  CHECK(a.g.empty());
}

TEST_CASE("zdt3 f2 at x1 = 0 equals the auxiliary term") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double x2 = rng.uniform();
    const double x3 = rng.uniform();
    const auto e = eval_zdt3_paper(v({0.0, x2, x3}));
    CHECK(e.f[1] == 1.0 + 9.0 / 29.0 * (x2 + x3));
  }
}

TEST_CASE("dtlz2 paper form examples") {
  const auto mid = eval_dtlz2_paper(v({0.5, 0.5, 0.5}));
  CHECK(mid.f[0] == doctest::Approx(0.3535533905932738).epsilon(1e-12));
  CHECK(mid.f[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mid.f[2] == doctest::Approx(0.7071067811865476).epsilon(1e-12));

  const auto zero = eval_dtlz2_paper(v({0.0, 0.0, 0.0}));
  CHECK(zero.f == v({0.0, 0.0, 0.0}));

  // Frozen from an independent scalar script: G = 0.5, f = 1.5 * (cos(pi/2) sin(pi/4), 0, 1).
  const auto e = eval_dtlz2_paper(v({1.0, 0.0, 0.5}));
  CHECK(e.f[0] == doctest::Approx(6.494670421766199e-17).epsilon(1e-12));
  CHECK(e.f[1] == 0.0);
  CHECK(e.f[2] == doctest::Approx(1.5).epsilon(1e-15));
  const auto s = eval_dtlz2_paper(v({1.0, 0.0, 0.5}), Dtlz2Form::standard);
  CHECK(s.f[0] == doctest::Approx(9.184850993605148e-17).epsilon(1e-12));
}

TEST_CASE("dtlz2 standard form lies on the unit sphere when G = 0") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double x1 = rng.uniform();
    const double x2 = rng.uniform();
    // G = sum (x_i - 0.5)^2 vanishes only at the centre, so hold every variable there
    // except the angles, and divide G back out.
    const auto e = eval_dtlz2_paper(v({x1, x2, 0.5}), Dtlz2Form::standard);
    const double g = (x1 - 0.5) * (x1 - 0.5) + (x2 - 0.5) * (x2 - 0.5);
    const double r = std::sqrt(e.f[0] * e.f[0] + e.f[1] * e.f[1] + e.f[2] * e.f[2]);
    CHECK(std::abs(r / (1.0 + g) - 1.0) <= 1e-12);
  }
}

TEST_CASE("oracles are pure") {
  Rng rng(3);
  for (const auto& name : registered_problems()) {
    const auto p = registry_lookup(name);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> x;
      for (const auto& b : p.bounds) x.push_back(rng.uniform(b.lo, b.hi));
      const auto a = p.evaluate(x);
      const auto b = p.evaluate(x);
      CHECK(a.f == b.f);
      CHECK(a.g == b.g);
      CHECK(a.f.size() == p.n_objectives);
      CHECK(a.g.size() == p.n_constraints);
    }
  }
}

TEST_CASE("registry descriptors") {
  const auto bk = registry_lookup("binh_korn");
  CHECK(bk.dim == 2);
  CHECK(bk.n_objectives == 2);
  CHECK(bk.n_constraints == 2);
  CHECK(bk.bounds[0].hi == 5.0);
  CHECK(bk.bounds[1].hi == 3.0);
  const auto z = registry_lookup("zdt3");
  CHECK(z.dim == 3);
  CHECK(z.n_objectives == 2);
  CHECK(z.n_constraints == 0);
  const auto d = registry_lookup("dtlz2");
  CHECK(d.dim == 3);
  CHECK(d.n_objectives == 3);
  CHECK(d.n_constraints == 0);
  CHECK(bk.input_names() == std::vector<std::string>{"x1", "x2"});
  CHECK(bk.output_names() == std::vector<std::string>{"f1", "f2", "g1", "g2"});
  for (const auto& p : {bk, z, d})
    for (const auto& b : p.bounds) CHECK(b.lo < b.hi);
}

TEST_CASE("unknown problem lists the registered names") {
  try {
    registry_lookup("zdt4");
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    const std::string what = e.what();
    CHECK(what.find("binh_korn") != std::string::npos);
    CHECK(what.find("dtlz2") != std::string::npos);
  }
}

TEST_CASE("out-of-bounds input is a domain error naming the variable") {
  try {
    eval_binh_korn(v({1.0, 3.5}));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("x2") != std::string::npos);
  }
  CHECK_THROWS_AS(eval_zdt3_paper(v({-0.1, 0.0, 0.0})), DomainError);
  CHECK_THROWS_AS(eval_dtlz2_paper(v({0.0, 0.0, 1.01})), DomainError);
  CHECK_THROWS_AS(parse_dtlz2_form("canonical"), ArgumentError);
}
