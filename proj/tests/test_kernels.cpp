#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "certopt/errors.hpp"
#include "certopt/kernels.hpp"
#include "certopt/rng.hpp"

using namespace certopt;
using namespace certopt::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Relative to the magnitude of the summed terms, which bounds reordering error.
void check_close(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-13 * scale);
}

}  // namespace

TEST_CASE("scalar table is always available") {
  CHECK(isa_supported(Isa::scalar));
  CHECK(table(Isa::scalar).isa == Isa::scalar);
  CHECK(isa_name(Isa::scalar) == "scalar");
  CHECK(isa_name(Isa::avx2) == "avx2");
  CHECK(isa_supported(active().isa));
}

TEST_CASE("kernel variants agree") {
  if (!isa_supported(Isa::avx2)) {
    MESSAGE("AVX2 not available on this CPU; equivalence test skipped");
    return;
  }
  const auto& s = table(Isa::scalar);
  const auto& v = table(Isa::avx2);
  Rng rng(77);
  const std::size_t sizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 60, 64, 101, 220};

  SUBCASE("dot") {
    for (auto n : sizes) {
      const auto a = random_vec(rng, n);
      const auto b = random_vec(rng, n);
      CHECK(std::abs(s.dot(a.data(), b.data(), n) - v.dot(a.data(), b.data(), n)) <= 1e-13 * n);
    }
  }
  SUBCASE("axpy is bitwise identical") {
    for (auto n : sizes) {
      const auto x = random_vec(rng, n);
      auto y1 = random_vec(rng, n);
      auto y2 = y1;
      s.axpy(0.37, x.data(), y1.data(), n);
      v.axpy(0.37, x.data(), y2.data(), n);
      CHECK(y1 == y2);
    }
  }
  SUBCASE("gemm variants") {
    for (int t = 0; t < 60; ++t) {
      const std::size_t m = 1 + rng.below(37);
      const std::size_t n = 1 + rng.below(37);
      const std::size_t k = 1 + rng.below(37);
      const auto a = random_vec(rng, m * k);
      const auto b = random_vec(rng, n * k);
      const auto bias = random_vec(rng, n);
      std::vector<double> c1(m * n), c2(m * n);
      s.gemm_nt_bias(a.data(), b.data(), bias.data(), c1.data(), m, n, k);
      v.gemm_nt_bias(a.data(), b.data(), bias.data(), c2.data(), m, n, k);
      check_close(c1, c2, static_cast<double>(k));
      s.gemm_nt_bias(a.data(), b.data(), nullptr, c1.data(), m, n, k);
      v.gemm_nt_bias(a.data(), b.data(), nullptr, c2.data(), m, n, k);
      check_close(c1, c2, static_cast<double>(k));

      const auto bn = random_vec(rng, k * n);
      auto d1 = random_vec(rng, m * n);
      auto d2 = d1;
      s.gemm_nn_acc(a.data(), bn.data(), d1.data(), m, n, k);
      v.gemm_nn_acc(a.data(), bn.data(), d2.data(), m, n, k);
      check_close(d1, d2, static_cast<double>(k + 1));

      const auto at = random_vec(rng, k * m);
      auto e1 = random_vec(rng, m * n);
      auto e2 = e1;
      s.gemm_tn_acc(at.data(), bn.data(), e1.data(), m, n, k);
      v.gemm_tn_acc(at.data(), bn.data(), e2.data(), m, n, k);
      check_close(e1, e2, static_cast<double>(k + 1));
    }
  }
  SUBCASE("adam is bitwise identical") {
    for (auto n : sizes) {
      auto p1 = random_vec(rng, n);
      auto m1 = random_vec(rng, n);
      auto v1 = random_vec(rng, n);
      for (auto& x : v1) x = std::abs(x);
      const auto g = random_vec(rng, n);
      auto p2 = p1, m2 = m1, v2 = v1;
      const AdamStep step{1e-3, 0.9, 0.999, 1e-7, 1.0 - std::pow(0.9, 3), 1.0 - std::pow(0.999, 3)};
      s.adam_update(p1.data(), m1.data(), v1.data(), g.data(), n, step);
      v.adam_update(p2.data(), m2.data(), v2.data(), g.data(), n, step);
      CHECK(p1 == p2);
      CHECK(m1 == m2);
      CHECK(v1 == v2);
    }
  }  SUBCASE("tanh within a few ulp of std::tanh") {
    std::vector<double> x;
    for (int i = 0; i < 20000; ++i) x.push_back(rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-8.0, 1.5)));
    for (double e : {0.0, 0.625, -0.625, 19.5, 22.0, 40.0, -1e300, 1e-300}) x.push_back(e);
    auto y1 = x;
    auto y2 = x;
    s.tanh_inplace(y1.data(), y1.size());
    v.tanh_inplace(y2.data(), y2.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ulp = std::abs(std::nextafter(y1[i], 2.0) - y1[i]);
      CHECK(std::abs(y1[i] - y2[i]) <= 4.0 * ulp);
    }
    double nan = std::nan("");
    v.tanh_inplace(&nan, 1);
    CHECK(std::isnan(nan));
  }
}

TEST_CASE("a row's result does not depend on its position in the batch") {
  Rng rng(8);
  for (Isa isa : {Isa::scalar, Isa::avx2}) {
    if (!isa_supported(isa)) continue;
    const auto& t = table(isa);
    for (std::size_t k : {3, 6, 60, 101}) {
      for (std::size_t n : {1, 5, 8, 61}) {
        const std::size_t m = 7;
        const auto a = random_vec(rng, m * k);
        const auto b = random_vec(rng, n * k);
        const auto bias = random_vec(rng, n);
        std::vector<double> all(m * n);
        t.gemm_nt_bias(a.data(), b.data(), bias.data(), all.data(), m, n, k);
        auto act_all = all;
        t.tanh_inplace(act_all.data(), act_all.size());
        for (std::size_t i = 0; i < m; ++i) {
          std::vector<double> one(n);
          t.gemm_nt_bias(a.data() + i * k, b.data(), bias.data(), one.data(), 1, n, k);
          CHECK(std::equal(one.begin(), one.end(), all.begin() + i * n));
          t.tanh_inplace(one.data(), n);
          CHECK(std::equal(one.begin(), one.end(), act_all.begin() + i * n));
        }
      }
    }
  }
}

TEST_CASE("gemm matches a naive triple loop") {
  const auto& k = active();
  Rng rng(8);
  const std::size_t m = 5, n = 6, p = 7;
  const auto a = random_vec(rng, m * p);
  const auto b = random_vec(rng, n * p);
  std::vector<double> c(m * n);
  k.gemm_nt_bias(a.data(), b.data(), nullptr, c.data(), m, n, p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0.0;
      for (std::size_t q = 0; q < p; ++q) ref += a[i * p + q] * b[j * p + q];
      CHECK(c[i * n + j] == doctest::Approx(ref).epsilon(1e-12));
    }
}
