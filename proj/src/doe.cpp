#include "certopt/doe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "certopt/errors.hpp"
#include "certopt/rng.hpp"

namespace certopt::doe {

namespace {

// Value in stratum k of n: (k + u) / n, nudged back inside if rounding pushed it to a boundary.
double stratum_value(std::size_t k, std::size_t n, double u) {
  const double kn = static_cast<double>(k);
  const double nn = static_cast<double>(n);
  double v = (kn + u) / nn;
  while (v * nn >= kn + 1.0) v = std::nextafter(v, 0.0);
  while (v * nn < kn) v = std::nextafter(v, 1.0);
  return v;
}

void check_bounds_arity(std::size_t cols, std::span<const Interval> bounds) {
  if (cols != bounds.size()) {
    throw ArgumentError("scale_to_bounds: plan has " + std::to_string(cols) + " dimensions but " +
                        std::to_string(bounds.size()) + " bounds were given");
  }
}

}  // namespace

LhsPlan lhs_sample(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n == 0 || dim == 0) throw ArgumentError("lhs_sample: n and dim must both be at least 1");
  Rng rng(seed);
  LhsPlan plan{n, dim, seed, Matrix(n, dim)};
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < dim; ++d) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n; ++i) plan.points(i, d) = stratum_value(perm[i], n, rng.uniform());
  }
  return plan;
}

Matrix scale_to_bounds(const Matrix& unit, std::span<const Interval> bounds) {
  check_bounds_arity(unit.cols(), bounds);
  Matrix out(unit.rows(), unit.cols());
  for (std::size_t r = 0; r < unit.rows(); ++r)
    for (std::size_t c = 0; c < unit.cols(); ++c) {
      // Clamp guards against lo + 1*(hi-lo) rounding past hi.
      const double v = bounds[c].lo + unit(r, c) * bounds[c].width();
      out(r, c) = std::clamp(v, bounds[c].lo, bounds[c].hi);
    }
  return out;
}

Matrix scale_to_bounds(const LhsPlan& plan, std::span<const Interval> bounds) {
  return scale_to_bounds(plan.points, bounds);
}

Matrix unscale_from_bounds(const Matrix& scaled, std::span<const Interval> bounds) {
  check_bounds_arity(scaled.cols(), bounds);
  Matrix out(scaled.rows(), scaled.cols());
  for (std::size_t r = 0; r < scaled.rows(); ++r)
    for (std::size_t c = 0; c < scaled.cols(); ++c) out(r, c) = (scaled(r, c) - bounds[c].lo) / bounds[c].width();
  return out;
}

CorrelationMatrix correlation_matrix(const Matrix& data, std::vector<std::string> labels) {
  const std::size_t n = data.rows();
  const std::size_t m = data.cols();
  if (n < 2) throw ArgumentError("correlation_matrix: need at least 2 rows, got " + std::to_string(n));
  if (labels.empty()) {
    for (std::size_t c = 0; c < m; ++c) labels.push_back("c" + std::to_string(c + 1));
  }
  if (labels.size() != m) throw ArgumentError("correlation_matrix: label count does not match column count");

  std::vector<double> mean(m, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) mean[c] += data(r, c);
  for (double& v : mean) v /= static_cast<double>(n);

  Matrix cov(m, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t a = 0; a < m; ++a) {
      const double da = data(r, a) - mean[a];
      for (std::size_t b = a; b < m; ++b) cov(a, b) += da * (data(r, b) - mean[b]);
    }

  CorrelationMatrix out{std::move(labels), Matrix(m, m), {}};
  for (std::size_t c = 0; c < m; ++c)
    if (cov(c, c) == 0.0) out.constant_columns.push_back(c);
  auto is_constant = [&](std::size_t c) { return cov(c, c) == 0.0; };
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a; b < m; ++b) {
      double r = 0.0;
      if (!is_constant(a) && !is_constant(b)) {
        r = a == b ? 1.0 : std::clamp(cov(a, b) / std::sqrt(cov(a, a) * cov(b, b)), -1.0, 1.0);
      }
      out.r(a, b) = r;
      out.r(b, a) = r;
    }
  return out;
}

std::string to_string(SubsampleMethod method) { return method == SubsampleMethod::uniform ? "uniform" : "lhs_nearest"; }

SubsampleMethod parse_subsample_method(const std::string& text) {
  if (text == "lhs_nearest" || text == "lhs") return SubsampleMethod::lhs_nearest;
  if (text == "uniform") return SubsampleMethod::uniform;
  throw ArgumentError("subsample method must be 'lhs_nearest' or 'uniform', got '" + text + "'");
}

std::vector<std::size_t> lhs_subsample(const Matrix& positions, std::size_t k, std::uint64_t seed,
                                       SubsampleMethod method) {
  const std::size_t n = positions.rows();
  if (k == 0 || k > n) {
    throw ArgumentError("lhs_subsample: k = " + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
  }

  if (method == SubsampleMethod::uniform) {
    Rng rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
  }

  const std::size_t dim = positions.cols();
  std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t d = 0; d < dim; ++d) {
      lo[d] = std::min(lo[d], positions(r, d));
      hi[d] = std::max(hi[d], positions(r, d));
    }
  Matrix unit(n, dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t d = 0; d < dim; ++d) {
      const double w = hi[d] - lo[d];
      unit(r, d) = w > 0.0 ? (positions(r, d) - lo[d]) / w : 0.0;
    }

  const LhsPlan plan = lhs_sample(k, std::max<std::size_t>(dim, 1), seed);
  std::vector<char> claimed(n, 0);
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    const auto target = plan.points.row(s);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = n;
    for (std::size_t r = 0; r < n; ++r) {
      if (claimed[r]) continue;
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = unit(r, d) - target[d];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_idx = r;
      }
    }
    claimed[best_idx] = 1;
    picked.push_back(best_idx);
  }
  return picked;
}

}  // namespace certopt::doe
