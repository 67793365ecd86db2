#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "certopt/matrix.hpp"
#include "certopt/problems.hpp"

namespace certopt::doe {

// n x dim Latin hypercube in [0,1). Column d holds exactly one value per stratum [k/n, (k+1)/n).
struct LhsPlan {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  Matrix points;
};

LhsPlan lhs_sample(std::size_t n, std::size_t dim, std::uint64_t seed);

// Affine map u -> lo + u (hi - lo), column by column.
Matrix scale_to_bounds(const LhsPlan& plan, std::span<const Interval> bounds);
Matrix scale_to_bounds(const Matrix& unit, std::span<const Interval> bounds);
Matrix unscale_from_bounds(const Matrix& scaled, std::span<const Interval> bounds);

struct CorrelationMatrix {
  std::vector<std::string> labels;
  Matrix r;
  // Columns with zero variance; their r is 0 against every other column (and on the diagonal).
  std::vector<std::size_t> constant_columns;
};

// Pearson coefficients for every column pair. Requires at least two rows.
CorrelationMatrix correlation_matrix(const Matrix& data, std::vector<std::string> labels = {});

enum class SubsampleMethod { lhs_nearest, uniform };

std::string to_string(SubsampleMethod method);
SubsampleMethod parse_subsample_method(const std::string& text);

// Draws k distinct rows of `positions` (one row per population member).
//
// lhs_nearest: k LHS points are laid over the population's bounding box and each, in
// plan order, claims its nearest unclaimed member (Euclidean distance in box-normalized
// coordinates, lowest index on ties). uniform: partial Fisher-Yates shuffle.
std::vector<std::size_t> lhs_subsample(const Matrix& positions, std::size_t k, std::uint64_t seed,
                                       SubsampleMethod method = SubsampleMethod::lhs_nearest);

}  // namespace certopt::doe
