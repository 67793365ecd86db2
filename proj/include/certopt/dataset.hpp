#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "certopt/matrix.hpp"
#include "certopt/problems.hpp"

namespace certopt {

// Samples of a problem: inputs followed by output columns (objectives, then constraints).
struct Dataset {
  std::string problem;
  std::vector<std::string> columns;
  std::size_t n_inputs = 0;
  Matrix values;
  // Bounds of the input variables; used to normalize inputs.
  std::vector<Interval> input_bounds;
  std::uint64_t seed = 0;

  std::size_t rows() const { return values.rows(); }
  std::size_t n_outputs() const { return columns.size() - n_inputs; }
  // Throws LookupError naming available columns.
  std::size_t column_index(const std::string& name) const;
  std::vector<std::string> output_columns() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then test and validation are carved off the front (rounded down, at least 1 each).
SplitIndices make_splits(std::size_t n, double validation_fraction, double test_fraction, std::uint64_t seed);

// Evaluates `problem` on the rows of `inputs` (problem units).
Dataset build_dataset(const Problem& problem, const Matrix& inputs, std::uint64_t seed);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix& values);
CsvTable read_csv(const std::filesystem::path& path);

// Dataset CSV plus the sidecar manifest `<path>.json` holding problem, seed and bounds.
void save_dataset(const Dataset& data, const std::filesystem::path& csv_path);
Dataset load_dataset(const std::filesystem::path& csv_path);
std::filesystem::path dataset_sidecar_path(const std::filesystem::path& csv_path);

}  // namespace certopt
