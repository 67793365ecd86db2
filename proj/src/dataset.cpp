#include "certopt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "certopt/errors.hpp"
#include "certopt/rng.hpp"

namespace certopt {

using nlohmann::json;

std::size_t Dataset::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) {
    std::string available;
    for (const auto& c : columns) available += (available.empty() ? "" : ", ") + c;
    throw LookupError("column '" + name + "' not found; available columns: " + available);
  }
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<std::string> Dataset::output_columns() const {
  return {columns.begin() + static_cast<std::ptrdiff_t>(n_inputs), columns.end()};
}

SplitIndices make_splits(std::size_t n, double validation_fraction, double test_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0 && test_fraction > 0.0 && test_fraction < 1.0 &&
        validation_fraction + test_fraction < 1.0)) {
    throw ArgumentError("split fractions must lie in (0,1) and sum to less than 1");
  }
  if (n < 3) throw ArgumentError("need at least 3 samples to form train/validation/test splits");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, "splits");
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto count = [n](double frac) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(frac * static_cast<double>(n)));
  };
  const std::size_t n_test = count(test_fraction);
  const std::size_t n_val = count(validation_fraction);
  if (n_test + n_val >= n) throw ArgumentError("split fractions leave no training samples");
  SplitIndices s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  return s;
}

Dataset build_dataset(const Problem& problem, const Matrix& inputs, std::uint64_t seed) {
  if (inputs.cols() != problem.dim) throw ArgumentError("build_dataset: input width does not match problem dimension");
  Dataset d;
  d.problem = problem.name;
  d.columns = problem.input_names();
  for (auto& c : problem.output_names()) d.columns.push_back(c);
  d.n_inputs = problem.dim;
  d.input_bounds = problem.bounds;
  d.seed = seed;
  d.values = Matrix(inputs.rows(), d.columns.size());
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const Evaluation e = problem.evaluate(inputs.row(r));
    auto row = d.values.row(r);
    std::copy(e.x.begin(), e.x.end(), row.begin());
    std::copy(e.f.begin(), e.f.end(), row.begin() + static_cast<std::ptrdiff_t>(problem.dim));
    std::copy(e.g.begin(), e.g.end(), row.begin() + static_cast<std::ptrdiff_t>(problem.dim + problem.n_objectives));
  }
  return d;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix& values) {
  if (!values.empty() && header.size() != values.cols()) throw ArgumentError("write_csv: header/column count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(r, c));
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> parts;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) parts.push_back(cell);
  if (!line.empty() && line.back() == ',') parts.emplace_back();
  return parts;
}

double parse_double(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && *begin == ' ') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": cannot parse number '" + text + "'");
  }
  return v;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  t.values = Matrix(0, t.header.size());
  std::size_t lineno = 1;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                    " fields, got " + std::to_string(cells.size()));
    }
    row.clear();
    for (const auto& c : cells) row.push_back(parse_double(c, path, lineno));
    t.values.append_row(row);
  }
  return t;
}

std::filesystem::path dataset_sidecar_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".json");
}

void save_dataset(const Dataset& data, const std::filesystem::path& csv_path) {
  write_csv(csv_path, data.columns, data.values);
  json bounds = json::array();
  for (const auto& b : data.input_bounds) bounds.push_back({b.lo, b.hi});
  const json meta{{"schema", "certopt.dataset/1"}, {"problem", data.problem},      {"rows", data.rows()},
                  {"seed", data.seed},              {"columns", data.columns},      {"n_inputs", data.n_inputs},
                  {"input_bounds", bounds},         {"csv", csv_path.filename().string()}};
  std::ofstream out(dataset_sidecar_path(csv_path), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset manifest next to '" + csv_path.string() + "'");
  out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
  CsvTable t = read_csv(csv_path);
  Dataset d;
  d.columns = t.header;
  d.values = std::move(t.values);
  const auto sidecar = dataset_sidecar_path(csv_path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw IoError("cannot parse '" + sidecar.string() + "': " + e.what());
    }
    d.problem = meta.value("problem", "");
    d.seed = meta.value("seed", std::uint64_t{0});
    d.n_inputs = meta.at("n_inputs").get<std::size_t>();
    for (const auto& b : meta.at("input_bounds")) d.input_bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  } else {
    // Without a sidecar, inputs are the leading x* columns and bounds come from the data.
    while (d.n_inputs < d.columns.size() && !d.columns[d.n_inputs].empty() && d.columns[d.n_inputs][0] == 'x') ++d.n_inputs;
    for (std::size_t c = 0; c < d.n_inputs; ++c) {
      const auto col = d.values.column(c);
      if (col.empty()) throw IoError("'" + csv_path.string() + "' has no rows");
      const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
      d.input_bounds.push_back({*mn, *mx > *mn ? *mx : *mn + 1.0});
    }
  }
  if (d.n_inputs == 0 || d.n_inputs >= d.columns.size()) {
    throw IoError("'" + csv_path.string() + "' must have at least one input and one output column");
  }
  return d;
}

}  // namespace certopt
