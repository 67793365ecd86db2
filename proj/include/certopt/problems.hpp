#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace certopt {

struct Interval {
  double lo;
  double hi;
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

// One oracle call. Constraints follow the g(x) <= 0 feasible convention.
struct Evaluation {
  std::vector<double> x;
  std::vector<double> f;
  std::vector<double> g;

  bool feasible() const;
  // Sum of max(0, g_j).
  double violation() const;
};

using Oracle = std::function<Evaluation(std::span<const double>)>;

// A benchmark problem: descriptor plus its rigorous oracle.
struct Problem {
  std::string name;
  std::size_t dim = 0;
  std::size_t n_objectives = 0;
  std::size_t n_constraints = 0;
  std::vector<Interval> bounds;
  Oracle evaluate;

  std::size_t n_outputs() const { return n_objectives + n_constraints; }
  // Column names in dataset order: x1..xd, f1..fm, g1..gc.
  std::vector<std::string> input_names() const;
  std::vector<std::string> output_names() const;
};

enum class Dtlz2Form { paper, standard };

Evaluation eval_binh_korn(std::span<const double> x);
Evaluation eval_zdt3_paper(std::span<const double> x);
Evaluation eval_dtlz2_paper(std::span<const double> x, Dtlz2Form form = Dtlz2Form::paper);

struct RegistryOptions {
  Dtlz2Form dtlz2_form = Dtlz2Form::paper;
};

// Throws LookupError listing the registered names.
Problem registry_lookup(const std::string& name, const RegistryOptions& options = {});
std::vector<std::string> registered_problems();

Dtlz2Form parse_dtlz2_form(const std::string& text);
std::string to_string(Dtlz2Form form);

// Throws DomainError naming the first coordinate outside `bounds`.
void check_in_bounds(const std::string& problem, std::span<const double> x, std::span<const Interval> bounds);

}  // namespace certopt
