#include "certopt/problems.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "certopt/errors.hpp"

namespace certopt {

namespace {

const std::vector<Interval> kBinhKornBounds{{0.0, 5.0}, {0.0, 3.0}};
const std::vector<Interval> kUnitCube3{{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}};

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

bool Evaluation::feasible() const {
  for (double gj : g)
    if (gj > 0.0) return false;
  return true;
}

double Evaluation::violation() const {
  double total = 0.0;
  for (double gj : g) total += gj > 0.0 ? gj : 0.0;
  return total;
}

std::vector<std::string> Problem::input_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < dim; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

std::vector<std::string> Problem::output_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_objectives; ++i) names.push_back("f" + std::to_string(i + 1));
  for (std::size_t i = 0; i < n_constraints; ++i) names.push_back("g" + std::to_string(i + 1));
  return names;
}

void check_in_bounds(const std::string& problem, std::span<const double> x, std::span<const Interval> bounds) {
  if (x.size() != bounds.size()) {
    throw ArgumentError(problem + ": expected " + std::to_string(bounds.size()) + " variables, got " +
                        std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !bounds[i].contains(x[i])) {
      throw DomainError(problem + ": x" + std::to_string(i + 1) + " = " + fmt_double(x[i]) + " violates bound [" +
                        fmt_double(bounds[i].lo) + ", " + fmt_double(bounds[i].hi) + "]");
    }
  }
}

Evaluation eval_binh_korn(std::span<const double> x) {
  check_in_bounds("binh_korn", x, kBinhKornBounds);
  const double x1 = x[0];
  const double x2 = x[1];
  Evaluation e;
  e.x.assign(x.begin(), x.end());
  e.f = {4.0 * x1 * x1 + 4.0 * x2 * x2, (x1 - 5.0) * (x1 - 5.0) + (x2 - 5.0) * (x2 - 5.0)};
  e.g = {(x1 - 5.0) * (x1 - 5.0) + x2 * x2 - 25.0, -(x1 - 8.0) * (x1 - 8.0) - (x2 + 3.0) * (x2 + 3.0) + 7.7};
  return e;
}

// ZDT-style composition with the three-variable auxiliary 1 + (9/29)(x2 + x3).
Evaluation eval_zdt3_paper(std::span<const double> x) {
  check_in_bounds("zdt3", x, kUnitCube3);
  const double x1 = x[0];
  const double aux = 1.0 + (9.0 / 29.0) * (x[1] + x[2]);
  const double ratio = x1 / aux;
  Evaluation e;
  e.x.assign(x.begin(), x.end());
  e.f = {x1, aux * (1.0 - std::sqrt(ratio) - ratio * std::sin(10.0 * std::numbers::pi * x1))};
  return e;
}

Evaluation eval_dtlz2_paper(std::span<const double> x, Dtlz2Form form) {
  check_in_bounds("dtlz2", x, kUnitCube3);
  double big_g = 0.0;
  for (double xi : x) big_g += (xi - 0.5) * (xi - 0.5);
  const double half_pi = std::numbers::pi / 2.0;
  const double scale = 1.0 + big_g;
  double f1 = scale * std::cos(x[0] * half_pi) * std::cos(x[1] * half_pi);
  if (form == Dtlz2Form::paper) f1 *= std::sin(x[2] * half_pi);
  Evaluation e;
  e.x.assign(x.begin(), x.end());
  e.f = {f1, scale * std::cos(x[0] * half_pi) * std::sin(x[1] * half_pi), scale * std::sin(x[0] * half_pi)};
  return e;
}

std::vector<std::string> registered_problems() { return {"binh_korn", "zdt3", "dtlz2"}; }

Problem registry_lookup(const std::string& name, const RegistryOptions& options) {
  if (name == "binh_korn") {
    return Problem{name, 2, 2, 2, kBinhKornBounds, [](std::span<const double> x) { return eval_binh_korn(x); }};
  }
  if (name == "zdt3") {
    return Problem{name, 3, 2, 0, kUnitCube3, [](std::span<const double> x) { return eval_zdt3_paper(x); }};
  }
  if (name == "dtlz2") {
    const Dtlz2Form form = options.dtlz2_form;
    return Problem{name, 3, 3, 0, kUnitCube3, [form](std::span<const double> x) { return eval_dtlz2_paper(x, form); }};
  }
  std::string available;
  for (const auto& n : registered_problems()) available += (available.empty() ? "" : ", ") + n;
  throw LookupError("unknown problem '" + name + "'; available: " + available);
}

Dtlz2Form parse_dtlz2_form(const std::string& text) {
  if (text == "paper") return Dtlz2Form::paper;
  if (text == "standard") return Dtlz2Form::standard;
  throw ArgumentError("dtlz2 form must be 'paper' or 'standard', got '" + text + "'");
}

std::string to_string(Dtlz2Form form) { return form == Dtlz2Form::paper ? "paper" : "standard"; }

}  // namespace certopt
