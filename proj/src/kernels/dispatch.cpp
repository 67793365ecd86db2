#include <cstdlib>
#include <string>

#include "certopt/errors.hpp"
#include "certopt/kernels.hpp"

namespace certopt::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(CERTOPT_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) throw ArgumentError("kernel variant '" + std::string(isa_name(isa)) + "' is not supported on this CPU");
#if defined(CERTOPT_HAVE_AVX2_TU)
  if (isa == Isa::avx2) return detail::avx2_table;
#endif
  return detail::scalar_table;
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("CERTOPT_KERNELS")) {
    const std::string_view want(env);
    if (want == "scalar") return table(Isa::scalar);
    if (want == "avx2") return table(Isa::avx2);
  }
  return isa_supported(Isa::avx2) ? table(Isa::avx2) : table(Isa::scalar);
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& chosen = select();
  return chosen;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("dot: length mismatch");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ArgumentError("axpy: length mismatch");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace certopt::kernels
