#pragma once

// Dense double-precision kernels used by the surrogate's forward and backward
// passes and by the optimizer update.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The variant is chosen once at runtime from CPUID and
// can be forced with CERTOPT_KERNELS=scalar|avx2. Matrices are row-major and
// densely packed.
//
// Reductions in the AVX2 variant use a different summation order than the
// scalar one, so results agree to rounding, not bitwise; so does tanh. axpy and
// adam_update are bit-identical across variants. Within a variant, every kernel
// computes a matrix row the same way wherever the row sits in the batch.

#include <cstddef>
#include <span>
#include <string_view>

namespace certopt::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] = A[m x k] * B[n x k]^T + bias[n]; bias may be null.
  void (*gemm_nt_bias)(const double* a, const double* b, const double* bias, double* c, std::size_t m, std::size_t n,
                       std::size_t k);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
  void (*adam_update)(double* param, double* m, double* v, const double* grad, std::size_t n, const AdamStep& step);
  // x = tanh(x) element-wise. The AVX2 variant is a polynomial/rational approximation
  // within a few ulp of std::tanh.
  void (*tanh_inplace)(double* x, std::size_t n);
};

bool isa_supported(Isa isa);

// Kernel table for a specific variant; throws ArgumentError if unsupported here.
const KernelTable& table(Isa isa);

// Variant selected for this process (CPU detection plus CERTOPT_KERNELS override).
const KernelTable& active();

// Span conveniences over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace detail {
extern const KernelTable scalar_table;
extern const KernelTable avx2_table;  // defined only when the AVX2 unit is built
}  // namespace detail

}  // namespace certopt::kernels
