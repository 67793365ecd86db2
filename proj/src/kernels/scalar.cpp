#include <cmath>

#include "certopt/kernels.hpp"

namespace certopt::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt_bias_scalar(const double* a, const double* b, const double* bias, double* c, std::size_t m,
                         std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dot_scalar(a + i * k, b + j * k, k);
      c[i * n + j] = bias ? d + bias[j] : d;
    }
  }
}

void gemm_nn_acc_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy_scalar(a[i * k + p], b + p * n, c + i * n, n);
}

void gemm_tn_acc_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) axpy_scalar(a[p * m + i], b + p * n, c + i * n, n);
}

void adam_update_scalar(double* param, double* m, double* v, const double* grad, std::size_t n, const AdamStep& s) {
  const double one_b1 = 1.0 - s.beta1;
  const double one_b2 = 1.0 - s.beta2;
  // lr * (m / bias1) / (sqrt(v / bias2) + eps) with the bias corrections folded into
  // two scalars: one division and one square root per parameter.
  const double step = s.lr / s.bias1;
  const double inv_sqrt_b2 = 1.0 / std::sqrt(s.bias2);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + one_b1 * g;
    v[i] = s.beta2 * v[i] + one_b2 * (g * g);
    param[i] -= (step * m[i]) / (std::sqrt(v[i]) * inv_sqrt_b2 + s.eps);
  }
}

void tanh_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

namespace detail {
const KernelTable scalar_table{
    Isa::scalar,       dot_scalar,         axpy_scalar, gemm_nt_bias_scalar, gemm_nn_acc_scalar,
    gemm_tn_acc_scalar, adam_update_scalar, tanh_scalar,
};
}  // namespace detail

}  // namespace certopt::kernels
