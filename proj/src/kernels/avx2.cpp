// Compiled with -mavx2 -mfma; only reached when the dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <cmath>

#include "certopt/kernels.hpp"

namespace certopt::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// y += alpha * x, computed as a separate multiply and add so it matches the scalar kernel bitwise.
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Same summation order as one lane group of the 4 x 2 block below, so a row's result
// does not depend on where it sits in the batch.
double dot_one_acc(const double* a, const double* b, std::size_t k) {
  const std::size_t k4 = k & ~std::size_t{3};
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k4; p += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + p), _mm256_loadu_pd(b + p), acc);
  double r = hsum(acc);
  for (std::size_t p = k4; p < k; ++p) r += a[p] * b[p];
  return r;
}

void gemm_nt_bias_avx2(const double* a, const double* b, const double* bias, double* c, std::size_t m,
                       std::size_t n, std::size_t k) {
  const std::size_t k4 = k & ~std::size_t{3};
  std::size_t i = 0;
  // 4 x 2 register block: each loaded B vector is reused across four rows of A.
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k4; p += 4) {
        const __m256d vb0 = _mm256_loadu_pd(b0 + p);
        const __m256d vb1 = _mm256_loadu_pd(b1 + p);
        __m256d va = _mm256_loadu_pd(a0 + p);
        c00 = _mm256_fmadd_pd(va, vb0, c00);
        c01 = _mm256_fmadd_pd(va, vb1, c01);
        va = _mm256_loadu_pd(a1 + p);
        c10 = _mm256_fmadd_pd(va, vb0, c10);
        c11 = _mm256_fmadd_pd(va, vb1, c11);
        va = _mm256_loadu_pd(a2 + p);
        c20 = _mm256_fmadd_pd(va, vb0, c20);
        c21 = _mm256_fmadd_pd(va, vb1, c21);
        va = _mm256_loadu_pd(a3 + p);
        c30 = _mm256_fmadd_pd(va, vb0, c30);
        c31 = _mm256_fmadd_pd(va, vb1, c31);
      }
      double r[4][2] = {{hsum(c00), hsum(c01)}, {hsum(c10), hsum(c11)}, {hsum(c20), hsum(c21)}, {hsum(c30), hsum(c31)}};
      const double* rows[4] = {a0, a1, a2, a3};
      for (std::size_t p = k4; p < k; ++p) {
        for (int q = 0; q < 4; ++q) {
          r[q][0] += rows[q][p] * b0[p];
          r[q][1] += rows[q][p] * b1[p];
        }
      }
      for (int q = 0; q < 4; ++q) {
        double* crow = c + (i + q) * n + j;
        crow[0] = bias ? r[q][0] + bias[j] : r[q][0];
        crow[1] = bias ? r[q][1] + bias[j + 1] : r[q][1];
      }
    }
    for (; j < n; ++j) {
      const double* bj = b + j * k;
      for (int q = 0; q < 4; ++q) {
        const double d = dot_one_acc(a + (i + q) * k, bj, k);
        c[(i + q) * n + j] = bias ? d + bias[j] : d;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dot_one_acc(a + i * k, b + j * k, k);
      c[i * n + j] = bias ? d + bias[j] : d;
    }
  }
}

// C[i][j] += sum_p a(i, p) * B[p][j] with a(i, p) = A[i * sa + p * sp]; B is k x n
// row-major. Blocks of MR rows x 4*NV columns stay in registers across the whole p loop.
template <int MR, int NV>
inline void acc_block(const double* a, std::size_t sa, std::size_t sp, const double* b, double* c, std::size_t n,
                      std::size_t k, std::size_t i0, std::size_t j0) {
  __m256d acc[MR][NV];
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_loadu_pd(c + (i0 + r) * n + j0 + 4 * v);
  for (std::size_t p = 0; p < k; ++p) {
    __m256d vb[NV];
    for (int v = 0; v < NV; ++v) vb[v] = _mm256_loadu_pd(b + p * n + j0 + 4 * v);
    for (int r = 0; r < MR; ++r) {
      const __m256d va = _mm256_broadcast_sd(a + (i0 + r) * sa + p * sp);
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(va, vb[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) _mm256_storeu_pd(c + (i0 + r) * n + j0 + 4 * v, acc[r][v]);
}

template <int MR>
inline void acc_rows(const double* a, std::size_t sa, std::size_t sp, const double* b, double* c, std::size_t n,
                     std::size_t k, std::size_t i0) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) acc_block<MR, 2>(a, sa, sp, b, c, n, k, i0, j);
  for (; j + 4 <= n; j += 4) acc_block<MR, 1>(a, sa, sp, b, c, n, k, i0, j);
  for (; j < n; ++j) {
    for (int r = 0; r < MR; ++r) {
      double s = c[(i0 + r) * n + j];
      for (std::size_t p = 0; p < k; ++p) s += a[(i0 + r) * sa + p * sp] * b[p * n + j];
      c[(i0 + r) * n + j] = s;
    }
  }
}

void acc_general(const double* a, std::size_t sa, std::size_t sp, const double* b, double* c, std::size_t m,
                 std::size_t n, std::size_t k) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) acc_rows<4>(a, sa, sp, b, c, n, k, i);
  for (; i < m; ++i) acc_rows<1>(a, sa, sp, b, c, n, k, i);
}

void gemm_nn_acc_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  acc_general(a, k, 1, b, c, m, n, k);
}

void gemm_tn_acc_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  acc_general(a, 1, m, b, c, m, n, k);
}

// Same operation order as the scalar reference; bit-identical output.
void adam_update_avx2(double* param, double* m, double* v, const double* grad, std::size_t n, const AdamStep& s) {
  const double step_s = s.lr / s.bias1;
  const double inv_sqrt_b2_s = 1.0 / std::sqrt(s.bias2);
  const __m256d b1 = _mm256_set1_pd(s.beta1);
  const __m256d b2 = _mm256_set1_pd(s.beta2);
  const __m256d ob1 = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d ob2 = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d step = _mm256_set1_pd(step_s);
  const __m256d inv_sqrt_b2 = _mm256_set1_pd(inv_sqrt_b2_s);
  const __m256d eps = _mm256_set1_pd(s.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(ob1, g));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)), _mm256_mul_pd(ob2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_mul_pd(_mm256_sqrt_pd(vi), inv_sqrt_b2), eps);
    const __m256d delta = _mm256_div_pd(_mm256_mul_pd(step, mi), denom);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), delta));
  }
  const double one_b1 = 1.0 - s.beta1;
  const double one_b2 = 1.0 - s.beta2;
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + one_b1 * g;
    v[i] = s.beta2 * v[i] + one_b2 * (g * g);
    param[i] -= (step_s * m[i]) / (std::sqrt(v[i]) * inv_sqrt_b2_s + s.eps);
  }
}

// tanh on four lanes. |x| < 0.625: x + x^3 P(x^2)/Q(x^2) (Cephes rational form);
// otherwise 1 - 2 / (exp(2|x|) + 1) with a Pade exp after reduction by ln 2.
// Within a few ulp of std::tanh; NaN propagates.
inline __m256d tanh4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d ax = _mm256_min_pd(_mm256_andnot_pd(sign_mask, x), _mm256_set1_pd(22.0));
  const __m256d one = _mm256_set1_pd(1.0);

  // Small branch.
  const __m256d z = _mm256_mul_pd(ax, ax);
  __m256d p = _mm256_set1_pd(-9.64399179425052238628e-1);
  p = _mm256_add_pd(_mm256_mul_pd(p, z), _mm256_set1_pd(-9.92877231001918586564e1));
  p = _mm256_add_pd(_mm256_mul_pd(p, z), _mm256_set1_pd(-1.61468768441708447952e3));
  __m256d q = _mm256_add_pd(z, _mm256_set1_pd(1.12811678491632931402e2));
  q = _mm256_add_pd(_mm256_mul_pd(q, z), _mm256_set1_pd(2.23548839060100448583e3));
  q = _mm256_add_pd(_mm256_mul_pd(q, z), _mm256_set1_pd(4.84406305325125486048e3));
  const __m256d small = _mm256_add_pd(ax, _mm256_mul_pd(_mm256_mul_pd(ax, z), _mm256_div_pd(p, q)));

  // Large branch: e = exp(2|x|).
  const __m256d y = _mm256_add_pd(ax, ax);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(y, _mm256_set1_pd(1.4426950408889634073599)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_sub_pd(y, _mm256_mul_pd(n, _mm256_set1_pd(6.93145751953125e-1)));
  r = _mm256_sub_pd(r, _mm256_mul_pd(n, _mm256_set1_pd(1.42860682030941723212e-6)));
  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d pe = _mm256_set1_pd(1.26177193074810590878e-4);
  pe = _mm256_add_pd(_mm256_mul_pd(pe, rr), _mm256_set1_pd(3.02994407707441961300e-2));
  pe = _mm256_add_pd(_mm256_mul_pd(pe, rr), _mm256_set1_pd(9.99999999999999999910e-1));
  pe = _mm256_mul_pd(pe, r);
  __m256d qe = _mm256_set1_pd(3.00198505138664455042e-6);
  qe = _mm256_add_pd(_mm256_mul_pd(qe, rr), _mm256_set1_pd(2.52448340349684104192e-3));
  qe = _mm256_add_pd(_mm256_mul_pd(qe, rr), _mm256_set1_pd(2.27265548208155028766e-1));
  qe = _mm256_add_pd(_mm256_mul_pd(qe, rr), _mm256_set1_pd(2.00000000000000000009e0));
  __m256d e = _mm256_div_pd(pe, _mm256_sub_pd(qe, pe));
  e = _mm256_add_pd(one, _mm256_add_pd(e, e));
  // 2^n for 0 <= n <= 64: move n into the exponent field.
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
  const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
  const __m256d pow2 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52));
  e = _mm256_mul_pd(e, pow2);
  const __m256d large = _mm256_sub_pd(one, _mm256_div_pd(_mm256_set1_pd(2.0), _mm256_add_pd(e, one)));

  const __m256d use_small = _mm256_cmp_pd(ax, _mm256_set1_pd(0.625), _CMP_LT_OQ);
  __m256d t = _mm256_blendv_pd(large, small, use_small);
  t = _mm256_or_pd(t, _mm256_and_pd(x, sign_mask));
  return _mm256_blendv_pd(t, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
}

void tanh_avx2(double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, tanh4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    // The tail goes through the same lane arithmetic so results do not depend on position.
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    _mm256_store_pd(buf, tanh4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) x[j] = buf[j - i];
  }
}

}  // namespace

namespace detail {
const KernelTable avx2_table{
    Isa::avx2,       dot_avx2,         axpy_avx2, gemm_nt_bias_avx2, gemm_nn_acc_avx2,
    gemm_tn_acc_avx2, adam_update_avx2, tanh_avx2,
};
}  // namespace detail

}  // namespace certopt::kernels
