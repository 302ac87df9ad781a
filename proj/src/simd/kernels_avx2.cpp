// AVX2 variants. This translation unit is compiled with -mavx2 (no -mfma) and
// is only entered after a runtime CPU check.

#include "advp/simd/kernels.hpp"

#if defined(ADVP_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>

namespace advp::simd {
namespace {

// Accumulates c[j..j+W) over p in order, W = 4 * Regs.
template <int Regs>
inline void gemm_row_block(const double* a, std::size_t a_stride, const double* b,
                           std::size_t n, double* c, std::size_t k) {
  __m256d acc[Regs];
  for (int r = 0; r < Regs; ++r) acc[r] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d av = _mm256_broadcast_sd(a + p * a_stride);
    const double* brow = b + p * n;
    for (int r = 0; r < Regs; ++r)
      acc[r] = _mm256_add_pd(acc[r], _mm256_mul_pd(av, _mm256_loadu_pd(brow + 4 * r)));
  }
  for (int r = 0; r < Regs; ++r) _mm256_storeu_pd(c + 4 * r, acc[r]);
}

inline void gemm_row_tail(const double* a, std::size_t a_stride, const double* b,
                          std::size_t n, double* c, std::size_t k, std::size_t j0) {
  for (std::size_t j = j0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a[p * a_stride] * b[p * n + j];
    c[j] = acc;
  }
}

// Shared driver: row i of the left operand is a[i * row_step + p * a_stride].
inline void gemm_driver(const double* a, std::size_t row_step, std::size_t a_stride,
                        const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * row_step;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) gemm_row_block<8>(arow, a_stride, b + j, n, crow + j, k);
    for (; j + 4 <= n; j += 4) gemm_row_block<1>(arow, a_stride, b + j, n, crow + j, k);
    if (j < n) gemm_row_tail(arow, a_stride, b, n, crow, k, j);
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  gemm_driver(a, k, 1, b, c, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  gemm_driver(a, 1, m, b, c, m, k, n);
}

template <typename VecOp, typename ScalarOp>
inline void binary(const double* a, const double* b, double* out, std::size_t n, VecOp vop,
                   ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
         [](double x, double y) { return x + y; });
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
         [](double x, double y) { return x - y; });
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
         [](double x, double y) { return x * y; });
}

void accumulate(const double* x, double* y, std::size_t n) { add(y, x, y, n); }

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void accumulate_mul(const double* x, const double* z, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(z + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += x[i] * z[i];
}

void add_row_bias(const double* x, const double* bias, double* out, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) add(x + r * cols, bias, out + r * cols, cols);
}

void accumulate_rows(const double* g, double* bias_grad, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) accumulate(g + r * cols, bias_grad, cols);
}

void relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, v));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d contrib = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), contrib));
  }
  for (; i < n; ++i) gx[i] += x[i] > 0.0 ? gy[i] : 0.0;
}

void tanh_backward(const double* y, const double* gy, double* gx, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d yv = _mm256_loadu_pd(y + i);
    const __m256d d = _mm256_sub_pd(one, _mm256_mul_pd(yv, yv));
    const __m256d contrib = _mm256_mul_pd(_mm256_loadu_pd(gy + i), d);
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), contrib));
  }
  for (; i < n; ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
}

void adam_update(double* param, double* m, double* v, const double* grad, std::size_t n,
                 const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(one_minus_b1);
  const __m256d omb2 = _mm256_set1_pd(one_minus_b2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(omb1, g));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(mv, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    const double gi = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * gi;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (gi * gi);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] = param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{
      Isa::avx2,  gemm_nn,        gemm_tn, add,           sub,           mul,
      accumulate, axpy,           accumulate_mul, add_row_bias, accumulate_rows, relu,
      relu_backward, tanh_backward, adam_update,
  };
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

}  // namespace advp::simd

#else

namespace advp::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace advp::simd

#endif
