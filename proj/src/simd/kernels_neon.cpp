// NEON variants for aarch64. Two doubles per register; vfmaq is avoided so
// rounding matches the scalar reference.

#include "advp/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace advp::simd {
namespace {

inline void gemm_driver(const double* a, std::size_t row_step, std::size_t a_stride,
                        const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * row_step;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      float64x2_t acc0 = vdupq_n_f64(0.0), acc1 = acc0, acc2 = acc0, acc3 = acc0;
      for (std::size_t p = 0; p < k; ++p) {
        const float64x2_t av = vdupq_n_f64(arow[p * a_stride]);
        const double* brow = b + p * n + j;
        acc0 = vaddq_f64(acc0, vmulq_f64(av, vld1q_f64(brow)));
        acc1 = vaddq_f64(acc1, vmulq_f64(av, vld1q_f64(brow + 2)));
        acc2 = vaddq_f64(acc2, vmulq_f64(av, vld1q_f64(brow + 4)));
        acc3 = vaddq_f64(acc3, vmulq_f64(av, vld1q_f64(brow + 6)));
      }
      vst1q_f64(crow + j, acc0);
      vst1q_f64(crow + j + 2, acc1);
      vst1q_f64(crow + j + 4, acc2);
      vst1q_f64(crow + j + 6, acc3);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p * a_stride] * b[p * n + j];
      crow[j] = acc;
    }
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

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void accumulate(const double* x, double* y, std::size_t n) { add(y, x, y, n); }

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(av, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += a * x[i];
}

void accumulate_mul(const double* x, const double* z, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(vld1q_f64(x + i), vld1q_f64(z + i))));
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
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? gy[i] : 0.0;
}

void tanh_backward(const double* y, const double* gy, double* gx, std::size_t n) {
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t yv = vld1q_f64(y + i);
    const float64x2_t d = vsubq_f64(one, vmulq_f64(yv, yv));
    vst1q_f64(gx + i, vaddq_f64(vld1q_f64(gx + i), vmulq_f64(vld1q_f64(gy + i), d)));
  }
  for (; i < n; ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
}

void adam_update(double* param, double* m, double* v, const double* grad, std::size_t n,
                 const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] = param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{
      Isa::neon,  gemm_nn,        gemm_tn, add,           sub,           mul,
      accumulate, axpy,           accumulate_mul, add_row_bias, accumulate_rows, relu,
      relu_backward, tanh_backward, adam_update,
  };
  return &table;
}

}  // namespace advp::simd

#else

namespace advp::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace advp::simd

#endif
