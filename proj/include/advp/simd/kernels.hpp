#pragma once

// Dense double-precision kernels behind the autodiff and optimizer layers.
//
// Every vector variant parallelizes across independent output elements and
// accumulates each element in the same order as the scalar reference, using
// only correctly rounded IEEE operations (add, sub, mul, div, sqrt). Results
// are therefore bitwise identical across variants; tests assert exactly that.

#include <cstddef>
#include <string_view>

namespace advp::simd {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;

  // c(m x n) = a(m x k) * b(k x n)
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c(m x n) = a(k x m)^T * b(k x n)
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);

  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // y += x
  void (*accumulate)(const double* x, double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y += x * z
  void (*accumulate_mul)(const double* x, const double* z, double* y, std::size_t n);
  // out[r, c] = x[r, c] + bias[c]
  void (*add_row_bias)(const double* x, const double* bias, double* out, std::size_t rows,
                       std::size_t cols);
  // bias_grad[c] += sum_r g[r, c], rows visited in order
  void (*accumulate_rows)(const double* g, double* bias_grad, std::size_t rows,
                          std::size_t cols);
  void (*relu)(const double* x, double* out, std::size_t n);
  // gx += (x > 0) ? gy : 0
  void (*relu_backward)(const double* x, const double* gy, double* gx, std::size_t n);
  // gx += gy * (1 - y * y)
  void (*tanh_backward)(const double* y, const double* gy, double* gx, std::size_t n);
  void (*adam_update)(double* param, double* m, double* v, const double* grad, std::size_t n,
                      const AdamCoeffs& c);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The table used by the library. Chosen once from CPU features; the
// ADVP_KERNELS environment variable ("scalar", "avx2", "neon") overrides.
const KernelTable& active();

// Test hook; throws std::invalid_argument if the variant is unavailable.
void force(Isa isa);

}  // namespace advp::simd
