#pragma once

#include <cstddef>
#include <string_view>

// Dense arithmetic kernels used by the network, optimizer and samplers.
//
// Every kernel exists as a portable scalar reference and, where the CPU
// supports it, an AVX2+FMA variant. The active table is chosen once at
// startup; BGM_KERNELS=scalar in the environment forces the reference path.
//
// Row-wise kernels (affine_forward, affine_backward_input) compute every row
// with the same operation order no matter how many rows are passed in, so a
// batch of chains evaluated together is bitwise identical to evaluating
// each chain alone.

namespace bgm::kernels {

struct AdamCoefficients {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double bias_correction1 = 1.0;  // 1 / (1 - beta1^t)
  double bias_correction2 = 1.0;  // 1 / (1 - beta2^t)
  double direction = -1.0;        // -1 descent, +1 ascent
};

struct KernelTable {
  std::string_view name;

  // y[r, o] = bias[o] + sum_k x[r, k] * w[o, k]   (w is out x in, row-major)
  void (*affine_forward)(const double* x, std::size_t rows, std::size_t in,
                         const double* w, const double* bias, std::size_t out,
                         double* y);

  // dx[r, k] = sum_o dy[r, o] * w[o, k]   (overwrites dx)
  void (*affine_backward_input)(const double* dy, std::size_t rows,
                                std::size_t out, const double* w,
                                std::size_t in, double* dx);

  // dw[o, k] += sum_r dy[r, o] * x[r, k];  db[o] += sum_r dy[r, o]
  void (*affine_backward_params)(const double* dy, const double* x,
                                 std::size_t rows, std::size_t in,
                                 std::size_t out, double* dw, double* db);

  void (*leaky_relu_forward)(const double* pre, std::size_t n, double slope,
                             double* out);

  // grad_in = grad_out * (pre >= 0 ? 1 : slope)
  void (*leaky_relu_backward)(const double* pre, const double* grad_out,
                              std::size_t n, double slope, double* grad_in);

  void (*adam_update)(double* params, double* m, double* v, const double* grad,
                      std::size_t n, const AdamCoefficients& c);

  // out = mean + scale * noise
  void (*scaled_add)(const double* mean, const double* scale,
                     const double* noise, std::size_t n, double* out);

  double (*dot)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table every caller should use.
const KernelTable& active();

// Switch the active table ("scalar" or "avx2"). Returns false if the
// requested variant is unavailable. Not thread-safe; meant for tests and
// startup configuration.
bool select(std::string_view name);

}  // namespace bgm::kernels
