#include "bgm/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>

#define BGM_AVX2 __attribute__((target("avx2,fma")))

namespace bgm::kernels {
namespace {

BGM_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Each (row, output) pair is reduced as: one 4-lane accumulator over full
// chunks, horizontal sum, scalar fma over the tail, then the bias. Blocking
// only interleaves independent pairs, so grouping never changes a result.
template <int R, int O>
BGM_AVX2 inline void forward_block(const double* x, std::size_t in,
                                   const double* w, const double* bias,
                                   std::size_t out, double* y) {
  __m256d acc[R][O];
  for (int r = 0; r < R; ++r)
    for (int o = 0; o < O; ++o) acc[r][o] = _mm256_setzero_pd();
  const std::size_t full = in & ~std::size_t{3};
  for (std::size_t k = 0; k < full; k += 4) {
    __m256d wv[O];
    for (int o = 0; o < O; ++o) wv[o] = _mm256_loadu_pd(w + o * in + k);
    for (int r = 0; r < R; ++r) {
      const __m256d xv = _mm256_loadu_pd(x + r * in + k);
      for (int o = 0; o < O; ++o) acc[r][o] = _mm256_fmadd_pd(wv[o], xv, acc[r][o]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int o = 0; o < O; ++o) {
      double s = hsum(acc[r][o]);
      for (std::size_t k = full; k < in; ++k)
        s = __builtin_fma(w[o * in + k], x[r * in + k], s);
      y[r * out + o] = s + bias[o];
    }
  }
}

template <int R>
BGM_AVX2 inline void forward_rows(const double* x, std::size_t in,
                                  const double* w, const double* bias,
                                  std::size_t out, double* y) {
  std::size_t o = 0;
  for (; o + 2 <= out; o += 2)
    forward_block<R, 2>(x, in, w + o * in, bias + o, out, y + o);
  for (; o < out; ++o) forward_block<R, 1>(x, in, w + o * in, bias + o, out, y + o);
}

BGM_AVX2 void affine_forward(const double* x, std::size_t rows, std::size_t in,
                             const double* w, const double* bias,
                             std::size_t out, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) forward_rows<4>(x + r * in, in, w, bias, out, y + r * out);
  for (; r < rows; ++r) forward_rows<1>(x + r * in, in, w, bias, out, y + r * out);
}

// Each dx[r, k] is a sequential fma chain over o starting from zero.
template <int R, int C>
BGM_AVX2 inline void backward_input_block(const double* dy, std::size_t out,
                                          const double* w, std::size_t in,
                                          std::size_t k0, double* dx) {
  __m256d acc[R][C];
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) acc[r][c] = _mm256_setzero_pd();
  for (std::size_t o = 0; o < out; ++o) {
    __m256d wv[C];
    for (int c = 0; c < C; ++c) wv[c] = _mm256_loadu_pd(w + o * in + k0 + 4 * c);
    for (int r = 0; r < R; ++r) {
      const __m256d g = _mm256_broadcast_sd(dy + r * out + o);
      for (int c = 0; c < C; ++c) acc[r][c] = _mm256_fmadd_pd(g, wv[c], acc[r][c]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) _mm256_storeu_pd(dx + r * in + k0 + 4 * c, acc[r][c]);
}

template <int R>
BGM_AVX2 inline void backward_input_rows(const double* dy, std::size_t out,
                                         const double* w, std::size_t in,
                                         double* dx) {
  const std::size_t full = in & ~std::size_t{3};
  std::size_t k = 0;
  for (; k + 16 <= full; k += 16) backward_input_block<R, 4>(dy, out, w, in, k, dx);
  for (; k < full; k += 4) backward_input_block<R, 1>(dy, out, w, in, k, dx);
  for (; k < in; ++k) {
    for (int r = 0; r < R; ++r) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s = __builtin_fma(dy[r * out + o], w[o * in + k], s);
      dx[r * in + k] = s;
    }
  }
}

BGM_AVX2 void affine_backward_input(const double* dy, std::size_t rows,
                                    std::size_t out, const double* w,
                                    std::size_t in, double* dx) {
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) backward_input_rows<2>(dy + r * out, out, w, in, dx + r * in);
  for (; r < rows; ++r) backward_input_rows<1>(dy + r * out, out, w, in, dx + r * in);
}

BGM_AVX2 void affine_backward_params(const double* dy, const double* x,
                                     std::size_t rows, std::size_t in,
                                     std::size_t out, double* dw, double* db) {
  const std::size_t full = in & ~std::size_t{3};
  for (std::size_t o = 0; o < out; ++o) {
    double* dwo = dw + o * in;
    std::size_t k = 0;
    for (; k + 16 <= full; k += 16) {
      __m256d a0 = _mm256_loadu_pd(dwo + k);
      __m256d a1 = _mm256_loadu_pd(dwo + k + 4);
      __m256d a2 = _mm256_loadu_pd(dwo + k + 8);
      __m256d a3 = _mm256_loadu_pd(dwo + k + 12);
      for (std::size_t r = 0; r < rows; ++r) {
        const __m256d g = _mm256_broadcast_sd(dy + r * out + o);
        const double* xr = x + r * in + k;
        a0 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr), a0);
        a1 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 4), a1);
        a2 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 8), a2);
        a3 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 12), a3);
      }
      _mm256_storeu_pd(dwo + k, a0);
      _mm256_storeu_pd(dwo + k + 4, a1);
      _mm256_storeu_pd(dwo + k + 8, a2);
      _mm256_storeu_pd(dwo + k + 12, a3);
    }
    for (; k < full; k += 4) {
      __m256d a = _mm256_loadu_pd(dwo + k);
      for (std::size_t r = 0; r < rows; ++r)
        a = _mm256_fmadd_pd(_mm256_broadcast_sd(dy + r * out + o),
                            _mm256_loadu_pd(x + r * in + k), a);
      _mm256_storeu_pd(dwo + k, a);
    }
    for (; k < in; ++k) {
      double s = dwo[k];
      for (std::size_t r = 0; r < rows; ++r) s = __builtin_fma(dy[r * out + o], x[r * in + k], s);
      dwo[k] = s;
    }
    double b = db[o];
    for (std::size_t r = 0; r < rows; ++r) b += dy[r * out + o];
    db[o] = b;
  }
}

BGM_AVX2 void leaky_relu_forward(const double* pre, std::size_t n, double slope,
                                 double* out) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d s = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_loadu_pd(pre + i);
    const __m256d neg = _mm256_mul_pd(s, p);
    const __m256d keep = _mm256_cmp_pd(p, zero, _CMP_GE_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(neg, p, keep));
  }
  for (; i < n; ++i) out[i] = pre[i] >= 0.0 ? pre[i] : slope * pre[i];
}

BGM_AVX2 void leaky_relu_backward(const double* pre, const double* grad_out,
                                  std::size_t n, double slope, double* grad_in) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d s = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_loadu_pd(pre + i);
    const __m256d g = _mm256_loadu_pd(grad_out + i);
    const __m256d keep = _mm256_cmp_pd(p, zero, _CMP_GE_OQ);
    _mm256_storeu_pd(grad_in + i, _mm256_blendv_pd(_mm256_mul_pd(s, g), g, keep));
  }
  for (; i < n; ++i) grad_in[i] = pre[i] >= 0.0 ? grad_out[i] : slope * grad_out[i];
}

BGM_AVX2 void adam_update(double* params, double* m, double* v,
                          const double* grad, std::size_t n,
                          const AdamCoefficients& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d one_b1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d one_b2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
  const __m256d eps = _mm256_set1_pd(c.eps);
  const __m256d step = _mm256_set1_pd(c.direction * c.lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(one_b1, g));
    const __m256d vi = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i),
                                       _mm256_mul_pd(one_b2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, bc2)), eps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(mi, bc1), denom);
    _mm256_storeu_pd(params + i, _mm256_fmadd_pd(step, upd, _mm256_loadu_pd(params + i)));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = __builtin_fma(c.beta1, m[i], (1.0 - c.beta1) * g);
    v[i] = __builtin_fma(c.beta2, v[i], (1.0 - c.beta2) * (g * g));
    const double upd = (m[i] * c.bias_correction1) /
                       (std::sqrt(v[i] * c.bias_correction2) + c.eps);
    params[i] = __builtin_fma(c.direction * c.lr, upd, params[i]);
  }
}

BGM_AVX2 void scaled_add(const double* mean, const double* scale,
                         const double* noise, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(scale + i),
                                              _mm256_loadu_pd(noise + i),
                                              _mm256_loadu_pd(mean + i)));
  for (; i < n; ++i) out[i] = __builtin_fma(scale[i], noise[i], mean[i]);
}

BGM_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s = __builtin_fma(a[i], b[i], s);
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{
      "avx2",           affine_forward,      affine_backward_input,
      affine_backward_params, leaky_relu_forward, leaky_relu_backward,
      adam_update,      scaled_add,          dot,
  };
  return supported ? &table : nullptr;
}

}  // namespace bgm::kernels

#else

namespace bgm::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace bgm::kernels

#endif
