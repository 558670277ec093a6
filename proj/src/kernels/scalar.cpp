#include "bgm/kernels.hpp"

#include <cmath>

namespace bgm::kernels {
namespace {

void affine_forward(const double* x, std::size_t rows, std::size_t in,
                    const double* w, const double* bias, std::size_t out,
                    double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xr[k];
      yr[o] = acc + bias[o];
    }
  }
}

void affine_backward_input(const double* dy, std::size_t rows,
                           std::size_t out, const double* w, std::size_t in,
                           double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* dxr = dx + r * in;
    const double* dyr = dy + r * out;
    for (std::size_t k = 0; k < in; ++k) dxr[k] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      const double* wo = w + o * in;
      for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wo[k];
    }
  }
}

void affine_backward_params(const double* dy, const double* x,
                            std::size_t rows, std::size_t in, std::size_t out,
                            double* dw, double* db) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    const double* dyr = dy + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      double* dwo = dw + o * in;
      for (std::size_t k = 0; k < in; ++k) dwo[k] += g * xr[k];
      db[o] += g;
    }
  }
}

void leaky_relu_forward(const double* pre, std::size_t n, double slope,
                        double* out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = pre[i] >= 0.0 ? pre[i] : slope * pre[i];
}

void leaky_relu_backward(const double* pre, const double* grad_out,
                         std::size_t n, double slope, double* grad_in) {
  for (std::size_t i = 0; i < n; ++i)
    grad_in[i] = pre[i] >= 0.0 ? grad_out[i] : slope * grad_out[i];
}

void adam_update(double* params, double* m, double* v, const double* grad,
                 std::size_t n, const AdamCoefficients& c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] * c.bias_correction1;
    const double v_hat = v[i] * c.bias_correction2;
    params[i] += c.direction * c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

void scaled_add(const double* mean, const double* scale, const double* noise,
                std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = mean[i] + scale[i] * noise[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",           affine_forward,      affine_backward_input,
      affine_backward_params, leaky_relu_forward, leaky_relu_backward,
      adam_update,        scaled_add,          dot,
  };
  return table;
}

}  // namespace bgm::kernels
