#include "bgm/adam.hpp"

#include "bgm/common.hpp"
#include "bgm/kernels.hpp"

#include <cmath>
#include <string>

namespace bgm {

void adam_step(std::span<double> m, std::span<double> v, std::uint64_t& t, double lr,
               std::span<double> params, std::span<const double> grad, bool maximize,
               double beta1, double beta2, double eps) {
  if (params.size() != grad.size() || m.size() != params.size() || v.size() != params.size())
    throw ConfigError("adam_step: length mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
  ++t;
  kernels::AdamCoefficients c;
  c.lr = lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.eps = eps;
  c.bias_correction1 = 1.0 / (1.0 - std::pow(beta1, static_cast<double>(t)));
  c.bias_correction2 = 1.0 / (1.0 - std::pow(beta2, static_cast<double>(t)));
  c.direction = maximize ? 1.0 : -1.0;
  kernels::active().adam_update(params.data(), m.data(), v.data(), grad.data(), params.size(), c);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               bool maximize) {
  adam_step(state.m, state.v, state.t, state.lr, params, grad, maximize, state.beta1,
            state.beta2, state.eps);
}

}  // namespace bgm
