#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bgm {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double learning_rate = 0.005)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

// One bias-corrected Adam step. `maximize` flips the sign of the step
// (gradient ascent). Throws NumericError on a non-finite gradient entry
// without touching the state or the parameters.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               bool maximize);

// Same update on caller-owned moment buffers; used for the per-row latent
// optimizers, which keep their moments in one contiguous table.
void adam_step(std::span<double> m, std::span<double> v, std::uint64_t& t, double lr,
               std::span<double> params, std::span<const double> grad, bool maximize,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace bgm
