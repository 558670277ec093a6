#include "bgm/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace bgm;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(a[i])));
}

}  // namespace

TEST_CASE("avx2 kernels match the scalar reference") {
  const kernels::KernelTable* fast = kernels::avx2_table();
  if (fast == nullptr) {
    MESSAGE("AVX2 unavailable on this machine; only the scalar path is exercised");
    return;
  }
  const kernels::KernelTable& ref = kernels::scalar_table();
  std::mt19937_64 rng(7);

  // Odd sizes exercise the vector tails.
  for (std::size_t rows : {1u, 3u, 32u})
    for (std::size_t in : {1u, 5u, 17u, 128u})
      for (std::size_t out : {1u, 4u, 9u, 128u}) {
        const auto x = randn(rng, rows * in), w = randn(rng, out * in), b = randn(rng, out);
        std::vector<double> y0(rows * out), y1(rows * out);
        ref.affine_forward(x.data(), rows, in, w.data(), b.data(), out, y0.data());
        fast->affine_forward(x.data(), rows, in, w.data(), b.data(), out, y1.data());
        expect_close(y0, y1);

        const auto dy = randn(rng, rows * out);
        std::vector<double> dx0(rows * in), dx1(rows * in);
        ref.affine_backward_input(dy.data(), rows, out, w.data(), in, dx0.data());
        fast->affine_backward_input(dy.data(), rows, out, w.data(), in, dx1.data());
        expect_close(dx0, dx1);

        std::vector<double> dw0(out * in, 0.5), dw1(out * in, 0.5), db0(out, 0.25), db1(out, 0.25);
        ref.affine_backward_params(dy.data(), x.data(), rows, in, out, dw0.data(), db0.data());
        fast->affine_backward_params(dy.data(), x.data(), rows, in, out, dw1.data(), db1.data());
        expect_close(dw0, dw1);
        expect_close(db0, db1);
      }

  for (std::size_t n : {1u, 7u, 64u, 1001u}) {
    const auto pre = randn(rng, n), g = randn(rng, n);
    std::vector<double> a0(n), a1(n);
    ref.leaky_relu_forward(pre.data(), n, 0.2, a0.data());
    fast->leaky_relu_forward(pre.data(), n, 0.2, a1.data());
    CHECK(a0 == a1);
    ref.leaky_relu_backward(pre.data(), g.data(), n, 0.2, a0.data());
    fast->leaky_relu_backward(pre.data(), g.data(), n, 0.2, a1.data());
    CHECK(a0 == a1);

    const auto mean = randn(rng, n), scale = randn(rng, n), noise = randn(rng, n);
    ref.scaled_add(mean.data(), scale.data(), noise.data(), n, a0.data());
    fast->scaled_add(mean.data(), scale.data(), noise.data(), n, a1.data());
    expect_close(a0, a1);

    CHECK(ref.dot(pre.data(), g.data(), n) ==
          doctest::Approx(fast->dot(pre.data(), g.data(), n)).epsilon(1e-12));

    kernels::AdamCoefficients c;
    c.lr = 0.01;
    c.bias_correction1 = 1.0 / (1.0 - 0.9 * 0.9);
    c.bias_correction2 = 1.0 / (1.0 - 0.999 * 0.999);
    for (double dir : {-1.0, 1.0}) {
      c.direction = dir;
      auto p0 = randn(rng, n), m0 = randn(rng, n), v0 = randn(rng, n);
      for (double& v : v0) v = v * v;
      auto p1 = p0, m1 = m0, v1 = v0;
      ref.adam_update(p0.data(), m0.data(), v0.data(), g.data(), n, c);
      fast->adam_update(p1.data(), m1.data(), v1.data(), g.data(), n, c);
      expect_close(p0, p1);
      expect_close(m0, m1);
      expect_close(v0, v1);
    }
  }
}

TEST_CASE("rows are computed independently of the batch") {
  std::mt19937_64 rng(3);
  const std::size_t in = 13, out = 11, rows = 6;
  const auto x = randn(rng, rows * in), w = randn(rng, out * in), b = randn(rng, out);
  for (const kernels::KernelTable* t : {&kernels::scalar_table(), kernels::avx2_table()}) {
    if (t == nullptr) continue;
    std::vector<double> all(rows * out), one(out);
    t->affine_forward(x.data(), rows, in, w.data(), b.data(), out, all.data());
    for (std::size_t r = 0; r < rows; ++r) {
      t->affine_forward(x.data() + r * in, 1, in, w.data(), b.data(), out, one.data());
      for (std::size_t o = 0; o < out; ++o) CHECK(one[o] == all[r * out + o]);
    }
  }
}

TEST_CASE("kernel selection") {
  CHECK(kernels::select("scalar"));
  CHECK(kernels::active().name == "scalar");
  CHECK_FALSE(kernels::select("sse9"));
  if (kernels::avx2_table() != nullptr) {
    CHECK(kernels::select("avx2"));
    CHECK(kernels::active().name == "avx2");
  }
}
