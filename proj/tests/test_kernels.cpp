#include <doctest.h>

#include <stdexcept>

#include <bit>
#include <cmath>
#include <vector>

#include "viarl/kernels.hpp"
#include "viarl/rng.hpp"

using namespace viarl;

namespace {

std::vector<double> randn(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

bool close(double a, double b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

// Sizes that hit the empty case, sub-vector tails and several full lanes.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 100, 1027};

}  // namespace

TEST_CASE("scalar kernels on hand-checked inputs") {
  const auto& k = kernels::scalar_table();
  const double a[] = {1, 2, 3};
  const double b[] = {4, -5, 6};
  CHECK(k.dot(a, b, 3) == 12.0);
  CHECK(k.sum(a, 3) == 6.0);
  CHECK(k.sum_sq_dev(a, 3, 2.0) == 2.0);

  const double m[] = {1, 0, 0, 1, 1, 1};  // 3 x 2
  const double x[] = {2, 3};
  double out[3] = {};
  k.gemv(m, 3, 2, x, out);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 3.0);
  CHECK(out[2] == 5.0);

  double acc[2] = {1, 1};
  const double w[] = {1, 2, 3};
  k.gemv_t(m, 3, 2, w, acc);
  CHECK(acc[0] == 5.0);
  CHECK(acc[1] == 6.0);

  const double q[] = {1, 0};
  const double rows[] = {3, 0, -2, 0, 0, 0, 1, 1};
  double cos[4];
  k.cosine_rows(rows, 4, 2, q, cos);
  CHECK(cos[0] == 1.0);
  CHECK(cos[1] == -1.0);
  CHECK(cos[2] == 0.0);  // zero-norm row
  CHECK(cos[3] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("clipped surrogate branch selection") {
  const auto& k = kernels::scalar_table();
  const double ratio[] = {1.5, 1.5, 0.5, 0.5, 1.0, 1.2};
  const double adv[] = {1.0, -1.0, 1.0, -1.0, 2.0, 1.0};
  double term[6], coef[6];
  k.clipped_surrogate(ratio, adv, 6, 0.2, term, coef);
  CHECK(term[0] == doctest::Approx(1.2));
  CHECK(coef[0] == 0.0);  // clipped and binding
  CHECK(term[1] == -1.5);
  CHECK(coef[1] == -1.5);
  CHECK(term[2] == 0.5);
  CHECK(coef[2] == 0.5);
  CHECK(term[3] == doctest::Approx(-0.8));
  CHECK(coef[3] == 0.0);
  CHECK(term[4] == 2.0);
  CHECK(coef[4] == 2.0);
  CHECK(term[5] == 1.2);  // at the boundary the unclipped branch is kept
  CHECK(coef[5] == 1.2);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const auto* simd = kernels::avx2_table();
  if (!simd) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& ref = kernels::scalar_table();
  Rng rng(42);
  for (const std::size_t n : kSizes) {
    CAPTURE(n);
    const auto a = randn(rng, n);
    const auto b = randn(rng, n);
    CHECK(close(simd->dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n)));
    CHECK(close(simd->sum(a.data(), n), ref.sum(a.data(), n)));
    CHECK(close(simd->sum_sq_dev(a.data(), n, 0.3), ref.sum_sq_dev(a.data(), n, 0.3)));

    for (const std::size_t cols : {std::size_t{1}, std::size_t{3}, std::size_t{6}, std::size_t{16}, std::size_t{19}}) {
      CAPTURE(cols);
      const auto m = randn(rng, n * cols);
      const auto x = randn(rng, cols);
      std::vector<double> o1(n), o2(n);
      simd->gemv(m.data(), n, cols, x.data(), o1.data());
      ref.gemv(m.data(), n, cols, x.data(), o2.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(close(o1[i], o2[i]));

      std::vector<double> t1(cols, 0.5), t2(cols, 0.5);
      simd->gemv_t(m.data(), n, cols, a.data(), t1.data());
      ref.gemv_t(m.data(), n, cols, a.data(), t2.data());
      for (std::size_t c = 0; c < cols; ++c) CHECK(close(t1[c], t2[c]));

      simd->cosine_rows(m.data(), n, cols, x.data(), o1.data());
      ref.cosine_rows(m.data(), n, cols, x.data(), o2.data());
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(close(o1[i], o2[i]));
        CHECK(std::abs(o1[i]) <= 1.0);
      }
    }

    std::vector<double> ratio(n);
    for (double& r : ratio) r = std::exp(0.4 * rng.normal());
    std::vector<double> t1(n), c1(n), t2(n), c2(n);
    simd->clipped_surrogate(ratio.data(), a.data(), n, 0.2, t1.data(), c1.data());
    ref.clipped_surrogate(ratio.data(), a.data(), n, 0.2, t2.data(), c2.data());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::bit_cast<std::uint64_t>(t1[i]) == std::bit_cast<std::uint64_t>(t2[i]));
      CHECK(std::bit_cast<std::uint64_t>(c1[i]) == std::bit_cast<std::uint64_t>(c2[i]));
    }
  }
}

TEST_CASE("runtime selection") {
  const auto before = kernels::active().name;
  CHECK(kernels::select("scalar"));
  CHECK(kernels::active().name == "scalar");
  CHECK_FALSE(kernels::select("neon"));
  if (kernels::avx2_table()) {
    CHECK(kernels::select("avx2"));
    CHECK(kernels::active().name == "avx2");
  } else {
    CHECK_FALSE(kernels::select("avx2"));
  }
  CHECK(kernels::select(before));
}
