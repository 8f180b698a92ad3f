#pragma once

// Data-parallel inner loops used by the environment, the selector policy and
// the RL core. Each kernel has a scalar reference implementation and, on
// x86-64, an AVX2/FMA variant chosen at runtime. The variants agree to
// floating-point reassociation error; clipped_surrogate is bit-identical.

#include <cstddef>
#include <span>
#include <string_view>

namespace viarl::kernels {

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // sum_i (x_i - mean)^2
  double (*sum_sq_dev)(const double* x, std::size_t n, double mean);
  // out[r] = m[r,:] . x for a row-major rows x cols matrix
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out);
  // out[c] += sum_r w[r] * m[r,c]
  void (*gemv_t)(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out);
  // out[r] = cos(m[r,:], q); 0 when either vector has zero norm
  void (*cosine_rows)(const double* m, std::size_t rows, std::size_t cols, const double* q, double* out);
  // term[i] = min(r*a, clip(r, 1-eps, 1+eps)*a) and coef[i] = r*a when the
  // unclipped branch attains the min (ties go to the unclipped branch), else 0.
  void (*clipped_surrogate)(const double* ratio, const double* adv, std::size_t n, double eps,
                            double* term, double* coef);
};

const KernelTable& scalar_table();

// nullptr when the AVX2 translation unit is not built or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table used by the library. Defaults to the widest supported variant;
// VIARL_KERNELS=scalar|avx2 overrides at first use.
const KernelTable& active();

// Forces a variant by name ("scalar" or "avx2"). Returns false if unavailable.
bool select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

inline double sum_sq_dev(std::span<const double> x, double mean) {
  return active().sum_sq_dev(x.data(), x.size(), mean);
}

}  // namespace viarl::kernels
