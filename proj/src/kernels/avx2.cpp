// Compiled with -mavx2 -mfma. Only reached through avx2_table(), which checks
// CPU support before handing the table out.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "viarl/kernels.hpp"

namespace viarl::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double sum_sq_dev_avx2(const double* x, std::size_t n, double mean) {
  const __m256d mu = _mm256_set1_pd(mean);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), mu);
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(x + i + 4), mu);
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), mu);
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = x[i] - mean;
    acc += d * d;
  }
  return acc;
}

void gemv_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_avx2(m + r * cols, x, cols);
}

void gemv_t_avx2(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double wr = w[r];
    if (wr == 0.0) continue;
    const __m256d wv = _mm256_set1_pd(wr);
    const double* row = m + r * cols;
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d o = _mm256_loadu_pd(out + c);
      _mm256_storeu_pd(out + c, _mm256_fmadd_pd(wv, _mm256_loadu_pd(row + c), o));
    }
    for (; c < cols; ++c) out[c] += wr * row[c];
  }
}

void cosine_rows_avx2(const double* m, std::size_t rows, std::size_t cols, const double* q, double* out) {
  const double qn = std::sqrt(dot_avx2(q, q, cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    __m256d d = _mm256_setzero_pd();
    __m256d nn = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d v = _mm256_loadu_pd(row + c);
      d = _mm256_fmadd_pd(v, _mm256_loadu_pd(q + c), d);
      nn = _mm256_fmadd_pd(v, v, nn);
    }
    double ds = hsum(d), ns = hsum(nn);
    for (; c < cols; ++c) {
      ds += row[c] * q[c];
      ns += row[c] * row[c];
    }
    const double denom = std::sqrt(ns) * qn;
    out[r] = denom > 0.0 ? std::clamp(ds / denom, -1.0, 1.0) : 0.0;
  }
}

void clipped_surrogate_avx2(const double* ratio, const double* adv, std::size_t n, double eps,
                            double* term, double* coef) {
  const double lo_s = 1.0 - eps;
  const double hi_s = 1.0 + eps;
  const __m256d lo = _mm256_set1_pd(lo_s);
  const __m256d hi = _mm256_set1_pd(hi_s);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_loadu_pd(ratio + i);
    const __m256d a = _mm256_loadu_pd(adv + i);
    const __m256d unclipped = _mm256_mul_pd(r, a);
    // max(lo, min(r, hi)) with the same operand order as std::max/std::min
    const __m256d clipped = _mm256_mul_pd(_mm256_max_pd(_mm256_min_pd(r, hi), lo), a);
    const __m256d active = _mm256_cmp_pd(unclipped, clipped, _CMP_LE_OQ);
    _mm256_storeu_pd(term + i, _mm256_blendv_pd(clipped, unclipped, active));
    _mm256_storeu_pd(coef + i, _mm256_blendv_pd(zero, unclipped, active));
  }
  for (; i < n; ++i) {
    const double r = ratio[i];
    const double a = adv[i];
    const double unclipped = r * a;
    const double clipped = std::max(lo_s, std::min(r, hi_s)) * a;
    const bool active = unclipped <= clipped;
    term[i] = active ? unclipped : clipped;
    coef[i] = active ? unclipped : 0.0;
  }
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{
      "avx2",          dot_avx2,         sum_avx2,
      sum_sq_dev_avx2, gemv_avx2,        gemv_t_avx2,
      cosine_rows_avx2, clipped_surrogate_avx2,
  };
  return table;
}

}  // namespace viarl::kernels
