#include <algorithm>
#include <cmath>

#include "viarl/kernels.hpp"

namespace viarl::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sum_sq_dev_scalar(const double* x, std::size_t n, double mean) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    acc += d * d;
  }
  return acc;
}

void gemv_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_scalar(m + r * cols, x, cols);
}

void gemv_t_scalar(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double wr = w[r];
    if (wr == 0.0) continue;
    const double* row = m + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += wr * row[c];
  }
}

void cosine_rows_scalar(const double* m, std::size_t rows, std::size_t cols, const double* q, double* out) {
  const double qn = std::sqrt(dot_scalar(q, q, cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    double d = 0.0, nn = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      d += row[c] * q[c];
      nn += row[c] * row[c];
    }
    const double denom = std::sqrt(nn) * qn;
    out[r] = denom > 0.0 ? std::clamp(d / denom, -1.0, 1.0) : 0.0;
  }
}

void clipped_surrogate_scalar(const double* ratio, const double* adv, std::size_t n, double eps,
                              double* term, double* coef) {
  const double lo = 1.0 - eps;
  const double hi = 1.0 + eps;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ratio[i];
    const double a = adv[i];
    const double unclipped = r * a;
    const double clipped = std::max(lo, std::min(r, hi)) * a;
    const bool active = unclipped <= clipped;
    term[i] = active ? unclipped : clipped;
    coef[i] = active ? unclipped : 0.0;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",          dot_scalar,         sum_scalar,
      sum_sq_dev_scalar, gemv_scalar,        gemv_t_scalar,
      cosine_rows_scalar, clipped_surrogate_scalar,
  };
  return table;
}

}  // namespace viarl::kernels
