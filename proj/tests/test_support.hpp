#pragma once

// Shared helpers for the unit and acceptance suites: finite differences,
// error norms and small environment fixtures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "viarl/needle_env.hpp"
#include "viarl/rng.hpp"
#include "viarl/selector_policy.hpp"

namespace viarl::testing {

// Central differences of f around x, step h.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                             std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm2(d) / std::max({norm2(a), norm2(b), floor});
}

inline EnvConfig small_env(std::size_t frames = 32, std::size_t needle = 8, double temporal_prob = 0.3) {
  EnvConfig env;
  env.num_frames = frames;
  env.needle_len_min = needle;
  env.needle_len_max = needle;
  env.temporal_prob = temporal_prob;
  return env;
}

// Parameters with every entry drawn from N(0, scale^2).
inline PolicyParams random_params(Rng& rng, std::vector<std::size_t> buckets, PolicyMode mode = {},
                                  double scale = 1.0) {
  PolicyParams p(std::move(buckets), mode);
  for (double& v : p.values()) v = scale * rng.normal();
  return p;
}

}  // namespace viarl::testing
