#include "viarl/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace viarl {

Adam::Adam(std::size_t n, Options opts) : opts_(opts), m_(n, 0.0), v_(n, 0.0) {}

void Adam::ascend(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam: size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grad[i];
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grad[i] * grad[i];
    if (opts_.learning_rate == 0.0) continue;
    const double step = opts_.learning_rate * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + opts_.epsilon);
    if (step != 0.0) params[i] += step;
  }
}

void Adam::restore(std::size_t steps, std::span<const double> m, std::span<const double> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw std::invalid_argument("Adam: restore size mismatch");
  t_ = steps;
  m_.assign(m.begin(), m.end());
  v_.assign(v.begin(), v.end());
}

}  // namespace viarl
