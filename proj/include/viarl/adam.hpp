#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace viarl {

// Adam with a constant learning rate, used for gradient ascent.
class Adam {
 public:
  struct Options {
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(std::size_t n, Options opts);

  // params += lr * m_hat / (sqrt(v_hat) + eps). A zero learning rate leaves
  // params bit-identical.
  void ascend(std::span<double> params, std::span<const double> grad);

  const Options& options() const { return opts_; }
  std::size_t step_count() const { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

  // Restores a saved state; sizes must match.
  void restore(std::size_t steps, std::span<const double> m, std::span<const double> v);

 private:
  Options opts_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace viarl
