#pragma once

#include <map>
#include <string>
#include <vector>

#include "gait/layers.hpp"

namespace gait {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam with bias correction. Frozen parameters are skipped entirely.
template <typename T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m, v;
  };

  Adam() = default;
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  void step(const std::vector<Param<T>*>& params);

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamConfig cfg_;
  long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace gait
