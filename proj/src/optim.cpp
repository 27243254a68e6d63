#include "gait/optim.hpp"

#include <cmath>

namespace gait {

template <typename T>
void Adam<T>::step(const std::vector<Param<T>*>& params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T wd = static_cast<T>(cfg_.weight_decay);
  const T step = static_cast<T>(cfg_.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(cfg_.eps);
  for (auto* p : params) {
    if (p->frozen) continue;
    auto& mo = moments_[p->name];
    if (mo.m.size() != p->value.size()) {
      mo.m = Tensor<T>(p->value.shape);
      mo.v = Tensor<T>(p->value.shape);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T g = p->grad.data[i] + wd * p->value.data[i];
      mo.m.data[i] = b1 * mo.m.data[i] + (T(1) - b1) * g;
      mo.v.data[i] = b2 * mo.v.data[i] + (T(1) - b2) * g * g;
      p->value.data[i] -= step * mo.m.data[i] / (std::sqrt(mo.v.data[i] * inv_c2) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace gait
