#include "maeday/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace maeday {

template <typename T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity, const SgdConfig& config) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw std::invalid_argument("sgd_step: parameter, gradient and velocity lengths differ");
  if (!(config.lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
  if (config.momentum < 0.0 || config.momentum >= 1.0) throw std::invalid_argument("sgd_step: momentum must be in [0, 1)");
  const T lr = static_cast<T>(config.lr);
  const T mu = static_cast<T>(config.momentum);
  const T wd = static_cast<T>(config.weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = mu * velocity[i] + (grad[i] + wd * param[i]);
    param[i] -= lr * velocity[i];
  }
}

template <typename T>
Sgd<T>::Sgd(std::vector<Parameter<T>*> params, SgdConfig config) : params_(std::move(params)), config_(config) {
  for (auto* p : params_) velocity_.emplace_back(p->value().size(), T{0});
}

template <typename T>
void Sgd<T>::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    if (!p->has_grad()) continue;
    sgd_step<T>(p->value().values(), p->grad(), velocity_[k], config_);
  }
  zero_grad();
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
AdamW<T>::AdamW(std::vector<Parameter<T>*> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value().size(), T{0});
    v_.emplace_back(p->value().size(), T{0});
  }
}

template <typename T>
void AdamW<T>::step() {
  ++step_count_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  const T step_size = static_cast<T>(config_.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(config_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    if (!p->has_grad()) continue;
    auto values = p->value().values();
    auto grad = p->grad();
    const T decay = p->value().rank() >= 2 ? static_cast<T>(config_.lr * config_.weight_decay) : T{0};
    for (std::size_t i = 0; i < values.size(); ++i) {
      m_[k][i] = b1 * m_[k][i] + (T{1} - b1) * grad[i];
      v_[k][i] = b2 * v_[k][i] + (T{1} - b2) * grad[i] * grad[i];
      values[i] -= decay * values[i];
      values[i] -= step_size * m_[k][i] / (std::sqrt(v_[k][i] * inv_c2) + eps);
    }
  }
  zero_grad();
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template void sgd_step<float>(std::span<float>, std::span<const float>, std::span<float>, const SgdConfig&);
template void sgd_step<double>(std::span<double>, std::span<const double>, std::span<double>, const SgdConfig&);
template class Sgd<float>;
template class Sgd<double>;
template class AdamW<float>;
template class AdamW<double>;

}  // namespace maeday
