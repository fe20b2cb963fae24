#pragma once

#include <span>
#include <vector>

#include "maeday/autograd.hpp"

namespace maeday {

struct SgdConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.05;
};

// Classic coupled SGD with momentum:
//   v <- momentum * v + (grad + weight_decay * param)
//   param <- param - lr * v
template <typename T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity, const SgdConfig& config);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Parameter<T>*> params, SgdConfig config);
  // Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  const SgdConfig& config() const { return config_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<T>> velocity_;
  SgdConfig config_;
};

// Decoupled weight decay; decay is skipped for parameters of rank < 2.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, AdamWConfig config);
  void step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  const AdamWConfig& config() const { return config_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
  AdamWConfig config_;
  long step_count_ = 0;
};

}  // namespace maeday
