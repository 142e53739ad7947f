#pragma once

#include <vector>

#include "deepmot/tensor.hpp"

namespace deepmot {

// RMSprop: s = alpha*s + (1-alpha)*g^2; p -= lr * g / (sqrt(s) + eps).
class RmsProp {
 public:
  explicit RmsProp(double alpha = 0.99, double eps = 1e-8)
      : alpha_(alpha), eps_(eps) {}

  void step(double lr, const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads,
            Precision precision = Precision::f64);

 private:
  double alpha_;
  double eps_;
  std::vector<Tensor> mean_sq_;
};

// Adam with bias correction; defaults from the usual (0.9, 0.999, 1e-8).
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(double lr, const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads,
            Precision precision = Precision::f64);

 private:
  double beta1_;
  double beta2_;
  double eps_;
  long step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace deepmot
