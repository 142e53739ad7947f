#include "deepmot/optim.hpp"

#include <cmath>

#include "deepmot/common.hpp"

namespace deepmot {

namespace {
void init_state(std::vector<Tensor>& state, const std::vector<Tensor*>& params) {
  if (!state.empty()) return;
  state.reserve(params.size());
  for (const Tensor* p : params) state.emplace_back(p->rows(), p->cols());
}
}  // namespace

void RmsProp::step(double lr, const std::vector<Tensor*>& params,
                   const std::vector<const Tensor*>& grads, Precision precision) {
  detail::check(params.size() == grads.size(), "rmsprop: param/grad count mismatch");
  init_state(mean_sq_, params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& s = mean_sq_[i];
    detail::check(p.size() == g.size() && p.size() == s.size(),
                  "rmsprop: shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      s[j] = alpha_ * s[j] + (1.0 - alpha_) * g[j] * g[j];
      p[j] -= lr * g[j] / (std::sqrt(s[j]) + eps_);
    }
    if (precision == Precision::f32) p.quantize_f32();
  }
}

void Adam::step(double lr, const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads, Precision precision) {
  detail::check(params.size() == grads.size(), "adam: param/grad count mismatch");
  init_state(m_, params);
  init_state(v_, params);
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    detail::check(p.size() == g.size(), "adam: shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
    if (precision == Precision::f32) p.quantize_f32();
  }
}

}  // namespace deepmot
