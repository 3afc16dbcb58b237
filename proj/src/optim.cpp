#include "wave/optim.hpp"

#include <cmath>
#include <numbers>

#include "wave/error.hpp"

namespace wave {

double cosine_lr(double base_lr, std::size_t step, std::size_t total) {
  if (total == 0) return base_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::add(Matrix* param, bool decay) {
  params_.push_back({param, decay, std::vector<double>(param->size(), 0.0),
                     std::vector<double>(param->size(), 0.0)});
}

void AdamW::step(std::span<const Matrix* const> grads, double lr) {
  if (grads.size() != params_.size()) {
    throw ShapeError("AdamW: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params_.size()) + " parameters");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Slot& s = params_[k];
    const Matrix& g = *grads[k];
    if (!g.same_shape(*s.param)) {
      throw ShapeError("AdamW: gradient " + g.shape_str() + " for parameter " + s.param->shape_str());
    }
    auto p = s.param->data();
    auto gd = g.data();
    const double decay = s.decay ? lr * config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m[i] = config_.beta1 * s.m[i] + (1.0 - config_.beta1) * gd[i];
      s.v[i] = config_.beta2 * s.v[i] + (1.0 - config_.beta2) * gd[i] * gd[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      double v = p[i] - decay * p[i] - lr * mhat / (std::sqrt(vhat) + config_.eps);
      p[i] = static_cast<double>(static_cast<float>(v));
    }
  }
}

}  // namespace wave
