#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wave/tensor.hpp"

namespace wave {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// lr at `step` of `total` under cosine decay to zero, no warmup.
double cosine_lr(double base_lr, std::size_t step, std::size_t total);

// Adam with decoupled weight decay. Parameters are registered once; step()
// takes gradients in registration order. After every update the parameter
// is rounded to f32 so that persisted values reload bit-exactly.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  void add(Matrix* param, bool decay);
  std::size_t size() const { return params_.size(); }
  void step(std::span<const Matrix* const> grads, double lr);

 private:
  struct Slot {
    Matrix* param;
    bool decay;
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamWConfig config_;
  std::vector<Slot> params_;
  std::size_t t_ = 0;
};

}  // namespace wave
