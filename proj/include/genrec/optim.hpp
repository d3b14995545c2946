#pragma once

#include <cstdint>
#include <vector>

#include "genrec/tensor.hpp"

namespace genrec {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
};

// AdamW with bias correction and decoupled weight decay. Decay applies to
// matrices only; bias and gain rows (1 x n) are not decayed.
template <class S>
class AdamW {
 public:
  AdamW(const ParameterSet<S>& params, const AdamWConfig& cfg);

  // Applies one update with gradient `grads * grad_scale` and learning rate
  // `lr` (the configured rate when negative). Throws "non_finite_gradient"
  // naming the first tensor with a NaN or infinite entry; parameters are
  // untouched in that case.
  void step(ParameterSet<S>& params, const GradSet<S>& grads, S grad_scale = S(1), double lr = -1);

  int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace genrec
