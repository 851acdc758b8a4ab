#pragma once

#include <cstdint>
#include <vector>

#include "repforge/tensor.hpp"

namespace repforge {

struct AdamConfig {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter first/second moments plus the shared step counter. Owned by
// the training loop; adam_step mutates it under exclusive access.
struct AdamState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState init(const std::vector<const Tensor*>& params,
                        AdamConfig config = {});
};

// Bias-corrected Adam update:
//   m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)   with t = step_count + 1
// Rejects shape mismatches and non-finite gradients.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state);

}  // namespace repforge
