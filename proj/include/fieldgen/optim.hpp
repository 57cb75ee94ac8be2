#pragma once

#include <cstdint>
#include <vector>

#include "fieldgen/tensor.hpp"

namespace fieldgen {

struct AdamWConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// First/second moments per parameter plus the bias-correction step counter.
template <typename T>
struct OptimizerState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  // Zeroed moments sized for `params`.
  static OptimizerState for_params(const std::vector<Tensor<T>>& params, AdamWConfig config);
};

// One decoupled-weight-decay Adam update using each parameter's accumulated
// gradient (a missing gradient counts as zero). Gradients are validated
// before anything is written: a NaN/Inf aborts the step with NumericError
// and leaves parameters and state untouched.
template <typename T>
void adamw_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before scaling. max_norm <= 0 only measures.
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm);

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params);

}  // namespace fieldgen
