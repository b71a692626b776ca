#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sarkit/autodiff.hpp"

namespace sarkit {

// First/second moments, shaped like the parameters they track.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
};

struct SgdState {
  std::vector<Tensor> velocity;
  std::size_t step = 0;
};

// Bias-corrected Adam step using each parameter's accumulated grad.
// Frozen (non-trainable) parameters are skipped.
void adam_update(AdamState& state, std::span<Parameter* const> params, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// v <- momentum * v + grad; param <- param - lr * v.
void sgd_momentum_update(SgdState& state, std::span<Parameter* const> params, double lr,
                         double momentum = 0.9);

// lr0 / (1 + alpha * p)^beta for training progress p in [0, 1].
double dynamic_lr(double progress, double lr0, double alpha = 10.0, double beta = 0.75);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before rescaling.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

void zero_grads(std::span<Parameter* const> params);

}  // namespace sarkit
