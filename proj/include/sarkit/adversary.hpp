#pragma once

#include <cstdint>
#include <vector>

#include "sarkit/autodiff.hpp"
#include "sarkit/corpus.hpp"

namespace sarkit {

// Domain discriminator d_hat = sigmoid(w_d . relu(U_d u + b_h) + b_o),
// applied independently to every sentence vector u_i.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  // U [n x |u|] -> P(source) per sentence, [n x 1].
  Var forward(Tape& tape, const Var& U);
  std::size_t hidden() const { return hidden_weights.value.rows(); }
  std::vector<Parameter*> parameters();

  Parameter hidden_weights;  // [H_d x |u|]
  Parameter hidden_bias;     // [H_d]
  Parameter output_weights;  // [1 x H_d]
  Parameter output_bias;     // [1]
};

// Domain probability of a single sentence vector, outside any tape.
double discriminate(const Tensor& u, Discriminator& disc);

inline constexpr double kBceClamp = 1e-12;

double domain_bce_loss(double d_hat, DomainLabel label);
// Sum over rows of the binary cross-entropy; d_hat is clamped to
// [1e-12, 1 - 1e-12].
Var domain_bce_loss(const Var& d_hat, DomainLabel label);

// 2 / (1 + exp(-10 p)) - 1. Progress outside [0, 1] is clamped with a warning.
double lambda_schedule(double progress);

}  // namespace sarkit
