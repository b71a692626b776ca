#include "sarkit/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sarkit/errors.hpp"
#include "sarkit/init.hpp"
#include "sarkit/logging.hpp"

namespace sarkit {

Discriminator::Discriminator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("discriminator hidden size must be >= 1");
  Rng rh(derive_seed(seed, hash_tag("disc.hidden_weights")));
  Rng ro(derive_seed(seed, hash_tag("disc.output_weights")));
  hidden_weights = Parameter("disc.hidden_weights", xavier_init({hidden, input_dim}, rh));
  hidden_bias = Parameter("disc.hidden_bias", Tensor({hidden}));
  output_weights = Parameter("disc.output_weights", xavier_init({1, hidden}, ro));
  output_bias = Parameter("disc.output_bias", Tensor({1}));
}

Var Discriminator::forward(Tape& tape, const Var& U) {
  Var h = relu(linear(U, tape.parameter(hidden_weights), tape.parameter(hidden_bias)));
  return sigmoid(linear(h, tape.parameter(output_weights), tape.parameter(output_bias)));
}

std::vector<Parameter*> Discriminator::parameters() {
  return {&hidden_weights, &hidden_bias, &output_weights, &output_bias};
}

double discriminate(const Tensor& u, Discriminator& disc) {
  Tape tape;
  Var row = tape.constant(Tensor({1, u.size()}, u.storage()));
  return disc.forward(tape, row).value()[0];
}

double domain_bce_loss(double d_hat, DomainLabel label) {
  const double p = std::clamp(d_hat, kBceClamp, 1.0 - kBceClamp);
  return label == DomainLabel::source ? -std::log(p) : -std::log(1.0 - p);
}

Var domain_bce_loss(const Var& d_hat, DomainLabel label) {
  const Tensor& p = d_hat.value();
  double loss = 0.0;
  for (double v : p.values()) loss += domain_bce_loss(v, label);
  const std::size_t pi = d_hat.id();
  const bool source = label == DomainLabel::source;
  return d_hat.tape().record(Tensor::scalar(loss), {d_hat}, [pi, source](Tape& tape, std::size_t self) {
    auto dp = tape.grad_buffer(pi);
    if (dp.empty()) return;
    const double g = tape.grad(self)[0];
    const Tensor& p = tape.value(pi);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double q = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
      dp[i] += g * (source ? -1.0 / q : 1.0 / (1.0 - q));
    }
  });
}

double lambda_schedule(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    warn("training progress " + std::to_string(progress) + " clamped to [0, 1]");
    progress = std::isnan(progress) ? 0.0 : std::clamp(progress, 0.0, 1.0);
  }
  return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

}  // namespace sarkit
