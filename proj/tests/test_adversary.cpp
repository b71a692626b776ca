#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sarkit/adversary.hpp"
#include "sarkit/errors.hpp"
#include "sarkit/logging.hpp"

using namespace sarkit;

TEST_CASE("discriminator output") {
  Discriminator d(4, 3, 1);
  for (auto* p : d.parameters()) p->value.fill(0.0);
  Rng rng(1);
  CHECK(discriminate(oracle::random_tensor({4}, rng), d) == 0.5);

  Discriminator e(4, 3, 2);
  e.output_bias.value[0] = 0.1;
  Tensor u({4}, 0.3);
  // Pick weights that make the logit positive, then scale them up.
  for (double& w : e.hidden_weights.value.values()) w = std::abs(w);
  for (double& w : e.output_weights.value.values()) w = std::abs(w);
  double last = discriminate(u, e);
  CHECK(last > 0.5);
  for (int i = 0; i < 4; ++i) {
    for (double& w : e.output_weights.value.values()) w *= 10.0;
    const double next = discriminate(u, e);
    CHECK(next >= last);
    last = next;
  }
  CHECK(last > 1.0 - 1e-9);
  CHECK_THROWS_AS(Discriminator(4, 0, 1), ConfigError);
}

TEST_CASE("domain cross entropy") {
  CHECK(std::abs(domain_bce_loss(0.5, DomainLabel::source) - std::log(2.0)) < 1e-15);
  CHECK(std::abs(domain_bce_loss(0.5, DomainLabel::target) - std::log(2.0)) < 1e-15);
  CHECK(std::abs(domain_bce_loss(0.9, DomainLabel::target) + std::log(0.1)) < 1e-12);
  CHECK(domain_bce_loss(1.0, DomainLabel::source) < 1e-11);
  CHECK(domain_bce_loss(0.0, DomainLabel::target) < 1e-11);
  // Clamped, so a confident mistake stays finite.
  CHECK(std::isfinite(domain_bce_loss(0.0, DomainLabel::source)));
}

TEST_CASE("discriminator gradients, with and without reversal") {
  Rng rng(3);
  Discriminator d(4, 3, 5);
  const Tensor U = oracle::random_tensor({3, 4}, rng);
  auto params = d.parameters();
  CHECK(oracle::parameter_gradient_error(
            [&](Tape& t) { return domain_bce_loss(d.forward(t, t.constant(U)), DomainLabel::target); },
            params) < 1e-6);

  // Through the reversal the tape gradient is -lambda times the numeric
  // gradient of the same loss without reversal.
  const double lambda = 0.37;
  Tape tape;
  const Var u = tape.variable(U);
  tape.backward(domain_bce_loss(d.forward(tape, grad_reverse(u, lambda)), DomainLabel::source));
  const Tensor reversed = tape.grad_of(u);
  const Tensor numeric = oracle::numeric_gradient(
      [&](const Tensor& x) {
        Tape t;
        return domain_bce_loss(d.forward(t, t.constant(x)), DomainLabel::source).value()[0];
      },
      U);
  Tensor scaled = numeric;
  for (double& v : scaled.values()) v *= -lambda;
  CHECK(oracle::max_relative_error(reversed, scaled) < 1e-6);
}

TEST_CASE("lambda schedule") {
  set_warnings_enabled(false);
  CHECK(lambda_schedule(0.0) == 0.0);
  CHECK(std::abs(lambda_schedule(0.5) - 0.986614) < 1e-6);
  CHECK(std::abs(lambda_schedule(1.0) - 0.999909) < 1e-6);
  CHECK(std::abs(lambda_schedule(1.0) - (2.0 / (1.0 + std::exp(-10.0)) - 1.0)) < 1e-12);
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double l = lambda_schedule(i / 100.0);
    CHECK(l > prev);
    prev = l;
  }
  CHECK(lambda_schedule(-0.5) == 0.0);
  CHECK(lambda_schedule(3.0) == lambda_schedule(1.0));
  set_warnings_enabled(true);
}
