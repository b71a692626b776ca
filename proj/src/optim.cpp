#include "sarkit/optim.hpp"

#include <algorithm>
#include <cmath>

#include "sarkit/errors.hpp"
#include "sarkit/logging.hpp"

namespace sarkit {

namespace {

void sync_state(std::vector<Tensor>& slots, std::span<Parameter* const> params, const char* who) {
  if (slots.empty()) {
    for (const Parameter* p : params) slots.emplace_back(p->value.shape());
    return;
  }
  if (slots.size() != params.size()) {
    throw ContractError(std::string(who) + ": optimizer state tracks " +
                        std::to_string(slots.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (slots[i].shape() != params[i]->value.shape()) {
      throw ContractError(std::string(who) + ": state shape " + to_string(slots[i].shape()) +
                          " does not match parameter " + params[i]->name + " " +
                          to_string(params[i]->value.shape()));
    }
  }
}

void check_grad(const Parameter& p, const char* who) {
  if (p.grad.shape() != p.value.shape()) {
    throw ContractError(std::string(who) + ": gradient of " + p.name + " has shape " +
                        to_string(p.grad.shape()) + ", parameter has " +
                        to_string(p.value.shape()));
  }
}

// Correctly rounded sum of the squared entries (Shewchuk's exact partials),
// so the norm does not depend on the order parameters or rows are visited.
// A vocabulary with extra tokens must not change how a batch is clipped.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  // Round-half-even of the exact total, as in Python's math.fsum.
  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

}  // namespace

void adam_update(AdamState& state, std::span<Parameter* const> params, double lr, double beta1,
                 double beta2, double eps) {
  sync_state(state.first_moment, params, "adam_update");
  sync_state(state.second_moment, params, "adam_update");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    check_grad(p, "adam_update");
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    auto w = p.value.values();
    auto g = p.grad.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

void sgd_momentum_update(SgdState& state, std::span<Parameter* const> params, double lr,
                         double momentum) {
  sync_state(state.velocity, params, "sgd_momentum_update");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    check_grad(p, "sgd_momentum_update");
    auto v = state.velocity[i].values();
    auto w = p.value.values();
    auto g = p.grad.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      w[k] -= lr * v[k];
    }
  }
}

double dynamic_lr(double progress, double lr0, double alpha, double beta) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    warn("learning-rate progress " + std::to_string(progress) + " clamped to [0, 1]");
    progress = std::isnan(progress) ? 0.0 : std::clamp(progress, 0.0, 1.0);
  }
  return lr0 / std::pow(1.0 + alpha * progress, beta);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  ExactSum sq;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (double g : p->grad.values()) {
      if (g != 0.0) sq.add(g * g);
    }
  }
  const double norm = std::sqrt(sq.value());
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      for (double& g : p->grad.values()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace sarkit
