#include "sarkit/init.hpp"

#include <cmath>

#include "sarkit/errors.hpp"

namespace sarkit {

Tensor xavier_init(const Shape& shape, Rng& rng) {
  if (shape.size() != 2) {
    throw ContractError("xavier_init needs a 2-D shape, got " + to_string(shape));
  }
  const double fan_out = static_cast<double>(shape[0]);
  const double fan_in = static_cast<double>(shape[1]);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor uniform_init(const Shape& shape, Rng& rng, double bound) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace sarkit
