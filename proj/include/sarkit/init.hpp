#pragma once

#include "sarkit/random.hpp"
#include "sarkit/tensor.hpp"

namespace sarkit {

// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); shape must be 2-D.
Tensor xavier_init(const Shape& shape, Rng& rng);

// i.i.d. U(-0.05, 0.05); used for randomly initialized word vectors.
Tensor uniform_init(const Shape& shape, Rng& rng, double bound = 0.05);

}  // namespace sarkit
