#pragma once

#include <cstdint>

#include "netrecast/rng.hpp"
#include "netrecast/tensor.hpp"

namespace netrecast {

// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
// For conv filters [Cout, Cin, kH, kW] the fans include the receptive field:
// fan_in = Cin*kH*kW, fan_out = Cout*kH*kW. Needs rank >= 2.
template <typename T>
void xavier_init(Tensor<T>& weight, Rng& rng);

template <typename T>
void xavier_init(Tensor<T>& weight, std::uint64_t seed) {
  Rng rng(seed);
  xavier_init(weight, rng);
}

double xavier_bound(const Shape& shape);

}  // namespace netrecast
