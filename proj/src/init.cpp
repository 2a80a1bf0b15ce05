#include "netrecast/init.hpp"

#include <cmath>

namespace netrecast {

double xavier_bound(const Shape& shape) {
  if (shape.size() < 2) {
    throw ShapeError("xavier_init needs a tensor of rank >= 2, got " + shape_str(shape));
  }
  std::int64_t receptive = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
  const double fan_in = static_cast<double>(shape[1] * receptive);
  const double fan_out = static_cast<double>(shape[0] * receptive);
  return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
void xavier_init(Tensor<T>& weight, Rng& rng) {
  const double a = xavier_bound(weight.shape());
  for (auto& v : weight.mutable_data()) v = static_cast<T>(rng.uniform(-a, a));
}

template void xavier_init(Tensor<float>&, Rng&);
template void xavier_init(Tensor<double>&, Rng&);

}  // namespace netrecast
