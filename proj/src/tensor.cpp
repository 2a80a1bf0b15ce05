#include "netrecast/tensor.hpp"

#include <algorithm>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <sstream>

namespace netrecast {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

#if defined(__GLIBC__)
// Activations and im2col buffers of a few MB are allocated and freed on
// every pass. With glibc defaults each of those goes through mmap and pays
// fresh page faults; keeping them on the heap roughly halves backward time.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
#endif

void check_extents(const Shape& shape) {
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
  }
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : s_(std::make_shared<Storage>()) {
  check_extents(shape);
  s_->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  s_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage>()) {
  check_extents(shape);
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(values);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return s_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T{0});
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  std::fill(s_->grad.begin(), s_->grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(s_->shape, s_->data);
}

template <typename T>
void Tensor<T>::assign(const Tensor& other) {
  if (other.shape() != shape()) {
    throw ShapeError("assign: shape " + shape_str(other.shape()) + " into " + shape_str(shape()));
  }
  std::copy(other.s_->data.begin(), other.s_->data.end(), s_->data.begin());
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace netrecast
