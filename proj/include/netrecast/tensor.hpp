#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "netrecast/errors.hpp"

namespace netrecast {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

// Dense row-major N-d array with an optional gradient buffer.
//
// Tensor is a handle: copies share storage, which is what lets a parameter
// live in a block, an optimizer view and a recorded tape entry at once. Use
// clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t ndim() const { return s_->shape.size(); }
  std::int64_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::int64_t numel() const { return static_cast<std::int64_t>(s_->data.size()); }

  std::span<const T> data() const { return s_->data; }
  std::span<T> mutable_data() { return s_->data; }
  T item() const;
  T operator[](std::int64_t i) const { return s_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const noexcept { return s_ && s_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    s_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return s_ && !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Gradient storage, zero-filled on first use. Backward closures accumulate
  // into this; it is reachable through const handles on purpose.
  std::span<T> grad_buffer() const;
  void zero_grad() const;
  void clear_grad() const { s_->grad.clear(); }

  // Deep copy of the values; the copy is a detached leaf without gradient.
  Tensor clone() const;
  template <typename U>
  Tensor<U> cast() const;

  bool shares_storage_with(const Tensor& other) const noexcept { return s_ == other.s_; }

  // Overwrite values in place from a tensor of identical shape.
  void assign(const Tensor& other);

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    // Identity of the tape recording that produced this tensor, if any.
    const void* producer = nullptr;
    std::uint64_t producer_generation = 0;
  };
  std::shared_ptr<Storage> s_;

  friend class Tape<T>;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
  std::vector<U> out(s_->data.begin(), s_->data.end());
  return Tensor<U>(s_->shape, std::move(out));
}

}  // namespace netrecast
