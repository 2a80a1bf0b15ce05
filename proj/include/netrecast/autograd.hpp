#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "netrecast/tensor.hpp"

namespace netrecast {

// Reverse-mode tape.
//
// Constructing a Tape makes it the recording tape for operations of scalar
// type T on the current thread; destruction restores the previous one. Ops
// append an entry whenever a tape is active and at least one input requires
// a gradient. backward() replays the entries in reverse and then discards
// them, so one tape serves one forward/backward pass (it can be reused for
// the next pass afterwards).
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  // Marks `out` as produced by this tape and stores its backward closure.
  void record(const Tensor<T>& out, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and propagates into every requires_grad leaf.
  // Throws UsageError if the loss is not a scalar or was not recorded here.
  void backward(const Tensor<T>& loss);

  std::size_t size() const noexcept { return entries_.size(); }
  void clear();

 private:
  struct Entry {
    Tensor<T> out;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  std::uint64_t generation_ = 1;
  Tape* previous_ = nullptr;
};

// Suspends recording for its lifetime (evaluation passes, BN refresh).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* saved_;
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;

}  // namespace netrecast
