#include "netrecast/autograd.hpp"

#include <algorithm>

namespace netrecast {

namespace {
template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}
}  // namespace

template <typename T>
Tape<T>::Tape() : previous_(active_slot<T>()) {
  active_slot<T>() = this;
}

template <typename T>
Tape<T>::~Tape() {
  active_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() noexcept {
  return active_slot<T>();
}

template <typename T>
void Tape<T>::record(const Tensor<T>& out, BackwardFn fn) {
  out.s_->requires_grad = true;
  out.s_->producer = this;
  out.s_->producer_generation = generation_;
  entries_.push_back(Entry{out, std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw UsageError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (loss.s_->producer != this || loss.s_->producer_generation != generation_) {
    throw UsageError("backward on a tensor that was not recorded by this tape");
  }
  loss.grad_buffer()[0] += T{1};
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->out.has_grad()) continue;  // not on a path to the loss
    it->fn(it->out.grad());
  }
  clear();
}

template <typename T>
void Tape<T>::clear() {
  entries_.clear();
  ++generation_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : saved_(active_slot<T>()) {
  active_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  active_slot<T>() = saved_;
}

template class Tape<float>;
template class Tape<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

}  // namespace netrecast
