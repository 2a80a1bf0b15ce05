#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netrecast/tensor.hpp"

namespace netrecast {

// Per-parameter optimizer memory. SGD uses `momentum`; Adam uses
// `first`/`second` and `step`. Buffers are allocated lazily by the optimizer.
template <typename T>
struct OptimizerState {
  std::vector<T> momentum;
  std::vector<T> first;
  std::vector<T> second;
  std::int64_t step = 0;
};

// Named parameter tensors in insertion order.
//
// Entries hold tensor handles, so a ParamSet assembled from several blocks
// updates those blocks' parameters in place.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    OptimizerState<T> state;
  };

  // Throws ValidationError on a duplicate name.
  Tensor<T>& add(std::string name, Tensor<T> value);
  // Adds every entry of `other` under `prefix` + name (handles are shared,
  // optimizer state starts empty).
  void extend(const std::string& prefix, const ParamSet& other);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::int64_t numel() const;
  void zero_grad() const;
  void set_requires_grad(bool on);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace netrecast
