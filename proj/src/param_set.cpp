#include "netrecast/param_set.hpp"

namespace netrecast {

template <typename T>
Tensor<T>& ParamSet<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name) != 0) throw ValidationError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(value), {}});
  return entries_.back().value;
}

template <typename T>
void ParamSet<T>::extend(const std::string& prefix, const ParamSet& other) {
  for (const auto& e : other.entries_) add(prefix + e.name, e.value);
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
  return entries_[it->second].value;
}

template <typename T>
Tensor<T>& ParamSet<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
  return entries_[it->second].value;
}

template <typename T>
std::int64_t ParamSet<T>::numel() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() const {
  for (const auto& e : entries_) e.value.zero_grad();
}

template <typename T>
void ParamSet<T>::set_requires_grad(bool on) {
  for (auto& e : entries_) e.value.set_requires_grad(on);
}

template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace netrecast
