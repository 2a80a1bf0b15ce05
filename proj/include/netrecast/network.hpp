#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netrecast/block.hpp"

namespace netrecast {

// Stem, ordered body blocks and classifier head, plus the per-image input
// shape. Block positions used throughout: -1 is the stem, 0..n-1 the body
// blocks, n the classifier.
struct NetworkSpec {
  std::int64_t in_channels = 3;
  std::int64_t height = 32;
  std::int64_t width = 32;
  BlockSpec stem;
  std::vector<BlockSpec> blocks;
  BlockSpec classifier;

  bool operator==(const NetworkSpec&) const = default;

  // Throws ValidationError naming the first violation: a block failing its
  // own invariants, a channel break between neighbours, or a spatial size
  // collapsing below 1.
  void validate() const;

  int num_classes() const { return classifier.out_channels; }
  int num_positions() const { return static_cast<int>(blocks.size()) + 2; }
  const BlockSpec& at(int position) const;
  BlockSpec& at(int position);
  // Spatial size entering the block at `position`.
  std::pair<std::int64_t, std::int64_t> input_hw(int position) const;
};

// Named presets: resnet56, resnet83, wrn-28-10, densenet100, vgg16 (CIFAR,
// 3x32x32) and the desk-scale mini-resnet, mini-densenet, mini-convnet,
// deep-resnet (3x16x16). Throws ValidationError for an unknown name.
NetworkSpec preset_spec(const std::string& name, int num_classes);
std::vector<std::string> preset_names();

// Architecture text format, one block per line:
//   input <C> <H> <W>
//   stem <channels> [stride]
//   <kind> <channels> [stride] [key=value | flag ...]
//   classifier <num_classes> [hidden=<n>]
// Input channels are inferred from the previous line. Dense blocks take
// `dense growth=<g> layers=<l> [bottleneck=<w>]` (channels optional; must
// equal in + g*l when given). Keys: stride, mid, growth, layers, bottleneck,
// hidden; flags: pool, projection. '#' starts a comment.
NetworkSpec parse_arch_spec(const std::string& text);
std::string format_arch_spec(const NetworkSpec& spec);
NetworkSpec load_arch_file(const std::string& path);

template <typename T>
class NetworkT {
 public:
  struct Output {
    Tensor<T> logits;
    std::vector<Tensor<T>> taps;
  };

  // Validates the spec and instantiates every block; block at position p
  // is initialized from Rng(seed).split(p + 1).
  NetworkT(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  int num_classes() const { return spec_.num_classes(); }

  BlockT<T>& at(int position);
  const BlockT<T>& at(int position) const;
  BlockT<T>& block(std::size_t i) { return blocks_.at(i); }
  const BlockT<T>& block(std::size_t i) const { return blocks_.at(i); }
  BlockT<T>& stem() { return stem_; }
  BlockT<T>& classifier() { return classifier_; }

  // Full pass. `taps` are body-block indices whose outputs (the tensors
  // entering the following block) are returned alongside the logits.
  Output forward(const Tensor<T>& input, Mode mode, std::span<const int> taps = {});
  Tensor<T> logits(const Tensor<T>& input, Mode mode) { return forward(input, mode).logits; }

  // Runs positions first..last inclusive, choosing each block's mode.
  Tensor<T> run(const Tensor<T>& x, int first, int last, const std::function<Mode(int)>& mode_of);

  // Replaces consecutive blocks starting at `first_position` and
  // re-validates the chain; on failure the network is left unchanged.
  void replace_blocks(int first_position, std::vector<BlockT<T>> blocks);

  // All trainable parameters / BN buffers with "stem.", "blocks.<i>." and
  // "classifier." prefixes. Handles alias the network's storage, even
  // through a const network.
  ParamSet<T> parameters() const;
  ParamSet<T> buffers() const;

  void set_trainable(bool on);
  NetworkT clone() const;

 private:
  void check_input(const Tensor<T>& input) const;

  NetworkSpec spec_;
  BlockT<T> stem_;
  std::vector<BlockT<T>> blocks_;
  BlockT<T> classifier_;
};

using Network = NetworkT<float>;

extern template class NetworkT<float>;
extern template class NetworkT<double>;

// build_network: preset name or explicit spec, Xavier-initialized from `seed`.
Network build_network(const std::string& preset, int num_classes, std::uint64_t seed);
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

// Index of the maximum logit per row.
std::vector<int> argmax_rows(const Tensor<float>& logits);

}  // namespace netrecast
