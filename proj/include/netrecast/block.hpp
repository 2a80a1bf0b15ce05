#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "netrecast/ops.hpp"
#include "netrecast/param_set.hpp"
#include "netrecast/rng.hpp"

namespace netrecast {

enum class BlockKind { convolution, basic, bottleneck, dense, transition, classifier };

std::string to_string(BlockKind kind);
// Accepts the canonical names plus "conv" for convolution.
BlockKind parse_block_kind(const std::string& name);

// Structural description of one block.
//
//   convolution  conv3x3(stride) -> BN -> ReLU [-> maxpool 2x2 when `pool`]
//   basic        conv3x3(stride) -> BN -> ReLU -> conv3x3 -> BN, + shortcut, ReLU
//   bottleneck   conv1x1 -> BN -> ReLU -> conv3x3(stride) -> BN -> ReLU
//                -> conv1x1 -> BN, + shortcut, ReLU
//   dense        num_layers x [BN -> ReLU -> conv1x1(bottleneck_width*growth)
//                -> BN -> ReLU -> conv3x3(growth)], each concatenated on
//   transition   BN -> ReLU -> conv1x1 -> avgpool 2x2 (always halves H, W)
//   classifier   global avgpool [-> linear(hidden) -> ReLU] -> linear
//
// The projection shortcut is conv1x1(stride) -> BN.
struct BlockSpec {
  BlockKind kind = BlockKind::convolution;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  bool projection = false;
  int growth_rate = 0;
  int num_layers = 0;
  int bottleneck_width = 4;
  int mid_channels = 0;  // bottleneck inner width; 0 means out_channels / 4
  bool pool = false;
  int hidden = 0;

  bool operator==(const BlockSpec&) const = default;

  // Throws ValidationError describing the first violated invariant.
  void validate() const;

  int inner_channels() const;
  bool needs_projection() const {
    return (kind == BlockKind::basic || kind == BlockKind::bottleneck) &&
           (in_channels != out_channels || stride != 1);
  }
  std::pair<std::int64_t, std::int64_t> output_hw(std::int64_t h, std::int64_t w) const;

  static BlockSpec convolution(int in, int out, int stride = 1, bool pool = false);
  static BlockSpec basic(int in, int out, int stride = 1);
  static BlockSpec bottleneck(int in, int out, int stride = 1, int mid = 0);
  static BlockSpec dense(int in, int growth, int layers, int bottleneck_width = 4);
  static BlockSpec transition(int in, int out);
  static BlockSpec classifier(int in, int num_classes, int hidden = 0);
};

std::string describe(const BlockSpec& spec);

// One weight-bearing layer of a block, with the spatial extents it sees for
// a given block input size. Shared by block construction and the cost model.
struct LayerInfo {
  enum class Type { conv, batchnorm, linear };
  Type type = Type::conv;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool bias = false;
  std::int64_t in_h = 1, in_w = 1, out_h = 1, out_w = 1;
};

std::vector<LayerInfo> block_layers(const BlockSpec& spec, std::int64_t h, std::int64_t w);

// Returns `source_next` with its input width replaced, forcing a projection
// shortcut on residual blocks whose input and output widths now differ. A
// dense block keeps its growth, so its output width follows the new input.
BlockSpec rebuild_next_block(const BlockSpec& source_next, int new_in_channels);

// Instantiated block: parameters (conv/linear weights, BN affine) and
// buffers (BN running statistics), named by layer ("conv1.weight",
// "layer2.bn1.gamma", "shortcut.bn.running_mean", ...).
template <typename T>
class BlockT {
 public:
  // Validates the spec, Xavier-initializes weights (one child stream of
  // `rng` per layer), sets BN gamma=1, beta=0, running mean 0 / var 1.
  BlockT(BlockSpec spec, Rng& rng);

  const BlockSpec& spec() const noexcept { return spec_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  ParamSet<T>& buffers() noexcept { return buffers_; }
  const ParamSet<T>& buffers() const noexcept { return buffers_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode);

  // Momentum used for running-stat updates in train mode.
  void set_bn_momentum(double m) noexcept { bn_momentum_ = m; }
  double bn_momentum() const noexcept { return bn_momentum_; }
  void reset_running_stats();

  void set_trainable(bool on) { params_.set_requires_grad(on); }

  // Deep copy with identical values.
  BlockT clone() const;
  // Copies parameter and buffer values from a block with an identical spec.
  void copy_values_from(const BlockT& other);

 private:
  Tensor<T> conv(const Tensor<T>& x, const std::string& name, int stride, int pad);
  Tensor<T> bn(const Tensor<T>& x, const std::string& name, Mode mode);

  BlockSpec spec_;
  ParamSet<T> params_;
  ParamSet<T> buffers_;
  double bn_momentum_ = 0.1;
};

using Block = BlockT<float>;

extern template class BlockT<float>;
extern template class BlockT<double>;

}  // namespace netrecast
