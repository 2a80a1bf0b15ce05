#include "netrecast/block.hpp"

#include <sstream>

#include "netrecast/init.hpp"

namespace netrecast {

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::convolution: return "convolution";
    case BlockKind::basic: return "basic";
    case BlockKind::bottleneck: return "bottleneck";
    case BlockKind::dense: return "dense";
    case BlockKind::transition: return "transition";
    case BlockKind::classifier: return "classifier";
  }
  return "?";
}

BlockKind parse_block_kind(const std::string& name) {
  if (name == "convolution" || name == "conv") return BlockKind::convolution;
  if (name == "basic") return BlockKind::basic;
  if (name == "bottleneck") return BlockKind::bottleneck;
  if (name == "dense") return BlockKind::dense;
  if (name == "transition") return BlockKind::transition;
  if (name == "classifier") return BlockKind::classifier;
  throw ValidationError("unknown block kind '" + name + "'");
}

void BlockSpec::validate() const {
  const std::string who = to_string(kind) + " block";
  if (in_channels < 1) throw ValidationError(who + ": in_channels must be >= 1");
  if (out_channels < 1) throw ValidationError(who + ": out_channels must be >= 1");
  if (stride != 1 && stride != 2) {
    throw ValidationError(who + ": stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (pool && kind != BlockKind::convolution) throw ValidationError(who + ": pool is only valid on convolution blocks");
  if (hidden < 0 || (hidden > 0 && kind != BlockKind::classifier)) {
    throw ValidationError(who + ": hidden width is only valid on classifiers");
  }
  switch (kind) {
    case BlockKind::basic:
    case BlockKind::bottleneck:
      if (needs_projection() && !projection) {
        throw ValidationError(who + " " + std::to_string(in_channels) + "->" +
                              std::to_string(out_channels) + " stride " + std::to_string(stride) +
                              " requires a projection shortcut");
      }
      if (kind == BlockKind::bottleneck && inner_channels() < 1) {
        throw ValidationError(who + ": inner width must be >= 1");
      }
      break;
    case BlockKind::dense:
      if (growth_rate < 1 || num_layers < 1 || bottleneck_width < 1) {
        throw ValidationError(who + ": growth_rate, num_layers and bottleneck_width must be >= 1");
      }
      if (out_channels != in_channels + growth_rate * num_layers) {
        throw ValidationError(who + ": out_channels " + std::to_string(out_channels) +
                              " != in_channels + growth_rate * num_layers = " +
                              std::to_string(in_channels + growth_rate * num_layers));
      }
      if (stride != 1) throw ValidationError(who + ": stride must be 1");
      break;
    case BlockKind::transition:
      if (stride != 2) throw ValidationError(who + ": stride must be 2 (average pool halves H, W)");
      break;
    case BlockKind::classifier:
      if (stride != 1) throw ValidationError(who + ": stride must be 1");
      break;
    case BlockKind::convolution:
      break;
  }
}

int BlockSpec::inner_channels() const {
  if (kind != BlockKind::bottleneck) return out_channels;
  return mid_channels > 0 ? mid_channels : out_channels / 4;
}

std::pair<std::int64_t, std::int64_t> BlockSpec::output_hw(std::int64_t h, std::int64_t w) const {
  switch (kind) {
    case BlockKind::convolution: {
      std::int64_t oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
      if (pool) return {oh / 2, ow / 2};
      return {oh, ow};
    }
    case BlockKind::basic:
    case BlockKind::bottleneck:
      return {(h - 1) / stride + 1, (w - 1) / stride + 1};
    case BlockKind::dense:
      return {h, w};
    case BlockKind::transition:
      return {h / 2, w / 2};
    case BlockKind::classifier:
      return {1, 1};
  }
  return {h, w};
}

BlockSpec BlockSpec::convolution(int in, int out, int stride, bool pool) {
  BlockSpec s;
  s.kind = BlockKind::convolution;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = stride;
  s.pool = pool;
  return s;
}

BlockSpec BlockSpec::basic(int in, int out, int stride) {
  BlockSpec s;
  s.kind = BlockKind::basic;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = stride;
  s.projection = s.needs_projection();
  return s;
}

BlockSpec BlockSpec::bottleneck(int in, int out, int stride, int mid) {
  BlockSpec s;
  s.kind = BlockKind::bottleneck;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = stride;
  s.mid_channels = mid;
  s.projection = s.needs_projection();
  return s;
}

BlockSpec BlockSpec::dense(int in, int growth, int layers, int bottleneck_width) {
  BlockSpec s;
  s.kind = BlockKind::dense;
  s.in_channels = in;
  s.growth_rate = growth;
  s.num_layers = layers;
  s.bottleneck_width = bottleneck_width;
  s.out_channels = in + growth * layers;
  return s;
}

BlockSpec BlockSpec::transition(int in, int out) {
  BlockSpec s;
  s.kind = BlockKind::transition;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = 2;
  return s;
}

BlockSpec BlockSpec::classifier(int in, int num_classes, int hidden) {
  BlockSpec s;
  s.kind = BlockKind::classifier;
  s.in_channels = in;
  s.out_channels = num_classes;
  s.hidden = hidden;
  return s;
}

std::string describe(const BlockSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.kind) << ' ' << spec.in_channels << "->" << spec.out_channels;
  if (spec.stride != 1) os << " stride " << spec.stride;
  if (spec.kind == BlockKind::dense) os << " (growth " << spec.growth_rate << " x " << spec.num_layers << ")";
  if (spec.projection) os << " +proj";
  if (spec.pool) os << " +pool";
  return os.str();
}

namespace {

LayerInfo conv_layer(std::string name, int in, int out, int k, int stride, std::int64_t h, std::int64_t w) {
  LayerInfo l;
  l.type = LayerInfo::Type::conv;
  l.name = std::move(name);
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = k;
  l.stride = stride;
  l.padding = k / 2;
  l.in_h = h;
  l.in_w = w;
  l.out_h = (h + 2 * l.padding - k) / stride + 1;
  l.out_w = (w + 2 * l.padding - k) / stride + 1;
  return l;
}

LayerInfo bn_layer(std::string name, int channels, std::int64_t h, std::int64_t w) {
  LayerInfo l;
  l.type = LayerInfo::Type::batchnorm;
  l.name = std::move(name);
  l.in_channels = l.out_channels = channels;
  l.in_h = l.out_h = h;
  l.in_w = l.out_w = w;
  return l;
}

LayerInfo linear_layer(std::string name, int in, int out) {
  LayerInfo l;
  l.type = LayerInfo::Type::linear;
  l.name = std::move(name);
  l.in_channels = in;
  l.out_channels = out;
  l.bias = true;
  return l;
}

}  // namespace

std::vector<LayerInfo> block_layers(const BlockSpec& s, std::int64_t h, std::int64_t w) {
  std::vector<LayerInfo> layers;
  switch (s.kind) {
    case BlockKind::convolution: {
      auto c = conv_layer("conv1", s.in_channels, s.out_channels, 3, s.stride, h, w);
      layers.push_back(c);
      layers.push_back(bn_layer("bn1", s.out_channels, c.out_h, c.out_w));
      break;
    }
    case BlockKind::basic: {
      auto c1 = conv_layer("conv1", s.in_channels, s.out_channels, 3, s.stride, h, w);
      layers.push_back(c1);
      layers.push_back(bn_layer("bn1", s.out_channels, c1.out_h, c1.out_w));
      layers.push_back(conv_layer("conv2", s.out_channels, s.out_channels, 3, 1, c1.out_h, c1.out_w));
      layers.push_back(bn_layer("bn2", s.out_channels, c1.out_h, c1.out_w));
      if (s.projection) {
        auto p = conv_layer("shortcut.conv", s.in_channels, s.out_channels, 1, s.stride, h, w);
        layers.push_back(p);
        layers.push_back(bn_layer("shortcut.bn", s.out_channels, p.out_h, p.out_w));
      }
      break;
    }
    case BlockKind::bottleneck: {
      const int mid = s.inner_channels();
      auto c1 = conv_layer("conv1", s.in_channels, mid, 1, 1, h, w);
      layers.push_back(c1);
      layers.push_back(bn_layer("bn1", mid, h, w));
      auto c2 = conv_layer("conv2", mid, mid, 3, s.stride, h, w);
      layers.push_back(c2);
      layers.push_back(bn_layer("bn2", mid, c2.out_h, c2.out_w));
      layers.push_back(conv_layer("conv3", mid, s.out_channels, 1, 1, c2.out_h, c2.out_w));
      layers.push_back(bn_layer("bn3", s.out_channels, c2.out_h, c2.out_w));
      if (s.projection) {
        auto p = conv_layer("shortcut.conv", s.in_channels, s.out_channels, 1, s.stride, h, w);
        layers.push_back(p);
        layers.push_back(bn_layer("shortcut.bn", s.out_channels, p.out_h, p.out_w));
      }
      break;
    }
    case BlockKind::dense: {
      const int inner = s.bottleneck_width * s.growth_rate;
      for (int i = 0; i < s.num_layers; ++i) {
        const int c = s.in_channels + i * s.growth_rate;
        const std::string p = "layer" + std::to_string(i) + ".";
        layers.push_back(bn_layer(p + "bn1", c, h, w));
        layers.push_back(conv_layer(p + "conv1", c, inner, 1, 1, h, w));
        layers.push_back(bn_layer(p + "bn2", inner, h, w));
        layers.push_back(conv_layer(p + "conv2", inner, s.growth_rate, 3, 1, h, w));
      }
      break;
    }
    case BlockKind::transition:
      layers.push_back(bn_layer("bn1", s.in_channels, h, w));
      layers.push_back(conv_layer("conv1", s.in_channels, s.out_channels, 1, 1, h, w));
      break;
    case BlockKind::classifier:
      if (s.hidden > 0) {
        layers.push_back(linear_layer("fc1", s.in_channels, s.hidden));
        layers.push_back(linear_layer("fc2", s.hidden, s.out_channels));
      } else {
        layers.push_back(linear_layer("fc", s.in_channels, s.out_channels));
      }
      break;
  }
  return layers;
}

BlockSpec rebuild_next_block(const BlockSpec& source_next, int new_in_channels) {
  if (new_in_channels < 1) throw ValidationError("rebuild_next_block: new_in_channels must be >= 1");
  BlockSpec s = source_next;
  s.in_channels = new_in_channels;
  if (s.kind == BlockKind::dense) s.out_channels = new_in_channels + s.growth_rate * s.num_layers;
  if (s.needs_projection()) s.projection = true;
  return s;
}

template <typename T>
BlockT<T>::BlockT(BlockSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  // Spatial extents do not affect parameter shapes; any valid size works.
  const auto layers = block_layers(spec_, 8, 8);
  std::uint64_t index = 0;
  for (const auto& l : layers) {
    ++index;
    switch (l.type) {
      case LayerInfo::Type::conv: {
        Tensor<T> w(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel});
        Rng child = rng.split(index);
        xavier_init(w, child);
        params_.add(l.name + ".weight", std::move(w));
        break;
      }
      case LayerInfo::Type::linear: {
        Tensor<T> w(Shape{l.out_channels, l.in_channels});
        Rng child = rng.split(index);
        xavier_init(w, child);
        params_.add(l.name + ".weight", std::move(w));
        params_.add(l.name + ".bias", Tensor<T>::zeros(Shape{l.out_channels}));
        break;
      }
      case LayerInfo::Type::batchnorm:
        params_.add(l.name + ".gamma", Tensor<T>::ones(Shape{l.out_channels}));
        params_.add(l.name + ".beta", Tensor<T>::zeros(Shape{l.out_channels}));
        buffers_.add(l.name + ".running_mean", Tensor<T>::zeros(Shape{l.out_channels}));
        buffers_.add(l.name + ".running_var", Tensor<T>::ones(Shape{l.out_channels}));
        break;
    }
  }
  params_.set_requires_grad(true);
}

template <typename T>
Tensor<T> BlockT<T>::conv(const Tensor<T>& x, const std::string& name, int stride, int pad) {
  return conv2d(x, params_.at(name + ".weight"), stride, pad);
}

template <typename T>
Tensor<T> BlockT<T>::bn(const Tensor<T>& x, const std::string& name, Mode mode) {
  BatchNormStats<T> stats{buffers_.at(name + ".running_mean"), buffers_.at(name + ".running_var")};
  return batchnorm2d(x, params_.at(name + ".gamma"), params_.at(name + ".beta"), stats, mode,
                     bn_momentum_);
}

template <typename T>
Tensor<T> BlockT<T>::forward(const Tensor<T>& input, Mode mode) {
  const BlockSpec& s = spec_;
  if (input.ndim() != 4 || input.dim(1) != s.in_channels) {
    throw ShapeError(describe(s) + ": expected input [B," + std::to_string(s.in_channels) +
                     ",H,W], got " + shape_str(input.shape()));
  }
  switch (s.kind) {
    case BlockKind::convolution: {
      auto y = relu(bn(conv(input, "conv1", s.stride, 1), "bn1", mode));
      return s.pool ? maxpool2d(y, 2, 2) : y;
    }
    case BlockKind::basic: {
      auto y = relu(bn(conv(input, "conv1", s.stride, 1), "bn1", mode));
      y = bn(conv(y, "conv2", 1, 1), "bn2", mode);
      auto shortcut = s.projection ? bn(conv(input, "shortcut.conv", s.stride, 0), "shortcut.bn", mode) : input;
      return relu(add(y, shortcut));
    }
    case BlockKind::bottleneck: {
      auto y = relu(bn(conv(input, "conv1", 1, 0), "bn1", mode));
      y = relu(bn(conv(y, "conv2", s.stride, 1), "bn2", mode));
      y = bn(conv(y, "conv3", 1, 0), "bn3", mode);
      auto shortcut = s.projection ? bn(conv(input, "shortcut.conv", s.stride, 0), "shortcut.bn", mode) : input;
      return relu(add(y, shortcut));
    }
    case BlockKind::dense: {
      Tensor<T> features = input;
      for (int i = 0; i < s.num_layers; ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        auto y = conv(relu(bn(features, p + "bn1", mode)), p + "conv1", 1, 0);
        y = conv(relu(bn(y, p + "bn2", mode)), p + "conv2", 1, 1);
        const Tensor<T> parts[] = {features, y};
        features = concat_channels<T>(parts);
      }
      return features;
    }
    case BlockKind::transition: {
      auto y = conv(relu(bn(input, "bn1", mode)), "conv1", 1, 0);
      return avgpool2d(y, 2, 2);
    }
    case BlockKind::classifier: {
      auto pooled = global_avgpool(input);
      if (s.hidden > 0) {
        auto h = relu(linear(pooled, params_.at("fc1.weight"), params_.at("fc1.bias")));
        return linear(h, params_.at("fc2.weight"), params_.at("fc2.bias"));
      }
      return linear(pooled, params_.at("fc.weight"), params_.at("fc.bias"));
    }
  }
  throw UsageError("unhandled block kind");
}

template <typename T>
void BlockT<T>::reset_running_stats() {
  for (auto& e : buffers_) {
    const bool is_var = e.name.size() >= 3 && e.name.compare(e.name.size() - 3, 3, "var") == 0;
    for (auto& v : e.value.mutable_data()) v = is_var ? T{1} : T{0};
  }
}

template <typename T>
BlockT<T> BlockT<T>::clone() const {
  BlockT copy = *this;
  copy.params_ = ParamSet<T>{};
  copy.buffers_ = ParamSet<T>{};
  for (const auto& e : params_) {
    copy.params_.add(e.name, e.value.clone()).set_requires_grad(e.value.requires_grad());
  }
  for (const auto& e : buffers_) copy.buffers_.add(e.name, e.value.clone());
  return copy;
}

template <typename T>
void BlockT<T>::copy_values_from(const BlockT& other) {
  if (!(other.spec_ == spec_)) {
    throw ValidationError("copy_values_from: spec mismatch (" + describe(other.spec_) + " vs " +
                          describe(spec_) + ")");
  }
  for (auto& e : params_) e.value.assign(other.params_.at(e.name));
  for (auto& e : buffers_) e.value.assign(other.buffers_.at(e.name));
}

template class BlockT<float>;
template class BlockT<double>;

}  // namespace netrecast
