#include "netrecast/network.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace netrecast {

const BlockSpec& NetworkSpec::at(int position) const {
  if (position == -1) return stem;
  if (position == static_cast<int>(blocks.size())) return classifier;
  if (position < -1 || position > static_cast<int>(blocks.size())) {
    throw UsageError("block position " + std::to_string(position) + " out of range [-1, " +
                     std::to_string(blocks.size()) + "]");
  }
  return blocks[static_cast<std::size_t>(position)];
}

BlockSpec& NetworkSpec::at(int position) {
  return const_cast<BlockSpec&>(static_cast<const NetworkSpec&>(*this).at(position));
}

std::pair<std::int64_t, std::int64_t> NetworkSpec::input_hw(int position) const {
  std::int64_t h = height, w = width;
  for (int p = -1; p < position; ++p) std::tie(h, w) = at(p).output_hw(h, w);
  return {h, w};
}

void NetworkSpec::validate() const {
  if (in_channels < 1 || height < 1 || width < 1) {
    throw ValidationError("input shape must be positive, got " + std::to_string(in_channels) + "x" +
                          std::to_string(height) + "x" + std::to_string(width));
  }
  if (stem.kind != BlockKind::convolution) throw ValidationError("stem must be a convolution block");
  if (classifier.kind != BlockKind::classifier) throw ValidationError("head must be a classifier block");
  if (stem.in_channels != in_channels) {
    throw ValidationError("stem expects " + std::to_string(stem.in_channels) +
                          " input channels but the input has " + std::to_string(in_channels));
  }
  std::int64_t h = height, w = width;
  const int n = static_cast<int>(blocks.size());
  for (int p = -1; p <= n; ++p) {
    const BlockSpec& s = at(p);
    const std::string where = p == -1 ? "stem" : p == n ? "classifier" : "block " + std::to_string(p);
    if (p >= 0 && p < n && s.kind == BlockKind::classifier) {
      throw ValidationError(where + ": classifier is only allowed as the head");
    }
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (p > -1) {
      const BlockSpec& prev = at(p - 1);
      if (prev.out_channels != s.in_channels) {
        throw ValidationError("channel chain broken at " + where + ": previous block outputs " +
                              std::to_string(prev.out_channels) + " channels, " + where +
                              " expects " + std::to_string(s.in_channels));
      }
    }
    std::tie(h, w) = s.output_hw(h, w);
    if (h < 1 || w < 1) throw ValidationError("spatial size collapses to zero at " + where);
  }
}

namespace {

NetworkSpec resnet_like(std::int64_t size, int stem_width, const std::vector<int>& widths, int per_stage,
                        int num_classes, BlockKind kind) {
  NetworkSpec s;
  s.height = s.width = size;
  s.stem = BlockSpec::convolution(3, stem_width);
  int in = stem_width;
  for (std::size_t stage = 0; stage < widths.size(); ++stage) {
    for (int i = 0; i < per_stage; ++i) {
      const int stride = (stage > 0 && i == 0) ? 2 : 1;
      if (kind == BlockKind::basic) {
        s.blocks.push_back(BlockSpec::basic(in, widths[stage], stride));
      } else {
        s.blocks.push_back(BlockSpec::bottleneck(in, widths[stage], stride));
      }
      in = widths[stage];
    }
  }
  s.classifier = BlockSpec::classifier(in, num_classes);
  return s;
}

NetworkSpec densenet(std::int64_t size, int stem_width, int growth, int layers, int num_dense,
                     int num_classes) {
  NetworkSpec s;
  s.height = s.width = size;
  s.stem = BlockSpec::convolution(3, stem_width);
  int in = stem_width;
  for (int d = 0; d < num_dense; ++d) {
    s.blocks.push_back(BlockSpec::dense(in, growth, layers));
    in = s.blocks.back().out_channels;
    if (d + 1 < num_dense) {
      s.blocks.push_back(BlockSpec::transition(in, in / 2));
      in /= 2;
    }
  }
  s.classifier = BlockSpec::classifier(in, num_classes);
  return s;
}

NetworkSpec conv_chain(std::int64_t size, int stem_width, const std::vector<std::pair<int, bool>>& layers,
                       int num_classes, int hidden) {
  NetworkSpec s;
  s.height = s.width = size;
  s.stem = BlockSpec::convolution(3, stem_width);
  int in = stem_width;
  for (auto [out, pool] : layers) {
    s.blocks.push_back(BlockSpec::convolution(in, out, 1, pool));
    in = out;
  }
  s.classifier = BlockSpec::classifier(in, num_classes, hidden);
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"resnet56",    "resnet83",      "wrn-28-10",    "densenet100", "vgg16",
          "mini-resnet", "mini-densenet", "mini-convnet", "deep-resnet"};
}

NetworkSpec preset_spec(const std::string& name, int num_classes) {
  if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
  NetworkSpec s;
  if (name == "resnet56") {
    s = resnet_like(32, 16, {16, 32, 64}, 9, num_classes, BlockKind::basic);
  } else if (name == "resnet83") {
    // 27 bottleneck blocks (same block count as ResNet-56), 4x expansion.
    s = resnet_like(32, 16, {64, 128, 256}, 9, num_classes, BlockKind::bottleneck);
  } else if (name == "wrn-28-10") {
    s = resnet_like(32, 16, {160, 320, 640}, 4, num_classes, BlockKind::basic);
  } else if (name == "densenet100") {
    s = densenet(32, 24, 12, 16, 3, num_classes);
  } else if (name == "vgg16") {
    s = conv_chain(32, 64,
                   {{64, true}, {128, false}, {128, true}, {256, false}, {256, false}, {256, true},
                    {512, false}, {512, false}, {512, true}, {512, false}, {512, false}, {512, true}},
                   num_classes, 512);
  } else if (name == "mini-resnet") {
    s = resnet_like(16, 16, {16, 32}, 3, num_classes, BlockKind::basic);
  } else if (name == "mini-densenet") {
    s = densenet(16, 16, 8, 4, 2, num_classes);
  } else if (name == "mini-convnet") {
    s = conv_chain(16, 16, {{32, false}, {32, false}, {64, true}, {64, false}, {64, false}}, num_classes, 0);
  } else if (name == "deep-resnet") {
    s = resnet_like(16, 16, {16, 32}, 5, num_classes, BlockKind::basic);
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown architecture preset '" + name + "' (known: " + known + ")");
  }
  s.validate();
  return s;
}

namespace {

int parse_int(const std::string& v, int line_no, const std::string& what) {
  try {
    std::size_t used = 0;
    int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ValidationError("arch line " + std::to_string(line_no) + ": bad " + what + " '" + v + "'");
  }
}

}  // namespace

NetworkSpec parse_arch_spec(const std::string& text) {
  NetworkSpec spec;
  bool have_input = false, have_stem = false, have_head = false;
  int channels = 0;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = "arch line " + std::to_string(line_no);
    if (have_head) throw ValidationError(where + ": nothing may follow the classifier");

    if (tok[0] == "input") {
      if (tok.size() != 4) throw ValidationError(where + ": expected 'input <C> <H> <W>'");
      spec.in_channels = parse_int(tok[1], line_no, "channels");
      spec.height = parse_int(tok[2], line_no, "height");
      spec.width = parse_int(tok[3], line_no, "width");
      have_input = true;
      continue;
    }

    const bool is_stem = tok[0] == "stem";
    BlockSpec b;
    b.kind = is_stem ? BlockKind::convolution : parse_block_kind(tok[0]);
    if (!is_stem && !have_stem) throw ValidationError(where + ": blocks must follow a 'stem' line");
    if (is_stem && have_stem) throw ValidationError(where + ": duplicate stem");
    b.in_channels = is_stem ? static_cast<int>(spec.in_channels) : channels;
    b.stride = b.kind == BlockKind::transition ? 2 : 1;
    std::optional<int> out;
    bool force_projection = false;
    int positional = 0;
    for (std::size_t i = 1; i < tok.size(); ++i) {
      const std::string& t = tok[i];
      auto eq = t.find('=');
      if (eq == std::string::npos) {
        if (t == "pool") {
          b.pool = true;
        } else if (t == "projection") {
          force_projection = true;
        } else if (positional == 0) {
          out = parse_int(t, line_no, "channels");
          ++positional;
        } else if (positional == 1) {
          b.stride = parse_int(t, line_no, "stride");
          ++positional;
        } else {
          throw ValidationError(where + ": unexpected token '" + t + "'");
        }
        continue;
      }
      const std::string key = t.substr(0, eq), value = t.substr(eq + 1);
      if (key == "stride") b.stride = parse_int(value, line_no, key);
      else if (key == "mid") b.mid_channels = parse_int(value, line_no, key);
      else if (key == "growth") b.growth_rate = parse_int(value, line_no, key);
      else if (key == "layers") b.num_layers = parse_int(value, line_no, key);
      else if (key == "bottleneck") b.bottleneck_width = parse_int(value, line_no, key);
      else if (key == "hidden") b.hidden = parse_int(value, line_no, key);
      else throw ValidationError(where + ": unknown key '" + key + "'");
    }
    if (b.kind == BlockKind::dense) {
      const int derived = b.in_channels + b.growth_rate * b.num_layers;
      if (out && *out != derived) {
        throw ValidationError(where + ": dense output " + std::to_string(*out) +
                              " != in + growth * layers = " + std::to_string(derived));
      }
      b.out_channels = derived;
    } else {
      if (!out) throw ValidationError(where + ": missing channel count");
      b.out_channels = *out;
    }
    b.projection = force_projection || b.needs_projection();
    if (is_stem) {
      spec.stem = b;
      have_stem = true;
    } else if (b.kind == BlockKind::classifier) {
      spec.classifier = b;
      have_head = true;
    } else {
      spec.blocks.push_back(b);
    }
    channels = b.out_channels;
  }
  if (!have_input) throw ValidationError("arch spec: missing 'input' line");
  if (!have_stem) throw ValidationError("arch spec: missing 'stem' line");
  if (!have_head) throw ValidationError("arch spec: missing 'classifier' line");
  spec.validate();
  return spec;
}

std::string format_arch_spec(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "input " << spec.in_channels << ' ' << spec.height << ' ' << spec.width << '\n';
  auto line = [&os](const std::string& head, const BlockSpec& b) {
    os << head;
    if (b.kind != BlockKind::dense) os << ' ' << b.out_channels;
    const int default_stride = b.kind == BlockKind::transition ? 2 : 1;
    if (b.stride != default_stride) os << " stride=" << b.stride;
    if (b.kind == BlockKind::dense) {
      os << " growth=" << b.growth_rate << " layers=" << b.num_layers << " bottleneck=" << b.bottleneck_width;
    }
    if (b.mid_channels != 0) os << " mid=" << b.mid_channels;
    if (b.hidden != 0) os << " hidden=" << b.hidden;
    if (b.pool) os << " pool";
    if (b.projection && !b.needs_projection()) os << " projection";
    os << '\n';
  };
  line("stem", spec.stem);
  for (const auto& b : spec.blocks) line(to_string(b.kind), b);
  line("classifier", spec.classifier);
  return os.str();
}

NetworkSpec load_arch_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open architecture file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_arch_spec(ss.str());
}

namespace {
const NetworkSpec& validated(const NetworkSpec& spec) {
  spec.validate();
  return spec;
}
}  // namespace

template <typename T>
NetworkT<T>::NetworkT(NetworkSpec spec, std::uint64_t seed)
    : spec_(validated(spec)),
      stem_([&] {
        Rng r = Rng(seed).split(0);
        return BlockT<T>(spec_.stem, r);
      }()),
      classifier_([&] {
        Rng r = Rng(seed).split(spec_.blocks.size() + 1);
        return BlockT<T>(spec_.classifier, r);
      }()) {
  blocks_.reserve(spec_.blocks.size());
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    Rng r = Rng(seed).split(i + 1);
    blocks_.emplace_back(spec_.blocks[i], r);
  }
}

template <typename T>
BlockT<T>& NetworkT<T>::at(int position) {
  return const_cast<BlockT<T>&>(static_cast<const NetworkT&>(*this).at(position));
}

template <typename T>
const BlockT<T>& NetworkT<T>::at(int position) const {
  const int n = static_cast<int>(blocks_.size());
  if (position == -1) return stem_;
  if (position == n) return classifier_;
  if (position < -1 || position > n) {
    throw UsageError("block position " + std::to_string(position) + " out of range [-1, " +
                     std::to_string(n) + "]");
  }
  return blocks_[static_cast<std::size_t>(position)];
}

template <typename T>
void NetworkT<T>::check_input(const Tensor<T>& input) const {
  if (input.ndim() != 4 || input.dim(1) != spec_.in_channels || input.dim(2) != spec_.height ||
      input.dim(3) != spec_.width || input.dim(0) < 1) {
    throw ShapeError("network expects input [B," + std::to_string(spec_.in_channels) + "," +
                     std::to_string(spec_.height) + "," + std::to_string(spec_.width) + "], got " +
                     shape_str(input.shape()));
  }
}

template <typename T>
typename NetworkT<T>::Output NetworkT<T>::forward(const Tensor<T>& input, Mode mode,
                                                  std::span<const int> taps) {
  const int n = static_cast<int>(blocks_.size());
  for (int t : taps) {
    if (t < 0 || t >= n) {
      throw UsageError("tap index " + std::to_string(t) + " out of range [0, " + std::to_string(n) + ")");
    }
  }
  check_input(input);
  Output out;
  out.taps.resize(taps.size());
  Tensor<T> x = stem_.forward(input, mode);
  for (int i = 0; i < n; ++i) {
    x = blocks_[static_cast<std::size_t>(i)].forward(x, mode);
    for (std::size_t k = 0; k < taps.size(); ++k) {
      if (taps[k] == i) out.taps[k] = x;
    }
  }
  out.logits = classifier_.forward(x, mode);
  return out;
}

template <typename T>
Tensor<T> NetworkT<T>::run(const Tensor<T>& x, int first, int last,
                           const std::function<Mode(int)>& mode_of) {
  if (first == -1) check_input(x);
  Tensor<T> y = x;
  for (int p = first; p <= last; ++p) y = at(p).forward(y, mode_of(p));
  return y;
}

template <typename T>
void NetworkT<T>::replace_blocks(int first_position, std::vector<BlockT<T>> replacement) {
  NetworkSpec candidate = spec_;
  for (std::size_t k = 0; k < replacement.size(); ++k) {
    candidate.at(first_position + static_cast<int>(k)) = replacement[k].spec();
  }
  candidate.validate();
  for (std::size_t k = 0; k < replacement.size(); ++k) {
    at(first_position + static_cast<int>(k)) = std::move(replacement[k]);
  }
  spec_ = std::move(candidate);
}

template <typename T>
ParamSet<T> NetworkT<T>::parameters() const {
  ParamSet<T> all;
  all.extend("stem.", stem_.params());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    all.extend("blocks." + std::to_string(i) + ".", blocks_[i].params());
  }
  all.extend("classifier.", classifier_.params());
  return all;
}

template <typename T>
ParamSet<T> NetworkT<T>::buffers() const {
  ParamSet<T> all;
  all.extend("stem.", stem_.buffers());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    all.extend("blocks." + std::to_string(i) + ".", blocks_[i].buffers());
  }
  all.extend("classifier.", classifier_.buffers());
  return all;
}

template <typename T>
void NetworkT<T>::set_trainable(bool on) {
  stem_.set_trainable(on);
  for (auto& b : blocks_) b.set_trainable(on);
  classifier_.set_trainable(on);
}

template <typename T>
NetworkT<T> NetworkT<T>::clone() const {
  NetworkT copy = *this;
  copy.stem_ = stem_.clone();
  for (std::size_t i = 0; i < blocks_.size(); ++i) copy.blocks_[i] = blocks_[i].clone();
  copy.classifier_ = classifier_.clone();
  return copy;
}

template class NetworkT<float>;
template class NetworkT<double>;

Network build_network(const std::string& preset, int num_classes, std::uint64_t seed) {
  return Network(preset_spec(preset, num_classes), seed);
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) { return Network(spec, seed); }

std::vector<int> argmax_rows(const Tensor<float>& logits) {
  const std::int64_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(B));
  auto z = logits.data();
  for (std::int64_t b = 0; b < B; ++b) {
    const float* row = z.data() + b * K;
    out[static_cast<std::size_t>(b)] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

}  // namespace netrecast
