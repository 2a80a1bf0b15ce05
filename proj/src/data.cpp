#include "netrecast/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "netrecast/checkpoint.hpp"

namespace netrecast {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::string to_string(DataFormat format) {
  switch (format) {
    case DataFormat::idx: return "idx";
    case DataFormat::cifar_binary: return "cifar-binary";
    case DataFormat::raw_tensor: return "raw-tensor";
  }
  return "?";
}

DataFormat parse_data_format(const std::string& name) {
  if (name == "idx") return DataFormat::idx;
  if (name == "cifar-binary" || name == "cifar") return DataFormat::cifar_binary;
  if (name == "raw-tensor" || name == "raw") return DataFormat::raw_tensor;
  throw ConfigError("unknown dataset format '" + name + "' (expected idx, cifar-binary or raw-tensor)");
}

void Dataset::validate() const {
  if (!images.defined() || images.ndim() != 4) throw ValidationError("dataset images must be [N, C, H, W]");
  if (static_cast<std::int64_t>(labels.size()) != images.dim(0)) {
    throw ValidationError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 1) throw ValidationError("dataset num_classes must be >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!norm.empty() && (static_cast<std::int64_t>(norm.mean.size()) != channels() ||
                        static_cast<std::int64_t>(norm.std.size()) != channels())) {
    throw ValidationError("normalization stats do not match the channel count");
  }
}

Dataset Dataset::slice(std::int64_t first, std::int64_t count) const {
  if (first < 0 || count < 0 || first + count > size()) {
    throw UsageError("slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") outside dataset of size " + std::to_string(size()));
  }
  const std::int64_t per = channels() * height() * width();
  Dataset out;
  out.images = Tensor<float>(Shape{count, channels(), height(), width()});
  auto src = images.data().subspan(static_cast<std::size_t>(first * per), static_cast<std::size_t>(count * per));
  std::copy(src.begin(), src.end(), out.images.mutable_data().begin());
  out.labels.assign(labels.begin() + first, labels.begin() + first + count);
  out.num_classes = num_classes;
  out.split = split;
  out.norm = norm;
  return out;
}

NormStats compute_norm_stats(const Dataset& data) {
  const std::int64_t N = data.size(), C = data.channels(), P = data.height() * data.width();
  NormStats s;
  s.mean.resize(static_cast<std::size_t>(C));
  s.std.resize(static_cast<std::size_t>(C));
  auto x = data.images.data();
  for (std::int64_t c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      const float* p = x.data() + (n * C + c) * P;
      for (std::int64_t i = 0; i < P; ++i) {
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double count = static_cast<double>(N * P);
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    s.mean[c] = static_cast<float>(mean);
    // Guard constant channels so normalization stays finite.
    s.std[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return s;
}

namespace {

std::string read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_all(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t be32(const std::string& b, std::size_t off) {
  const auto* u = reinterpret_cast<const unsigned char*>(b.data()) + off;
  return static_cast<std::uint32_t>(u[0]) << 24 | static_cast<std::uint32_t>(u[1]) << 16 |
         static_cast<std::uint32_t>(u[2]) << 8 | static_cast<std::uint32_t>(u[3]);
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

int resolve_classes(const std::vector<int>& labels, int requested) {
  if (requested > 0) return requested;
  int top = 0;
  for (int l : labels) top = std::max(top, l + 1);
  return std::max(top, 1);
}

void check_labels(const std::vector<int>& labels, int num_classes, const std::string& path) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw LabelError(path + ": label " + std::to_string(labels[i]) + " of record " + std::to_string(i) +
                       " overflows " + std::to_string(num_classes) + " classes");
    }
  }
}

Dataset load_idx(const std::string& path, const LoadOptions& options) {
  const std::string img = read_all(path);
  if (img.size() < 4 || be32(img, 0) != 0x00000803) {
    throw FormatError(path + ": bad IDX image magic (expected 0x00000803, unsigned byte, 3 dims)");
  }
  if (img.size() < 16) throw TruncatedError(path + ": IDX header truncated");
  const std::int64_t n = be32(img, 4), h = be32(img, 8), w = be32(img, 12);
  if (img.size() < static_cast<std::size_t>(16 + n * h * w)) {
    throw TruncatedError(path + ": IDX image data truncated (" + std::to_string(n) + " images of " +
                         std::to_string(h) + "x" + std::to_string(w) + " declared)");
  }

  std::string labels_path = options.labels_path;
  if (labels_path.empty()) {
    labels_path = path;
    const auto pos = labels_path.rfind("images");
    if (pos == std::string::npos) throw ConfigError(path + ": cannot derive the IDX labels path");
    labels_path.replace(pos, 6, "labels");
    const auto idx3 = labels_path.find("idx3", pos);
    if (idx3 != std::string::npos) labels_path.replace(idx3, 4, "idx1");
  }
  const std::string lab = read_all(labels_path);
  if (lab.size() < 4 || be32(lab, 0) != 0x00000801) {
    throw FormatError(labels_path + ": bad IDX label magic (expected 0x00000801)");
  }
  if (lab.size() < 8) throw TruncatedError(labels_path + ": IDX header truncated");
  if (be32(lab, 4) != static_cast<std::uint32_t>(n)) {
    throw FormatError(labels_path + ": label count does not match image count");
  }
  if (lab.size() < static_cast<std::size_t>(8 + n)) throw TruncatedError(labels_path + ": label data truncated");

  Dataset d;
  d.split = options.split;
  d.images = Tensor<float>(Shape{n, 1, h, w});
  auto px = d.images.mutable_data();
  const auto* u = reinterpret_cast<const unsigned char*>(img.data()) + 16;
  for (std::int64_t i = 0; i < n * h * w; ++i) px[i] = static_cast<float>(u[i]) / 255.0f;
  const auto* l = reinterpret_cast<const unsigned char*>(lab.data()) + 8;
  d.labels.assign(l, l + n);
  d.num_classes = resolve_classes(d.labels, options.num_classes);
  check_labels(d.labels, d.num_classes, labels_path);
  return d;
}

constexpr std::int64_t kCifarSide = 32;
constexpr std::int64_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::int64_t kCifarRecord = 1 + kCifarPixels;

void append_cifar(const std::string& path, std::vector<float>& pixels, std::vector<int>& labels) {
  const std::string bytes = read_all(path);
  if (bytes.size() % kCifarRecord != 0) {
    throw TruncatedError(path + ": size " + std::to_string(bytes.size()) + " is not a whole number of " +
                         std::to_string(kCifarRecord) + "-byte records");
  }
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t records = bytes.size() / kCifarRecord;
  for (std::size_t r = 0; r < records; ++r) {
    const auto* rec = u + r * kCifarRecord;
    labels.push_back(rec[0]);
    for (std::int64_t i = 0; i < kCifarPixels; ++i) pixels.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
  }
}

Dataset finish_cifar(std::vector<float> pixels, std::vector<int> labels, const LoadOptions& options,
                     const std::string& what) {
  Dataset d;
  d.split = options.split;
  const auto n = static_cast<std::int64_t>(labels.size());
  d.images = Tensor<float>(Shape{n, 3, kCifarSide, kCifarSide}, std::move(pixels));
  d.labels = std::move(labels);
  d.num_classes = options.num_classes > 0 ? options.num_classes : 10;
  check_labels(d.labels, d.num_classes, what);
  return d;
}

Dataset load_raw(const std::string& path, const LoadOptions& options) {
  const BlobFile blob = read_blob_file(path);
  if (blob.kind != "dataset") throw FormatError(path + ": blob kind '" + blob.kind + "' is not a dataset");
  Dataset d;
  d.split = options.split;
  d.images = blob.tensor("images");
  if (d.images.ndim() != 4) throw FormatError(path + ": images tensor must be rank 4");
  const auto& lab = blob.tensor("labels");
  if (lab.ndim() != 1 || lab.dim(0) != d.images.dim(0)) throw FormatError(path + ": labels tensor does not match images");
  for (float v : lab.data()) {
    if (v < 0 || v != std::floor(v)) throw LabelError(path + ": non-integral or negative label");
    d.labels.push_back(static_cast<int>(v));
  }
  int stored = 0;
  for (const auto& m : blob.meta) {
    std::istringstream ls(m);
    std::string key;
    ls >> key;
    if (key == "num_classes") ls >> stored;
  }
  d.num_classes = options.num_classes > 0 ? options.num_classes : resolve_classes(d.labels, stored);
  check_labels(d.labels, d.num_classes, path);
  return d;
}

}  // namespace

Dataset load_dataset(const std::string& path, DataFormat format, const LoadOptions& options) {
  switch (format) {
    case DataFormat::idx: return load_idx(path, options);
    case DataFormat::cifar_binary: {
      std::string p[] = {path};
      return load_cifar_files(p, options);
    }
    case DataFormat::raw_tensor: return load_raw(path, options);
  }
  throw ConfigError("unhandled dataset format");
}

Dataset load_cifar_files(std::span<const std::string> paths, const LoadOptions& options) {
  std::vector<float> pixels;
  std::vector<int> labels;
  std::string what;
  for (const auto& p : paths) {
    append_cifar(p, pixels, labels);
    what += (what.empty() ? "" : ",") + p;
  }
  return finish_cifar(std::move(pixels), std::move(labels), options, what);
}

void save_raw_tensor(const Dataset& data, const std::string& path) {
  BlobFile blob;
  blob.kind = "dataset";
  blob.meta.push_back("num_classes " + std::to_string(data.num_classes));
  blob.meta.push_back("split " + to_string(data.split));
  Tensor<float> labels(Shape{data.size()});
  auto l = labels.mutable_data();
  for (std::size_t i = 0; i < data.labels.size(); ++i) l[i] = static_cast<float>(data.labels[i]);
  blob.tensors.emplace_back("images", data.images);
  blob.tensors.emplace_back("labels", labels);
  write_blob_file(path, blob);
}

namespace {
unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}
}  // namespace

void write_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
  if (data.channels() != 1) throw UsageError("IDX export needs single-channel images");
  std::string img;
  put_be32(img, 0x00000803);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(data.height()));
  put_be32(img, static_cast<std::uint32_t>(data.width()));
  for (float v : data.images.data()) img.push_back(static_cast<char>(to_byte(v)));
  std::string lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lab.push_back(static_cast<char>(l));
  write_all(images_path, img);
  write_all(labels_path, lab);
}

void write_cifar_binary(const Dataset& data, const std::string& path) {
  if (data.channels() != 3 || data.height() != kCifarSide || data.width() != kCifarSide) {
    throw UsageError("CIFAR-binary export needs 3x32x32 images");
  }
  std::string out;
  auto x = data.images.data();
  for (std::int64_t n = 0; n < data.size(); ++n) {
    out.push_back(static_cast<char>(data.labels[n]));
    for (std::int64_t i = 0; i < kCifarPixels; ++i) out.push_back(static_cast<char>(to_byte(x[n * kCifarPixels + i])));
  }
  write_all(path, out);
}

void augment_with(std::span<const float> image, std::span<float> out, std::int64_t channels,
                  std::int64_t height, std::int64_t width, int offset_y, int offset_x, bool flip, int pad) {
  for (std::int64_t c = 0; c < channels; ++c) {
    const float* src = image.data() + c * height * width;
    float* dst = out.data() + c * height * width;
    for (std::int64_t y = 0; y < height; ++y) {
      const std::int64_t sy = y + offset_y - pad;
      for (std::int64_t x = 0; x < width; ++x) {
        const std::int64_t cx = flip ? width - 1 - x : x;
        const std::int64_t sx = cx + offset_x - pad;
        const bool inside = sy >= 0 && sy < height && sx >= 0 && sx < width;
        dst[y * width + x] = inside ? src[sy * width + sx] : 0.0f;
      }
    }
  }
}

Tensor<float> augment(const Tensor<float>& image, Rng& rng, int pad) {
  if (image.ndim() != 3) throw ShapeError("augment expects one [C, H, W] image, got " + shape_str(image.shape()));
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1)));
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1)));
  const bool flip = rng.bernoulli(0.5);
  Tensor<float> out(image.shape());
  augment_with(image.data(), out.mutable_data(), image.dim(0), image.dim(1), image.dim(2), oy, ox, flip, pad);
  return out;
}

void normalize(std::span<float> batch, std::int64_t channels, std::int64_t plane, const NormStats& stats) {
  if (stats.empty()) return;
  const std::int64_t per = channels * plane;
  for (std::size_t base = 0; base < batch.size(); base += static_cast<std::size_t>(per)) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const float m = stats.mean[c], inv = 1.0f / stats.std[c];
      float* p = batch.data() + base + c * plane;
      for (std::int64_t i = 0; i < plane; ++i) p[i] = (p[i] - m) * inv;
    }
  }
}

Dataset synth_dataset(std::uint64_t seed, std::int64_t n, int num_classes, std::int64_t size, Split split,
                      std::int64_t channels) {
  if (num_classes < 1 || n < num_classes) throw UsageError("synth_dataset needs n >= num_classes >= 1");
  if (size < 4 || channels < 1) throw UsageError("synth_dataset needs size >= 4 and channels >= 1");
  const Rng root(seed);

  Dataset d;
  d.split = split;
  d.num_classes = num_classes;
  d.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % num_classes);
  Rng order = root.split(0xC1A55E5ULL);
  order.shuffle(std::span<int>(d.labels));

  // Up to five orientation classes per frequency band. Orientation k sits at
  // +-(k + 0.5) * 90deg / orientations, so mirroring maps a class onto itself.
  const int orientations = num_classes > 5 ? (num_classes + 1) / 2 : num_classes;
  const std::int64_t plane = size * size;
  d.images = Tensor<float>(Shape{n, channels, size, size});
  auto px = d.images.mutable_data();
  constexpr double pi = std::numbers::pi;
  for (std::int64_t i = 0; i < n; ++i) {
    Rng r = root.split(static_cast<std::uint64_t>(i) + 1);
    const int label = d.labels[i];
    const int band = label / orientations;
    const int orient = label % orientations;
    const double sign = r.bernoulli(0.5) ? 1.0 : -1.0;
    // Orientation jitter of +-0.275 of the class spacing keeps neighbouring
    // classes apart.
    const double theta = sign * (orient + 0.5 + r.uniform(-0.275, 0.275)) * (pi / 2.0) / orientations;
    const double cycles = band == 0 ? r.uniform(1.5, 2.4) : r.uniform(2.8, 4.0);
    const double phase = r.uniform(0.0, 2.0 * pi);
    const double contrast = r.uniform(0.18, 0.42);
    const double base = r.uniform(0.3, 0.7);
    const double kx = 2.0 * pi * cycles * std::cos(theta) / static_cast<double>(size);
    const double ky = 2.0 * pi * cycles * std::sin(theta) / static_cast<double>(size);
    // Distractor grating at a uniform orientation, 0.6x the class contrast.
    const double d_theta = r.uniform(0.0, pi);
    const double d_cycles = r.uniform(1.5, 4.0);
    const double d_phase = r.uniform(0.0, 2.0 * pi);
    const double dkx = 2.0 * pi * d_cycles * std::cos(d_theta) / static_cast<double>(size);
    const double dky = 2.0 * pi * d_cycles * std::sin(d_theta) / static_cast<double>(size);
    for (std::int64_t c = 0; c < channels; ++c) {
      const double gain = r.uniform(0.6, 1.4);
      const double d_gain = r.uniform(0.6, 1.4);
      float* dst = px.data() + (i * channels + c) * plane;
      for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
          const double v = base + contrast * gain * std::sin(kx * x + ky * y + phase) +
                           0.6 * contrast * d_gain * std::sin(dkx * x + dky * y + d_phase) + 0.26 * r.normal();
          dst[y * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return d;
}

BatchStream::BatchStream(const Dataset& data, NormStats norm, StreamConfig config, std::uint64_t seed)
    : data_(&data), norm_(std::move(norm)), config_(config), seed_(seed) {
  if (config_.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (data.size() == 0) throw ValidationError("cannot stream an empty dataset");
  start_epoch(0);
}

std::int64_t BatchStream::batches_per_epoch() const {
  const std::int64_t n = data_->size(), b = config_.batch_size;
  return config_.drop_last ? n / b : (n + b - 1) / b;
}

void BatchStream::start_epoch(int epoch) {
  order_.resize(static_cast<std::size_t>(data_->size()));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
  const Rng root(seed_);
  if (config_.shuffle) {
    Rng r = root.split(2 * static_cast<std::uint64_t>(epoch));
    r.shuffle(std::span<std::int64_t>(order_));
  }
  aug_rng_ = root.split(2 * static_cast<std::uint64_t>(epoch) + 1);
  cursor_ = 0;
}

bool BatchStream::next(Batch& batch) {
  const std::int64_t n = data_->size();
  std::int64_t count = std::min<std::int64_t>(config_.batch_size, n - cursor_);
  if (count <= 0 || (config_.drop_last && count < config_.batch_size)) return false;
  const std::int64_t C = data_->channels(), H = data_->height(), W = data_->width(), per = C * H * W;
  batch.images = Tensor<float>(Shape{count, C, H, W});
  batch.labels.resize(static_cast<std::size_t>(count));
  batch.indices.resize(static_cast<std::size_t>(count));
  auto dst = batch.images.mutable_data();
  auto src = data_->images.data();
  const int pad = config_.pad;
  for (std::int64_t k = 0; k < count; ++k) {
    const std::int64_t idx = order_[static_cast<std::size_t>(cursor_ + k)];
    batch.indices[k] = idx;
    batch.labels[k] = data_->labels[static_cast<std::size_t>(idx)];
    auto in = src.subspan(static_cast<std::size_t>(idx * per), static_cast<std::size_t>(per));
    auto out = dst.subspan(static_cast<std::size_t>(k * per), static_cast<std::size_t>(per));
    if (config_.augment) {
      const int oy = static_cast<int>(aug_rng_.below(static_cast<std::uint64_t>(2 * pad + 1)));
      const int ox = static_cast<int>(aug_rng_.below(static_cast<std::uint64_t>(2 * pad + 1)));
      const bool flip = aug_rng_.bernoulli(0.5);
      augment_with(in, out, C, H, W, oy, ox, flip, pad);
    } else {
      std::copy(in.begin(), in.end(), out.begin());
    }
  }
  normalize(dst, C, H * W, norm_);
  cursor_ += count;
  return true;
}

}  // namespace netrecast
