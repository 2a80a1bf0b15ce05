#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netrecast/rng.hpp"
#include "netrecast/tensor.hpp"

namespace netrecast {

enum class Split { train, val, test };
std::string to_string(Split split);
Split parse_split(const std::string& name);

enum class DataFormat { idx, cifar_binary, raw_tensor };
std::string to_string(DataFormat format);
DataFormat parse_data_format(const std::string& name);

struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;

  bool empty() const noexcept { return mean.empty(); }
};

// Images are [N, C, H, W] with values in [0, 1].
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::train;
  NormStats norm;

  std::int64_t size() const { return images.defined() ? images.dim(0) : 0; }
  std::int64_t channels() const { return images.dim(1); }
  std::int64_t height() const { return images.dim(2); }
  std::int64_t width() const { return images.dim(3); }

  // Throws ValidationError / LabelError if the fields disagree.
  void validate() const;
  // Samples [first, first + count) as a new dataset sharing nothing.
  Dataset slice(std::int64_t first, std::int64_t count) const;
};

// Per-channel mean and (population) standard deviation over all images.
NormStats compute_norm_stats(const Dataset& data);

struct LoadOptions {
  Split split = Split::train;
  // 0 means: CIFAR-binary 10, IDX / raw-tensor inferred (max label + 1 or
  // the stored value).
  int num_classes = 0;
  // IDX only: labels file. Empty means the images path with "images"
  // replaced by "labels" (and a following "idx3" by "idx1").
  std::string labels_path;
};

// idx          ubyte IDX images (magic 0x00000803, N x H x W, big-endian
//              extents) plus an IDX label file (magic 0x00000801)
// cifar-binary records of 1 label byte + 3072 channel-planar pixel bytes
// raw-tensor   blob file of kind "dataset" holding "images" and "labels"
//
// Bad magic raises FormatError, a short file TruncatedError, a label not
// below num_classes LabelError.
Dataset load_dataset(const std::string& path, DataFormat format, const LoadOptions& options = {});
// Several CIFAR-binary batch files concatenated in order.
Dataset load_cifar_files(std::span<const std::string> paths, const LoadOptions& options = {});

void save_raw_tensor(const Dataset& data, const std::string& path);

// Writers for the two external formats (test fixtures, export).
void write_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);
void write_cifar_binary(const Dataset& data, const std::string& path);

// Pads `pad` zero pixels on every side, takes the window at (offset_y,
// offset_x) of the padded image and optionally mirrors it horizontally.
// offset (pad, pad) without flip is the identity.
void augment_with(std::span<const float> image, std::span<float> out, std::int64_t channels,
                  std::int64_t height, std::int64_t width, int offset_y, int offset_x, bool flip,
                  int pad = 4);

// Standard CIFAR augmentation: uniform offsets in [0, 2*pad], flip with
// probability 0.5. `image` is one [C, H, W] sample.
Tensor<float> augment(const Tensor<float>& image, Rng& rng, int pad = 4);

// (x - mean[c]) / std[c] in place over a [B, C, H, W] batch.
void normalize(std::span<float> batch, std::int64_t channels, std::int64_t plane, const NormStats& stats);

// Procedural images: each class is an oriented sinusoidal grating
// (orientation and frequency band chosen by the class) with random phase,
// contrast and colour, a distractor grating at a random orientation and
// additive noise. Class patterns are mirror-symmetric
// as a set, so horizontal flips do not change the label. Labels are exactly
// balanced (the first n % num_classes classes get one extra sample) and
// shuffled.
Dataset synth_dataset(std::uint64_t seed, std::int64_t n, int num_classes, std::int64_t size,
                      Split split = Split::train, std::int64_t channels = 3);

struct Batch {
  Tensor<float> images;  // normalized
  std::vector<int> labels;
  std::vector<std::int64_t> indices;
};

struct StreamConfig {
  int batch_size = 64;
  bool shuffle = true;
  bool augment = false;
  bool drop_last = false;
  int pad = 4;
};

// Epoch-wise batching over an immutable dataset. The permutation and the
// augmentation draws of epoch e depend only on (seed, e), so any epoch can
// be replayed without running the earlier ones.
class BatchStream {
 public:
  BatchStream(const Dataset& data, NormStats norm, StreamConfig config, std::uint64_t seed);

  std::int64_t batches_per_epoch() const;
  void start_epoch(int epoch);
  // Fills `batch` and returns true, or returns false at the end of the epoch.
  bool next(Batch& batch);

  const Dataset& dataset() const noexcept { return *data_; }
  const StreamConfig& config() const noexcept { return config_; }

 private:
  const Dataset* data_;
  NormStats norm_;
  StreamConfig config_;
  std::uint64_t seed_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
  Rng aug_rng_{0};
};

}  // namespace netrecast
