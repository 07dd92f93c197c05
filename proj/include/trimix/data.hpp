#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trimix/tensor.hpp"

namespace trimix::data {

// Images are [N x C x H x W] with values in [0, 1]; labels are in [0, K).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::string name;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t input_width() const { return images.row_size(); }
};

// K Gaussian blobs on G x G single-channel canvases. Class k has its blob
// centred on the vertical mid-line at row (k + 1) * G / (K + 1); each sample
// jitters the centre and adds a random background level and pixel noise.
struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t count = 300;
  std::size_t grid = 16;
  std::uint64_t seed = 7;
  double sigma = 1.5;    // blob radius, pixels
  double jitter = 1.0;   // std of the centre offset, pixels
  double noise = 0.3;    // std of additive pixel noise
  double background = 0.8;  // background level drawn from [0, background]
};

Dataset make_synthetic(const SyntheticSpec& spec);

// MNIST-format IDX files: u32 magic 0x00000803 / 0x00000801 then big-endian
// u32 dimensions, then unsigned bytes.
// num_classes = 0 infers K as max label + 1; otherwise labels >= num_classes
// are rejected.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes = 0);

// One sample per line: label, then C*H*W pixel bytes 0-255 in CHW order.
Dataset load_csv(const std::string& path, std::size_t channels, std::size_t height, std::size_t width,
                 std::size_t num_classes = 0);

// Rows `indices` of ds as a new dataset (same name and class count).
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

struct AugmentPolicy {
  std::size_t pad = 2;      // reflect padding before a random crop back to H x W
  double hflip = 0.5;       // horizontal flip probability
  double brightness = 0.4;  // multiplicative factor drawn from [1-b, 1+b]
  double contrast = 0.4;    // factor drawn from [1-c, 1+c], around the image mean
  double grayscale = 0.1;   // channel-mean probability; no-op for one channel

  static AugmentPolicy identity() { return {0, 0.0, 0.0, 0.0, 0.0}; }
  void validate() const;
};

struct ViewPair {
  Tensor x;
  Tensor x_prime;
  std::vector<int> labels;  // for evaluators only
};

// Identifies the rng streams for one batch; per-sample streams are derived
// from (seed, epoch, batch, row, view).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
};

// One transform draw applied to a single C x H x W image.
std::vector<double> augment_image(std::span<const double> image, std::size_t channels, std::size_t height,
                                  std::size_t width, const AugmentPolicy& policy, std::uint64_t stream_seed);

// Two independent transform draws per image of an even-sized batch.
ViewPair two_views(const Tensor& batch_images, std::vector<int> labels, const AugmentPolicy& policy, StreamKey key);

// Seeded shuffle of [0, n) cut into batches of `batch`; the trailing partial
// batch is dropped when drop_last is set.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                              std::uint64_t epoch, bool drop_last = true);

// Images of the given rows, stacked as [B x C x H x W].
Tensor gather_images(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace trimix::data
