#include "trimix/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "trimix/error.hpp"
#include "trimix/rng.hpp"

namespace trimix::data {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'", 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::uint32_t u32_be() {
    need(4, "header field");
    const std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                            (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
    pos_ += 4;
    return v;
  }

  const unsigned char* take(std::size_t n, const char* what) {
    need(n, what);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(path_ + ": truncated " + what + ", need " + std::to_string(n) + " bytes, have " +
                            std::to_string(bytes_.size() - pos_),
                        bytes_.size());
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::size_t resolve_classes(const std::vector<int>& labels, std::size_t num_classes,
                            const std::vector<std::size_t>& offsets, const std::string& path) {
  if (num_classes == 0) {
    int mx = 0;
    for (int l : labels) mx = std::max(mx, l);
    return static_cast<std::size_t>(mx) + 1;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw FormatError(path + ": label " + std::to_string(labels[i]) + " out of range [0, " +
                            std::to_string(num_classes) + ")",
                        offsets[i]);
    }
  }
  return num_classes;
}

// Reflect-pad index into [0, n).
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (m == 1) return 0;
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes == 0 || spec.count == 0 || spec.grid < 2) {
    throw ContractError("synthetic data needs classes >= 1, count >= 1, grid >= 2");
  }
  const std::size_t g = spec.grid, k = spec.classes;
  Rng rng(derive_seed(spec.seed, {0x5e7}));
  std::vector<double> pixels(spec.count * g * g);
  std::vector<int> labels(spec.count);
  const double mid = (static_cast<double>(g) - 1.0) / 2.0;
  for (std::size_t n = 0; n < spec.count; ++n) {
    const auto cls = static_cast<int>(n % k);
    labels[n] = cls;
    const double cy = static_cast<double>(cls + 1) * static_cast<double>(g) / static_cast<double>(k + 1) - 0.5 +
                      spec.jitter * rng.normal();
    const double cx = mid + spec.jitter * rng.normal();
    const double bg = spec.background * rng.uniform();
    double* img = pixels.data() + n * g * g;
    for (std::size_t r = 0; r < g; ++r) {
      for (std::size_t c = 0; c < g; ++c) {
        const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
        const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * spec.sigma * spec.sigma));
        img[r * g + c] = std::clamp(bg + blob + spec.noise * rng.normal(), 0.0, 1.0);
      }
    }
  }
  Dataset ds;
  ds.images = Tensor({spec.count, 1, g, g}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.name = "synthetic-blobs";
  ds.num_classes = k;
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes) {
  const auto img_bytes = read_file(images_path);
  ByteReader img(img_bytes, images_path);
  const std::uint32_t magic = img.u32_be();
  if (magic != kIdxImagesMagic) {
    throw FormatError(images_path + ": bad IDX image magic 0x" + [&] {
      std::ostringstream os;
      os << std::hex << magic;
      return os.str();
    }() + ", expected 0x803", 0);
  }
  const std::size_t n = img.u32_be(), h = img.u32_be(), w = img.u32_be();
  if (n == 0 || h == 0 || w == 0) throw FormatError(images_path + ": zero-sized IDX dimension", 4);
  const unsigned char* px = img.take(n * h * w, "pixel data");
  std::vector<double> pixels(n * h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = px[i] / 255.0;

  const auto lab_bytes = read_file(labels_path);
  ByteReader lab(lab_bytes, labels_path);
  const std::uint32_t lmagic = lab.u32_be();
  if (lmagic != kIdxLabelsMagic) throw FormatError(labels_path + ": bad IDX label magic, expected 0x801", 0);
  const std::size_t ln = lab.u32_be();
  if (ln != n) {
    throw FormatError(labels_path + ": " + std::to_string(ln) + " labels for " + std::to_string(n) + " images", 4);
  }
  const std::size_t label_start = lab.pos();
  const unsigned char* lb = lab.take(n, "label data");
  std::vector<int> labels(lb, lb + n);
  std::vector<std::size_t> offsets(n);
  for (std::size_t i = 0; i < n; ++i) offsets[i] = label_start + i;

  Dataset ds;
  ds.images = Tensor({n, 1, h, w}, std::move(pixels));
  ds.num_classes = resolve_classes(labels, num_classes, offsets, labels_path);
  ds.labels = std::move(labels);
  ds.name = images_path;
  return ds;
}

Dataset load_csv(const std::string& path, std::size_t channels, std::size_t height, std::size_t width,
                 std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'", 0);
  const std::size_t per = channels * height * width;
  if (per == 0) throw ContractError("csv image shape must be positive");
  std::vector<double> pixels;
  std::vector<int> labels;
  std::vector<std::size_t> offsets;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<long> vals;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stol(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(path + ": non-integer field '" + tok + "'", line_start);
      }
    }
    if (vals.size() != per + 1) {
      throw FormatError(path + ": expected " + std::to_string(per + 1) + " fields, got " + std::to_string(vals.size()),
                        line_start);
    }
    if (vals[0] < 0) throw FormatError(path + ": negative label", line_start);
    labels.push_back(static_cast<int>(vals[0]));
    offsets.push_back(line_start);
    for (std::size_t i = 1; i < vals.size(); ++i) {
      if (vals[i] < 0 || vals[i] > 255) throw FormatError(path + ": pixel outside 0-255", line_start);
      pixels.push_back(static_cast<double>(vals[i]) / 255.0);
    }
  }
  if (labels.empty()) throw FormatError(path + ": no samples", 0);
  Dataset ds;
  ds.images = Tensor({labels.size(), channels, height, width}, std::move(pixels));
  ds.num_classes = resolve_classes(labels, num_classes, offsets, path);
  ds.labels = std::move(labels);
  ds.name = path;
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.images = gather_images(ds, indices);
  out.labels = gather_labels(ds, indices);
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  return out;
}

void AugmentPolicy::validate() const {
  if (hflip < 0.0 || hflip > 1.0 || grayscale < 0.0 || grayscale > 1.0) {
    throw ContractError("augmentation probabilities must lie in [0, 1]");
  }
  if (brightness < 0.0 || brightness >= 1.0 || contrast < 0.0 || contrast >= 1.0) {
    throw ContractError("jitter strengths must lie in [0, 1)");
  }
}

std::vector<double> augment_image(std::span<const double> image, std::size_t channels, std::size_t height,
                                  std::size_t width, const AugmentPolicy& policy, std::uint64_t stream_seed) {
  Rng rng(stream_seed);
  const auto pad = static_cast<std::ptrdiff_t>(policy.pad);
  // Draw order is part of the determinism contract.
  const auto oy = static_cast<std::ptrdiff_t>(rng.below(2 * policy.pad + 1)) - pad;
  const auto ox = static_cast<std::ptrdiff_t>(rng.below(2 * policy.pad + 1)) - pad;
  const bool flip = rng.bernoulli(policy.hflip);
  const double bright = 1.0 + policy.brightness * (2.0 * rng.uniform() - 1.0);
  const double contrast = 1.0 + policy.contrast * (2.0 * rng.uniform() - 1.0);
  const bool gray = rng.bernoulli(policy.grayscale);

  const std::size_t plane = height * width;
  std::vector<double> out(image.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t r = 0; r < height; ++r) {
      const std::size_t sr = reflect(static_cast<std::ptrdiff_t>(r) + oy, height);
      for (std::size_t col = 0; col < width; ++col) {
        const std::size_t dst_col = flip ? width - 1 - col : col;
        const std::size_t sc = reflect(static_cast<std::ptrdiff_t>(col) + ox, width);
        out[c * plane + r * width + dst_col] = image[c * plane + sr * width + sc];
      }
    }
  }
  if (bright != 1.0)
    for (auto& v : out) v *= bright;
  if (contrast != 1.0) {
    double m = 0.0;
    for (double v : out) m += v;
    m /= static_cast<double>(out.size());
    for (auto& v : out) v = (v - m) * contrast + m;
  }
  if (gray && channels > 1) {
    for (std::size_t i = 0; i < plane; ++i) {
      double m = 0.0;
      for (std::size_t c = 0; c < channels; ++c) m += out[c * plane + i];
      m /= static_cast<double>(channels);
      for (std::size_t c = 0; c < channels; ++c) out[c * plane + i] = m;
    }
  }
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ViewPair two_views(const Tensor& batch_images, std::vector<int> labels, const AugmentPolicy& policy, StreamKey key) {
  if (batch_images.rank() != 4) {
    throw DimensionError("two_views expects [B x C x H x W], got " + shape_str(batch_images.shape()));
  }
  const std::size_t b = batch_images.dim(0);
  if (b % 2 != 0) throw BatchParityError("two_views: batch size must be even, got " + std::to_string(b));
  policy.validate();
  const std::size_t c = batch_images.dim(1), h = batch_images.dim(2), w = batch_images.dim(3);
  if (policy.pad >= h || policy.pad >= w) throw ContractError("augmentation padding must be smaller than the image");
  const std::size_t per = c * h * w;
  std::vector<double> v1(batch_images.size()), v2(batch_images.size());
  for (std::size_t i = 0; i < b; ++i) {
    const auto src = batch_images.data().subspan(i * per, per);
    const auto a = augment_image(src, c, h, w, policy, derive_seed(key.seed, {key.epoch, key.batch, i, 0}));
    const auto a2 = augment_image(src, c, h, w, policy, derive_seed(key.seed, {key.epoch, key.batch, i, 1}));
    std::copy(a.begin(), a.end(), v1.begin() + static_cast<std::ptrdiff_t>(i * per));
    std::copy(a2.begin(), a2.end(), v2.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return {Tensor(batch_images.shape(), std::move(v1)), Tensor(batch_images.shape(), std::move(v2)), std::move(labels)};
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                              std::uint64_t epoch, bool drop_last) {
  if (batch == 0 || batch % 2 != 0) {
    throw BatchParityError("batch size must be even, got " + std::to_string(batch));
  }
  if (batch > n) {
    throw ContractError("batch size " + std::to_string(batch) + " exceeds dataset size " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {epoch, 0xba7c4}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    if (end - start < batch && drop_last) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Tensor gather_images(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t per = ds.images.row_size();
  std::vector<double> out;
  out.reserve(indices.size() * per);
  for (auto i : indices) {
    if (i >= ds.size()) throw ContractError("sample index " + std::to_string(i) + " out of range");
    const auto row = ds.images.data().subspan(i * per, per);
    out.insert(out.end(), row.begin(), row.end());
  }
  Shape shape = ds.images.shape();
  shape[0] = indices.size();
  return Tensor(std::move(shape), std::move(out));
}

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.labels.at(i));
  return out;
}

}  // namespace trimix::data
