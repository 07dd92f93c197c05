#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimix/model.hpp"

namespace trimix {

struct LambdaPolicy {
  enum class Kind { Uniform, Fixed };
  Kind kind = Kind::Uniform;
  double value = 0.0;  // used by Fixed

  static LambdaPolicy uniform() { return {}; }
  static LambdaPolicy fixed(double v) { return {Kind::Fixed, v}; }
  std::string str() const;
  static LambdaPolicy parse(const std::string& s);
};

// Which representation the virtual-embedding loss and the consistency loss
// consume: first letter for the virtual loss, second for consistency.
enum class Placement { ZZ, YY, ZY };

std::string placement_str(Placement p);
Placement parse_placement(const std::string& s);

enum class DatasetKind { Synthetic, Idx, Csv };

// Every hyperparameter and switch of a run. Serialised as a flat key=value
// text file; see TriMixConfig::keys() for the list.
struct TriMixConfig {
  // objective
  double alpha = 5e-3;
  double beta = 1000.0;
  double gamma = 200.0;
  double tau = 2.0;
  LambdaPolicy lambda_policy;
  bool enable_vrt = true;
  bool enable_con = true;
  bool enable_feature_norm = true;
  Placement placement = Placement::ZZ;
  bool normalize_on = true;
  bool allow_degenerate = false;

  // model; the input width comes from the dataset
  std::vector<std::size_t> encoder_widths{128, 64};
  std::vector<std::size_t> projector_widths{64, 64, 32};
  model::Activation activation = model::Activation::Relu;

  // pretraining
  std::size_t batch = 64;
  std::size_t epochs = 50;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  std::size_t save_every = 0;  // 0: only at the end
  std::string checkpoint_precision = "f32";

  // data
  DatasetKind dataset = DatasetKind::Synthetic;
  std::size_t synthetic_classes = 3;
  std::size_t synthetic_train = 600;
  std::size_t synthetic_test = 300;
  std::size_t synthetic_grid = 16;
  std::uint64_t synthetic_seed = 7;
  double synthetic_sigma = 1.5;
  double synthetic_jitter = 1.0;
  double synthetic_noise = 0.3;
  double synthetic_background = 0.8;
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_csv, test_csv;
  std::size_t csv_channels = 1, csv_height = 28, csv_width = 28;

  // augmentation
  std::size_t aug_pad = 2;
  double aug_hflip = 0.5;
  double aug_brightness = 0.4;
  double aug_contrast = 0.4;
  double aug_grayscale = 0.1;

  // evaluation
  std::size_t knn_k = 20;
  std::size_t probe_epochs = 100;
  double probe_lr = 1e-3;
  double probe_momentum = 0.9;
  double probe_weight_decay = 1e-6;
  std::size_t probe_batch = 256;
  double finetune_fraction = 0.1;
  std::size_t finetune_epochs = 100;
  std::uint64_t eval_seed = 0;

  // Throws ConfigError on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Checks cross-field invariants (even batch, tau > 0, ...).
  void validate() const;

  // Resolved key=value snapshot, one key per line in keys() order. Doubles
  // are printed round-trip exact.
  std::string to_text() const;
  static TriMixConfig from_text(const std::string& text);
  static TriMixConfig load(const std::string& path);

  // Arch for a dataset with the given flattened input width.
  model::Arch arch(std::size_t input_width) const;
};

// 64-bit FNV-1a of the resolved config text, as 16 hex digits.
std::string config_digest(const TriMixConfig& cfg);

}  // namespace trimix
