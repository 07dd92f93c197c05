#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trimix/config.hpp"
#include "trimix/data.hpp"
#include "trimix/model.hpp"
#include "trimix/objective.hpp"

namespace trimix::train {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled: g <- g + wd * theta
};

struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  // Zero moments shaped like params.
  static AdamState zeros(std::span<const Tensor* const> params, AdamOptions options);
};

// One Adam update with bias correction. grads[i] pairs with params[i].
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;  // 1-based
  objective::LossBreakdown loss;
};

inline constexpr const char* kMetricsHeader = "step,epoch,lambda,l_bt_inv,l_bt_rr,l_vrt,l_con,total";
std::string metrics_csv_row(const MetricsRow& row);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

enum class Precision { F32, F64 };

struct Checkpoint {
  std::string config_text;  // resolved config snapshot
  model::ModelParams params;
  AdamState optimizer;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
};

inline constexpr char kCheckpointMagic[4] = {'T', 'M', 'X', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic "TMX1", u32 version, u64 metadata length, metadata text
// (key=value lines), then for every array in declaration order (parameters,
// Adam m, Adam v) a u64 element count followed by little-endian f32 (or f64,
// per the metadata `precision` key) values.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
// As load_checkpoint, but throws ArchMismatchError unless the stored arch
// equals `expected`.
Checkpoint load_checkpoint(const std::string& path, const model::Arch& expected);

struct PretrainOptions {
  // Directory for checkpoints; empty disables periodic saving.
  std::string out_dir;
  // Continue from this checkpoint instead of a fresh init.
  std::optional<Checkpoint> resume;
  // Stop after this many total epochs (defaults to cfg.epochs).
  std::optional<std::size_t> stop_after;
  std::function<void(const MetricsRow&)> on_step;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
  std::vector<double> epoch_mean_total;
};

// Runs the objective with Adam over cfg.epochs epochs of `dataset`.
PretrainResult pretrain(const TriMixConfig& cfg, const data::Dataset& dataset, PretrainOptions options = {});

data::AugmentPolicy augment_policy(const TriMixConfig& cfg);

struct DatasetPair {
  data::Dataset train;
  data::Dataset test;
};

// Train and test splits named by cfg.dataset. Synthetic splits use
// independent seeds derived from synthetic.seed.
DatasetPair load_datasets(const TriMixConfig& cfg);

}  // namespace trimix::train
