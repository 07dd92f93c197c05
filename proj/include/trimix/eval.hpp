#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trimix/config.hpp"
#include "trimix/data.hpp"
#include "trimix/model.hpp"
#include "trimix/tensor.hpp"

namespace trimix::eval {

// Frozen encoder outputs, rows L2-normalised.
struct FeatureBank {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct EvalReport {
  std::string protocol;
  double accuracy = 0.0;  // correct / n
  std::size_t n = 0;
  std::size_t correct = 0;
  std::string config_digest;

  std::string csv_line() const;  // protocol,accuracy,n,correct,config_digest
  std::string pretty() const;
};

inline constexpr const char* kReportHeader = "protocol,accuracy,n,correct,config_digest";

// Throws DegenerateError naming the first zero-norm row.
Tensor l2_normalize_rows(const Tensor& x);

FeatureBank make_bank(const Tensor& raw_features, std::vector<int> labels, std::size_t num_classes);

// Encoder-only forward (Y, projector discarded), no augmentation, dataset
// order. Throws ArchMismatchError when the input widths differ.
FeatureBank extract_features(const model::ModelParams& params, const data::Dataset& ds);

// Cosine-similarity KNN. Majority vote among the top k; count ties go to
// the larger summed similarity, then to the smaller class id.
EvalReport knn_eval(const FeatureBank& train, const FeatureBank& test, std::size_t k);

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  std::size_t batch = 256;
  std::uint64_t seed = 0;

  static ProbeConfig from(const TriMixConfig& cfg);
};

// Mean softmax cross-entropy of [B x K] logits; differentiable.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Affine + softmax classifier trained with SGD+momentum on frozen features.
EvalReport linear_probe(const FeatureBank& train, const FeatureBank& test, const ProbeConfig& cfg);

// Per class, floor(fraction * class count) indices from a seeded shuffle;
// returned in ascending order.
std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t num_classes, double fraction,
                                           std::uint64_t seed);

// Fine-tunes a copy of the encoder plus a linear head on a labelled
// fraction of `train`, reports top-1 on `test`. params is not modified.
EvalReport finetune_semi(const model::ModelParams& params, const data::Dataset& train, const data::Dataset& test,
                         double fraction, const ProbeConfig& cfg, std::size_t epochs);

}  // namespace trimix::eval
