#pragma once

#include "trimix/tensor.hpp"

namespace trimix::stats {

// Axis along which standardize normalises:
//   Batch   - each column (feature) gets zero mean, unit std over the batch.
//   Feature - each row (sample) gets zero mean, unit std over its features.
enum class Axis { Batch, Feature };

enum class CorrMode {
  Features,  // D x D, entries sum_b z[b,i] z2[b,j] / B
  Samples,   // B x B, entries sum_a z[m,a] z2[n,a] / D
};

struct StandardizeOptions {
  // Substitute std = 1 for slices whose std falls below kMinStd instead of
  // failing. Off by default.
  bool allow_degenerate = false;
};

inline constexpr double kMinStd = 1e-12;

// Population standardisation (divisor = slice length). Throws
// DegenerateError naming the slice index when a slice is constant.
Tensor standardize(const Tensor& z, Axis axis, StandardizeOptions opts = {});

struct CorrelationMatrix {
  Tensor values;
  CorrMode mode = CorrMode::Features;
};

// Inputs are expected to be standardised already (see CorrMode); the
// result is then the normalised cross-correlation of the two operands.
CorrelationMatrix cross_correlation(const Tensor& z, const Tensor& z2, CorrMode mode);

// Softmax of each row of m / tau, with max subtraction.
Tensor row_softmax(const Tensor& m, double tau);

}  // namespace trimix::stats
