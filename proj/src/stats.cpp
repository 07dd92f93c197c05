#include "trimix/stats.hpp"

#include <algorithm>
#include <cmath>

#include "trimix/error.hpp"
#include "trimix/ops.hpp"

namespace trimix::stats {

Tensor standardize(const Tensor& z, Axis axis, StandardizeOptions opts) {
  if (z.rank() != 2) throw DimensionError("standardize expects [B x D], got " + shape_str(z.shape()));
  const std::size_t rows = z.dim(0), cols = z.dim(1);
  // A "slice" is a column for Axis::Batch and a row for Axis::Feature.
  const bool by_col = axis == Axis::Batch;
  const std::size_t slices = by_col ? cols : rows;
  const std::size_t len = by_col ? rows : cols;
  const std::size_t stride = by_col ? cols : 1;
  const std::size_t step = by_col ? 1 : cols;
  if (len < 2) {
    throw ContractError(std::string("standardize: reduced axis needs length >= 2, got ") + std::to_string(len));
  }

  std::vector<double> out(z.size());
  std::vector<double> inv_std(slices);
  std::vector<char> fixed_std(slices, 0);
  const auto x = z.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t base = s * step;
    double mu = 0.0;
    for (std::size_t k = 0; k < len; ++k) mu += x[base + k * stride];
    mu /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double d = x[base + k * stride] - mu;
      var += d * d;
    }
    var /= static_cast<double>(len);
    double sd = std::sqrt(var);
    // Non-finite slices fall through; the loss-term checks report them.
    if (sd < kMinStd) {
      if (!opts.allow_degenerate) {
        throw DegenerateError(std::string("standardize: ") + (by_col ? "feature " : "sample ") + std::to_string(s) +
                              " has near-zero standard deviation");
      }
      sd = 1.0;
      fixed_std[s] = 1;
    }
    inv_std[s] = 1.0 / sd;
    for (std::size_t k = 0; k < len; ++k) out[base + k * stride] = (x[base + k * stride] - mu) * inv_std[s];
  }

  Tensor result(z.shape(), out);
  return record_op(std::move(result), {&z},
                   [y = std::move(out), inv_std = std::move(inv_std), fixed_std = std::move(fixed_std), slices, len, stride, step](
                       std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     // dx = (g - mean(g) - y * mean(g * y)) / std
                     auto& d = *pg[0];
                     const double n = static_cast<double>(len);
                     for (std::size_t s = 0; s < slices; ++s) {
                       const std::size_t base = s * step;
                       double gm = 0.0, gy = 0.0;
                       for (std::size_t k = 0; k < len; ++k) {
                         const std::size_t i = base + k * stride;
                         gm += g[i];
                         gy += g[i] * y[i];
                       }
                       gm /= n;
                       gy = fixed_std[s] ? 0.0 : gy / n;
                       for (std::size_t k = 0; k < len; ++k) {
                         const std::size_t i = base + k * stride;
                         d[i] += (g[i] - gm - y[i] * gy) * inv_std[s];
                       }
                     }
                   });
}

CorrelationMatrix cross_correlation(const Tensor& z, const Tensor& z2, CorrMode mode) {
  if (z.rank() != 2 || z.shape() != z2.shape()) {
    throw DimensionError("cross_correlation: operands must share a [B x D] shape, got " + shape_str(z.shape()) +
                         " and " + shape_str(z2.shape()));
  }
  if (mode == CorrMode::Features) {
    const double b = static_cast<double>(z.dim(0));
    return {ops::scalar_mul(ops::matmul(ops::transpose(z), z2), 1.0 / b), mode};
  }
  const double d = static_cast<double>(z.dim(1));
  return {ops::scalar_mul(ops::matmul(z, ops::transpose(z2)), 1.0 / d), mode};
}

Tensor row_softmax(const Tensor& m, double tau) {
  if (!(tau > 0.0)) throw ContractError("row_softmax: temperature must be positive, got " + std::to_string(tau));
  if (m.rank() != 2) throw DimensionError("row_softmax expects a matrix, got " + shape_str(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> p(m.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = m.data().data() + r * cols;
    double* out = p.data() + r * cols;
    const double mx = *std::max_element(in, in + cols) / tau;
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] / tau - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
  Tensor result(m.shape(), p);
  return record_op(std::move(result), {&m},
                   [p = std::move(p), rows, cols, tau](std::span<const double> g,
                                                       std::span<std::vector<double>* const> pg) {
                     auto& d = *pg[0];
                     for (std::size_t r = 0; r < rows; ++r) {
                       const std::size_t base = r * cols;
                       double dot = 0.0;
                       for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * p[base + c];
                       for (std::size_t c = 0; c < cols; ++c) d[base + c] += p[base + c] * (g[base + c] - dot) / tau;
                     }
                   });
}

}  // namespace trimix::stats
