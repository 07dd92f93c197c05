#pragma once

#include "trimix/tensor.hpp"

// Differentiable operations. Every function records its backward rule when
// an operand lives on a tape. Binary ops require identical shapes; the only
// broadcasting is scalar-with-tensor and the explicit add_row_vector.
namespace trimix::ops {

// [p x q] * [q x r] -> [p x r]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// Adds a [1 x n] (or [n]) row to every row of a [m x n] matrix.
Tensor add_row_vector(const Tensor& a, const Tensor& row);

Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);

// Reductions to shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Reverses the order along the first (batch) dimension.
Tensor flip_rows(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// [B x ...] -> [B x prod(...)]
Tensor flatten_rows(const Tensor& a);

}  // namespace trimix::ops
