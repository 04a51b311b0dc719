#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rap/tensor.hpp"

// Differentiable primitives. Every op records its gradient rule on the tape of
// its taped input(s); with only constant inputs it is a plain computation.
//
// Reductions always accumulate in ascending index order, so results are
// bit-reproducible. There is no implicit broadcasting: scalar-tensor ops and
// the explicit *_rowwise ops are the only shape-mixing forms.

namespace rap {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
/// tanh-approximated GELU.
Tensor gelu(const Tensor& a);
/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
Tensor clamp(const Tensor& a, double lo, double hi);

// Scalar forms.
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a * s where s is a one-element tensor (may be taped).
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// a / s where s is a one-element tensor (may be taped).
Tensor div_scalar(const Tensor& a, const Tensor& s);

// Row-vector ops on an m x n matrix with a length-n vector.
Tensor add_rowwise(const Tensor& a, const Tensor& row);
Tensor mul_rowwise(const Tensor& a, const Tensor& row);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Per-group product of [G x m x k] and [G x k x n] (or [G x n x k] when
/// transpose_b) tensors.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor transpose(const Tensor& a);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
/// Output row r is input row idx[r]; repeated indices accumulate gradient.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum over `axis`, removing it from the shape.
Tensor sum(const Tensor& a, std::size_t axis);
/// Mean over `axis`, removing it from the shape. mean(x, 0) pools a leading
/// axis, e.g. frames of a [K x N x H] stack.
Tensor mean(const Tensor& a, std::size_t axis);

// Row-wise normalisations on a 2-D tensor.
Tensor softmax_rows(const Tensor& a);
/// (x - mean) / sqrt(var + eps) per row, without affine parameters.
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);
/// Divides every row by its Euclidean norm. Rows with norm below 1e-12 raise
/// DegenerateInputError carrying the row index; non-finite rows raise
/// NumericFault.
Tensor l2_normalize_rows(const Tensor& a);

struct RowMin {
  Tensor values;                     // length m
  std::vector<std::size_t> argmins;  // selected column per row
};

/// Per-row minimum. Ties pick the lowest column; the gradient flows only to
/// the selected entry.
RowMin row_min(const Tensor& a);

/// True if every value is finite.
bool all_finite(const Tensor& a);

}  // namespace rap
