#pragma once

// Shared by the unit tests and the acceptance driver: random fixtures, a
// central-difference gradient checker and straightforward reference
// implementations written with plain loops over nested vectors.

#include <cstddef>
#include <functional>
#include <vector>

#include "rap/encoders.hpp"
#include "rap/rng.hpp"
#include "rap/tensor.hpp"

namespace rap::test {

using Mat = std::vector<std::vector<double>>;

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);
/// Gaussian rows divided by their norm, computed without the library ops.
Tensor random_unit_rows(Rng& rng, std::size_t rows, std::size_t cols);

Mat to_mat(const Tensor& t);
Tensor from_mat(const Mat& m);

// ---- gradient checking -------------------------------------------------

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;
using ParamFn = std::function<Tensor(const ParameterSet&)>;

/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12) over every
/// input element, with the numeric gradient from central differences.
double gradient_error(const TensorFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);
double param_gradient_error(const ParamFn& f, const ParameterSet& params, double h = 1e-5);

// ---- reference implementations -----------------------------------------

double ref_dot(const std::vector<double>& a, const std::vector<double>& b);
/// m[n][l] = 1 - <p_n, t_l>, one dot product at a time.
Mat ref_dissim(const Mat& patches, const Mat& tokens);
std::vector<double> ref_row_min(const Mat& m);
std::vector<double> ref_col_min(const Mat& m);
/// Scalar clamp(1 - r) plus the all-zero floor.
std::vector<double> ref_weights(const std::vector<double>& r, double floor = 1e-6);

/// InfoNCE with query rows q against candidate rows c, positives on the
/// diagonal, mean over queries.
double ref_infonce(const Mat& q, const Mat& c, double tau);

/// Weighted multi-positive loss: query i against the locals of every item j
/// (locals[j] is count x d), numerator over the locals of item i weighted by
/// w[i], denominator unweighted over everything. Mean over queries.
double ref_multi_positive(const Mat& q, const std::vector<Mat>& locals, const Mat& w, double tau);

/// Rank by sorting every candidate (score descending, column ascending).
std::vector<std::size_t> ref_ranks(const Mat& sim, const std::vector<std::size_t>& truth);
double ref_recall(const std::vector<std::size_t>& ranks, std::size_t k);
double ref_median(std::vector<std::size_t> ranks);

/// Splits a [B*count x d] tensor into B blocks of count rows.
std::vector<Mat> blocks(const Tensor& stacked, std::size_t batch);

}  // namespace rap::test
