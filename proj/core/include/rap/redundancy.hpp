#pragma once

#include <span>

#include "rap/tensor.hpp"

namespace rap {

/// How redundancy scores become loss weights.
struct WeightOptions {
  bool clamp = true;       // w = clamp(1 - r, 0, 1); otherwise w = 1 - r
  double floor = 1e-6;     // added uniformly when every weight of a vector is 0
  bool detach = true;      // weights are constants in the loss
};

/// Per-pair redundancy scores and weights.
struct RedundancyWeights {
  Tensor vr;       // [N] visual redundancy, row minima of M
  Tensor tr;       // [L] textual redundancy, column minima of M
  Tensor w_patch;  // [N]
  Tensor w_token;  // [L]
};

/// Dot product of two unit vectors. Throws ContractViolation when either
/// norm is off by more than 1e-6, DimensionError on length mismatch.
double similarity(std::span<const double> u, std::span<const double> v);

/// M[n][l] = 1 - <patch_n, token_l> over the non-CLS rows of both
/// modalities. Differentiable. [N x d], [L x d] -> [N x L].
Tensor dissim_matrix(const Tensor& patches, const Tensor& tokens);

/// vr = row minima and tr = column minima of `m` (weights left empty).
RedundancyWeights redundancy_scores(const Tensor& m);

/// w = clamp(1 - r, 0, 1) with the all-zero floor. Entries of r must lie in
/// [0, 2] up to 1e-6 (ContractViolation otherwise).
Tensor weights_from_redundancy(const Tensor& r, const WeightOptions& opts = {});

/// dissim_matrix -> redundancy_scores -> weights for one pair. With
/// opts.detach the inputs are detached first so nothing is recorded.
RedundancyWeights compute_redundancy(const Tensor& patches, const Tensor& tokens,
                                     const WeightOptions& opts = {});

/// Weights for a whole batch, stacked per pair.
struct BatchWeights {
  Tensor w_patch;  // [B x N]
  Tensor w_token;  // [B x L]
};

BatchWeights compute_batch_weights(const Tensor& video_locals, const Tensor& text_locals,
                                   std::size_t batch, const WeightOptions& opts = {});

}  // namespace rap
