#include "rap/redundancy.hpp"

#include <cmath>
#include <vector>

#include "rap/error.hpp"
#include "rap/ops.hpp"

namespace rap {

double similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("similarity: vectors of length " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (std::abs(std::sqrt(uu) - 1.0) > 1e-6 || std::abs(std::sqrt(vv) - 1.0) > 1e-6) {
    throw ContractViolation("similarity: inputs must be unit vectors");
  }
  return uv;
}

Tensor dissim_matrix(const Tensor& patches, const Tensor& tokens) {
  if (patches.rank() != 2 || tokens.rank() != 2 || patches.cols() != tokens.cols()) {
    throw DimensionError("dissim_matrix: feature dims differ, patches " +
                         shape_to_string(patches.shape()) + " vs tokens " +
                         shape_to_string(tokens.shape()));
  }
  return add_scalar(neg(matmul(patches, transpose(tokens))), 1.0);
}

RedundancyWeights redundancy_scores(const Tensor& m) {
  if (m.rank() != 2 || m.rows() == 0 || m.cols() == 0) {
    throw DimensionError("redundancy_scores: empty dis-similarity matrix " + shape_to_string(m.shape()));
  }
  RedundancyWeights r;
  r.vr = row_min(m).values;
  r.tr = row_min(transpose(m)).values;
  return r;
}

Tensor weights_from_redundancy(const Tensor& r, const WeightOptions& opts) {
  for (double v : r.values()) {
    if (!(v >= -1e-6 && v <= 2.0 + 1e-6)) {
      throw ContractViolation("weights_from_redundancy: redundancy " + std::to_string(v) +
                              " outside [0, 2]");
    }
  }
  Tensor w = add_scalar(neg(r), 1.0);
  if (opts.clamp) w = clamp(w, 0.0, 1.0);
  bool all_zero = true;
  for (double v : w.values()) all_zero = all_zero && v == 0.0;
  if (all_zero && opts.floor > 0.0) w = add_scalar(w, opts.floor);
  return w;
}

RedundancyWeights compute_redundancy(const Tensor& patches, const Tensor& tokens,
                                     const WeightOptions& opts) {
  const Tensor p = opts.detach ? patches.detach() : patches;
  const Tensor t = opts.detach ? tokens.detach() : tokens;
  RedundancyWeights r = redundancy_scores(dissim_matrix(p, t));
  r.w_patch = weights_from_redundancy(r.vr, opts);
  r.w_token = weights_from_redundancy(r.tr, opts);
  return r;
}

BatchWeights compute_batch_weights(const Tensor& video_locals, const Tensor& text_locals,
                                   std::size_t batch, const WeightOptions& opts) {
  if (batch == 0 || video_locals.rows() % batch != 0 || text_locals.rows() % batch != 0) {
    throw DimensionError("compute_batch_weights: locals do not split into " + std::to_string(batch) +
                         " pairs");
  }
  const std::size_t n = video_locals.rows() / batch;
  const std::size_t l = text_locals.rows() / batch;
  const Tensor vl = opts.detach ? video_locals.detach() : video_locals;
  const Tensor tl = opts.detach ? text_locals.detach() : text_locals;
  std::vector<Tensor> wp, wt;
  for (std::size_t b = 0; b < batch; ++b) {
    const RedundancyWeights r = compute_redundancy(slice_rows(vl, b * n, (b + 1) * n),
                                                   slice_rows(tl, b * l, (b + 1) * l), opts);
    wp.push_back(reshape(r.w_patch, {1, n}));
    wt.push_back(reshape(r.w_token, {1, l}));
  }
  return {concat_rows(wp), concat_rows(wt)};
}

}  // namespace rap
