#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "rap/encoders.hpp"
#include "rap/redundancy.hpp"
#include "rap/tensor.hpp"

namespace rap {

/// Features of B matched video-text pairs plus the softmax temperature.
struct BatchFeatures {
  Tensor video_cls;     // [B x d]
  Tensor video_locals;  // [B*N x d]
  Tensor text_cls;      // [B x d]
  Tensor text_locals;   // [B*L x d]
  Tensor tau;           // one element, may be taped (learnable temperature)

  std::size_t batch() const { return video_cls.rows(); }
  std::size_t patches() const { return video_locals.rows() / batch(); }
  std::size_t tokens() const { return text_locals.rows() / batch(); }

  /// DimensionError on inconsistent extents, ConfigError when tau <= 0.
  void validate() const;

  static BatchFeatures from_encoded(const EncodedBatch& video, const EncodedBatch& text, Tensor tau);
  static BatchFeatures from_feature_sets(std::span<const FeatureSet> videos,
                                         std::span<const FeatureSet> texts, double tau);
};

enum class RaclMode { kOff, kV2T, kT2V, kBoth };

std::string to_string(RaclMode mode);
/// Accepts off, v2t, t2v, both.
RaclMode parse_racl_mode(const std::string& text);

struct LossBreakdown {
  double l_v2t = 0.0;
  double l_t2v = 0.0;
  double l_racl_v2t = 0.0;
  double l_racl_t2v = 0.0;
  double l_racl = 0.0;
  double l_others = 0.0;
  double total = 0.0;
};

struct LossResult {
  Tensor total;  // differentiable scalar
  LossBreakdown breakdown;
};

/// Standard in-batch InfoNCE on CLS features, video queries. Mean over pairs.
Tensor vtc_v2t(const BatchFeatures& batch);
/// Text queries against all videos.
Tensor vtc_t2v(const BatchFeatures& batch);

/// Redundancy-aware video-to-text loss: the positive numerator sums the
/// matched text's token similarities weighted by `w_token` [B x L]; the
/// denominator sums unweighted over every token of every text in the batch.
Tensor racl_v2t(const BatchFeatures& batch, const Tensor& w_token);
/// Symmetric text-to-video loss with patch weights `w_patch` [B x N].
Tensor racl_t2v(const BatchFeatures& batch, const Tensor& w_patch);
/// racl_v2t + racl_t2v.
Tensor racl_total(const BatchFeatures& batch, const BatchWeights& weights);

/// total = others + lambda * RaCL, where RaCL covers the directions enabled
/// by `mode` (kOff contributes nothing). lambda < 0 raises ConfigError.
/// The VTC fields of the breakdown are left at 0.
LossResult total_loss(const BatchFeatures& batch, const BatchWeights& weights, double lambda,
                      const Tensor& others, RaclMode mode = RaclMode::kBoth);

struct LossConfig {
  double lambda = 1.0;
  bool include_vtc = true;  // VTC forms L_others
  RaclMode racl = RaclMode::kBoth;
};

/// Training objective: L_others = vtc_v2t + vtc_t2v (when include_vtc),
/// then total_loss. Fills every breakdown field.
LossResult training_loss(const BatchFeatures& batch, const BatchWeights& weights,
                         const LossConfig& cfg);

}  // namespace rap
