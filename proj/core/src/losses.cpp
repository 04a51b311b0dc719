#include "rap/losses.hpp"

#include <vector>

#include "rap/error.hpp"
#include "rap/ops.hpp"

namespace rap {
namespace {

// mean_i [ log sum_j exp(S_ij) - S_ii ] for a square logits matrix.
Tensor info_nce_rows(const Tensor& logits) {
  const std::size_t b = logits.rows();
  Tensor eye(Shape{b, b}, 0.0);
  for (std::size_t i = 0; i < b; ++i) eye.mutable_values()[i * b + i] = 1.0;
  const Tensor log_den = log(sum(exp(logits), 1));
  const Tensor positive = sum(mul(logits, eye), 1);
  return mean(sub(log_den, positive));
}

// One RaCL direction. `queries` [B x d] are CLS features of one modality,
// `keys` [B*C x d] the local features of the other, `weights` [B x C].
Tensor weighted_multi_positive(const Tensor& queries, const Tensor& keys, const Tensor& weights,
                               const Tensor& tau, const char* name) {
  const std::size_t b = queries.rows();
  const std::size_t d = queries.cols();
  const std::size_t c = keys.rows() / b;
  if (weights.numel() != b * c) {
    throw DimensionError(std::string(name) + ": weights " + shape_to_string(weights.shape()) +
                         " do not match " + std::to_string(b) + " pairs x " + std::to_string(c));
  }
  // Denominator: every local of every pair, unweighted.
  const Tensor all_logits = div_scalar(matmul(queries, transpose(keys)), tau);  // [B x B*C]
  const Tensor log_den = log(sum(exp(all_logits), 1));

  // Numerator: locals of the matched pair only, weighted.
  const Tensor pos_sim = reshape(
      batched_matmul(reshape(queries, {b, 1, d}), reshape(keys, {b, c, d}), /*transpose_b=*/true),
      {b, c});
  const Tensor num = sum(mul(reshape(weights, {b, c}), exp(div_scalar(pos_sim, tau))), 1);
  for (std::size_t i = 0; i < b; ++i) {
    if (!(num[i] > 0.0)) {
      throw NumericFault(std::string(name) + ": non-positive numerator for pair " + std::to_string(i));
    }
  }
  return mean(sub(log_den, log(num)));
}

}  // namespace

void BatchFeatures::validate() const {
  if (video_cls.rank() != 2 || text_cls.rank() != 2 || video_locals.rank() != 2 ||
      text_locals.rank() != 2) {
    throw DimensionError("batch features must be matrices");
  }
  const std::size_t b = video_cls.rows();
  const std::size_t d = video_cls.cols();
  if (b == 0) throw DimensionError("batch features: B must be at least 1");
  if (text_cls.rows() != b || text_cls.cols() != d || video_locals.cols() != d ||
      text_locals.cols() != d) {
    throw DimensionError("batch features: inconsistent shapes video_cls " +
                         shape_to_string(video_cls.shape()) + ", text_cls " +
                         shape_to_string(text_cls.shape()) + ", video_locals " +
                         shape_to_string(video_locals.shape()) + ", text_locals " +
                         shape_to_string(text_locals.shape()));
  }
  if (video_locals.rows() == 0 || video_locals.rows() % b != 0 || text_locals.rows() == 0 ||
      text_locals.rows() % b != 0) {
    throw DimensionError("batch features: locals do not split evenly into B pairs");
  }
  if (tau.numel() != 1) throw DimensionError("batch features: tau must be a scalar");
  if (!(tau.item() > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau.item()));
}

BatchFeatures BatchFeatures::from_encoded(const EncodedBatch& video, const EncodedBatch& text,
                                          Tensor tau) {
  return BatchFeatures{video.cls, video.locals, text.cls, text.locals, std::move(tau)};
}

BatchFeatures BatchFeatures::from_feature_sets(std::span<const FeatureSet> videos,
                                               std::span<const FeatureSet> texts, double tau) {
  if (videos.size() != texts.size() || videos.empty()) {
    throw DimensionError("from_feature_sets: need the same positive number of videos and texts");
  }
  std::vector<Tensor> vc, vl, tc, tl;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    vc.push_back(reshape(videos[i].cls, {1, videos[i].cls.numel()}));
    vl.push_back(videos[i].locals);
    tc.push_back(reshape(texts[i].cls, {1, texts[i].cls.numel()}));
    tl.push_back(texts[i].locals);
  }
  return BatchFeatures{concat_rows(vc), concat_rows(vl), concat_rows(tc), concat_rows(tl),
                       Tensor::scalar(tau)};
}

std::string to_string(RaclMode mode) {
  switch (mode) {
    case RaclMode::kOff: return "off";
    case RaclMode::kV2T: return "v2t";
    case RaclMode::kT2V: return "t2v";
    case RaclMode::kBoth: return "both";
  }
  return "?";
}

RaclMode parse_racl_mode(const std::string& text) {
  if (text == "off") return RaclMode::kOff;
  if (text == "v2t") return RaclMode::kV2T;
  if (text == "t2v") return RaclMode::kT2V;
  if (text == "both") return RaclMode::kBoth;
  throw ConfigError("unknown RaCL mode '" + text + "' (expected off, v2t, t2v or both)");
}

Tensor vtc_v2t(const BatchFeatures& batch) {
  batch.validate();
  return info_nce_rows(div_scalar(matmul(batch.video_cls, transpose(batch.text_cls)), batch.tau));
}

Tensor vtc_t2v(const BatchFeatures& batch) {
  batch.validate();
  return info_nce_rows(div_scalar(matmul(batch.text_cls, transpose(batch.video_cls)), batch.tau));
}

Tensor racl_v2t(const BatchFeatures& batch, const Tensor& w_token) {
  batch.validate();
  return weighted_multi_positive(batch.video_cls, batch.text_locals, w_token, batch.tau, "racl_v2t");
}

Tensor racl_t2v(const BatchFeatures& batch, const Tensor& w_patch) {
  batch.validate();
  return weighted_multi_positive(batch.text_cls, batch.video_locals, w_patch, batch.tau, "racl_t2v");
}

Tensor racl_total(const BatchFeatures& batch, const BatchWeights& weights) {
  return add(racl_v2t(batch, weights.w_token), racl_t2v(batch, weights.w_patch));
}

LossResult total_loss(const BatchFeatures& batch, const BatchWeights& weights, double lambda,
                      const Tensor& others, RaclMode mode) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative, got " + std::to_string(lambda));
  if (others.numel() != 1) throw DimensionError("total_loss: others must be a scalar");

  LossResult out;
  LossBreakdown& bd = out.breakdown;
  Tensor racl = Tensor::scalar(0.0);
  bool have_racl = false;
  if (mode == RaclMode::kV2T || mode == RaclMode::kBoth) {
    const Tensor v = racl_v2t(batch, weights.w_token);
    bd.l_racl_v2t = v.item();
    racl = v;
    have_racl = true;
  }
  if (mode == RaclMode::kT2V || mode == RaclMode::kBoth) {
    const Tensor t = racl_t2v(batch, weights.w_patch);
    bd.l_racl_t2v = t.item();
    racl = have_racl ? add(racl, t) : t;
    have_racl = true;
  }
  bd.l_racl = bd.l_racl_v2t + bd.l_racl_t2v;
  bd.l_others = others.item();
  out.total = have_racl ? add(reshape(others, {}), scale(reshape(racl, {}), lambda)) : reshape(others, {});
  bd.total = out.total.item();
  return out;
}

LossResult training_loss(const BatchFeatures& batch, const BatchWeights& weights,
                         const LossConfig& cfg) {
  Tensor others = Tensor::scalar(0.0);
  double v2t = 0.0, t2v = 0.0;
  if (cfg.include_vtc) {
    const Tensor a = vtc_v2t(batch);
    const Tensor b = vtc_t2v(batch);
    v2t = a.item();
    t2v = b.item();
    others = add(a, b);
  }
  LossResult out = total_loss(batch, weights, cfg.lambda, others, cfg.racl);
  out.breakdown.l_v2t = v2t;
  out.breakdown.l_t2v = t2v;
  return out;
}

}  // namespace rap
