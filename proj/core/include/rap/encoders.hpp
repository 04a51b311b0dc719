#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rap/tensor.hpp"

namespace rap {

/// Shape and initialisation of the dual encoder.
struct EncoderConfig {
  std::size_t hidden = 32;      // transformer width
  std::size_t proj_dim = 16;    // shared feature space d
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t mlp_dim = 64;
  std::size_t vocab_size = 64;
  std::size_t frames = 4;       // K; informational, encoders pool whatever K they get
  std::size_t patches = 16;     // N
  std::size_t patch_dim = 9;    // p
  std::size_t max_tokens = 8;   // L upper bound (positional table size)
  bool positional = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on zero extents or hidden % heads != 0.
  void validate() const;
};

/// K frames of N raw patches, p values each, stored frame-major.
struct VideoInput {
  std::size_t frames = 0;
  std::size_t patches = 0;
  std::size_t patch_dim = 0;
  std::vector<double> values;  // K * N * p

  double at(std::size_t k, std::size_t n, std::size_t i) const {
    return values[(k * patches + n) * patch_dim + i];
  }
  void validate() const;
  bool operator==(const VideoInput&) const = default;
};

struct TextInput {
  std::vector<std::size_t> token_ids;
  bool operator==(const TextInput&) const = default;
};

/// Unit-normalised features of one modality: the [CLS] row plus one row per
/// patch (video) or token (text).
struct FeatureSet {
  Tensor cls;     // [d]
  Tensor locals;  // [count x d]
};

/// Batched encoder output: row b of `cls` and rows [b*count, (b+1)*count) of
/// `locals` belong to item b.
struct EncodedBatch {
  Tensor cls;     // [B x d]
  Tensor locals;  // [B*count x d]
  std::size_t batch = 0;
  std::size_t count = 0;

  FeatureSet item(std::size_t b) const;
};

/// Ordered collection of named tensors.
class ParameterSet {
 public:
  void add(std::string name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& values() const { return values_; }
  std::vector<Tensor>& values() { return values_; }
  std::size_t scalar_count() const;

  /// Taped copies of every parameter, same names and order.
  ParameterSet bind(Tape& tape) const;
  /// Deep copy with constant tensors.
  ParameterSet clone() const;

  bool operator==(const ParameterSet& other) const;

 private:
  std::size_t index_of(const std::string& name) const;

  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Config plus parameters of both encoders.
struct DualEncoder {
  EncoderConfig config;
  ParameterSet params;
};

/// Freshly initialised encoder, deterministic in `cfg.seed`.
DualEncoder init_dual_encoder(const EncoderConfig& cfg);

/// Cuts a rows x cols grid (row-major) into non-overlapping patch_size x
/// patch_size blocks in row-major block order; each block is flattened
/// row-major. Returns [N x patch_size^2].
Tensor patchify(std::span<const double> grid, std::size_t rows, std::size_t cols,
                std::size_t patch_size);

/// Per-frame transformer, mean pool over frames per position, projection to
/// the shared space, row normalisation. `params` may be bound to a tape.
EncodedBatch encode_videos(std::span<const VideoInput> videos, const ParameterSet& params,
                           const EncoderConfig& cfg);
EncodedBatch encode_texts(std::span<const TextInput> texts, const ParameterSet& params,
                          const EncoderConfig& cfg);

FeatureSet encode_video(const VideoInput& video, const ParameterSet& params,
                        const EncoderConfig& cfg);
FeatureSet encode_text(const TextInput& text, const ParameterSet& params,
                       const EncoderConfig& cfg);

}  // namespace rap
