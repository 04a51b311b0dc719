#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rap/encoders.hpp"

namespace rap {

/// Parameters of the planted-redundancy generator.
///
/// Each concept has a latent vector in R^concept_dim and a fixed set of
/// `tokens - round(rho_t * tokens)` vocabulary ids. A pair draws one concept.
/// Aligned patches are noisy renderings of that concept through a renderer
/// shared by the whole corpus, redundant patches render one of `distractors`
/// other concepts drawn per pair, aligned tokens are the concept's ids and redundant
/// tokens are ids of concepts absent from the video.
struct CorpusConfig {
  std::size_t pairs = 2000;
  std::size_t frames = 4;        // K
  std::size_t grid_rows = 4;     // patch grid; N = grid_rows * grid_cols
  std::size_t grid_cols = 4;
  std::size_t patch_size = 3;    // p = patch_size^2
  std::size_t tokens = 8;        // L
  std::size_t vocab_size = 64;
  std::size_t concept_dim = 8;
  std::size_t concepts = 64;
  std::size_t distractors = 3;   // distinct distractor concepts per pair
  double rho_v = 0.5;            // fraction of planted-redundant patches
  double rho_t = 0.5;            // fraction of planted-redundant tokens
  double noise = 0.25;           // per-frame Gaussian noise scale sigma
  std::uint64_t seed = 0;

  std::size_t patches() const { return grid_rows * grid_cols; }
  std::size_t patch_dim() const { return patch_size * patch_size; }
  std::size_t redundant_patches() const;
  std::size_t redundant_tokens() const;

  /// ConfigError if the invariants do not hold.
  void validate() const;
  bool operator==(const CorpusConfig&) const = default;
};

struct SyntheticPairRecord {
  VideoInput video;
  TextInput text;
  std::vector<bool> patch_labels;  // true = planted-redundant
  std::vector<bool> token_labels;
  std::size_t concept_id = 0;

  bool operator==(const SyntheticPairRecord&) const = default;
};

struct Corpus {
  CorpusConfig config;
  std::vector<SyntheticPairRecord> pairs;

  bool operator==(const Corpus&) const = default;
};

/// Deterministic in cfg.seed.
Corpus generate_corpus(const CorpusConfig& cfg);

/// Token ids of a concept, in the order they appear as aligned tokens.
std::vector<std::size_t> concept_tokens(const CorpusConfig& cfg, std::size_t concept_id);

// Corpus file layout:
//
//   RAPCORPUS 1
//   config pairs=.. frames=.. grid_rows=.. grid_cols=.. patch_size=.. tokens=..
//          vocab_size=.. concept_dim=.. concepts=.. distractors=.. rho_v=.. rho_t=.. noise=.. seed=..
//   count <pairs in file>
//   payload_bytes <n>
//   end
//   per pair, little-endian: int64 concept id; K*N*p float64 patch values
//   (frame, patch, value order); L int64 token ids; N uint8 patch labels;
//   L uint8 token labels.
//
// The `config` record is one line. Reals use shortest round-trip formatting.

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
/// FormatError with kMalformedHeader, kTruncated or kVersionMismatch on bad
/// input, IoError if unreadable.
Corpus load_corpus(const std::filesystem::path& path);

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Disjoint train/val/test pair indices from a seeded permutation.
Splits split_corpus(std::size_t pairs, std::uint64_t seed, double train_fraction = 0.8,
                    double val_fraction = 0.1);

/// Keeps `count` frames spread uniformly over the clip (frame floor(i*K/count)).
VideoInput select_frames(const VideoInput& video, std::size_t count);

}  // namespace rap
