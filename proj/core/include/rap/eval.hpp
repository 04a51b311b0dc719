#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rap/data_synth.hpp"
#include "rap/encoders.hpp"
#include "rap/redundancy.hpp"
#include "rap/trainer.hpp"

namespace rap {

enum class Direction { kTextToVideo, kVideoToText };
std::string to_string(Direction d);

/// Recall percentages and median rank (1-based) over a query set.
struct RetrievalResult {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double mdr = 0.0;
  Direction direction = Direction::kTextToVideo;
  std::size_t queries = 0;
};

/// 1-based rank of the true candidate for each query row of `sim`
/// [queries x candidates]. Candidates scoring equal to the truth rank ahead
/// of it only when their column index is lower.
std::vector<std::size_t> truth_ranks(const Tensor& sim, std::span<const std::size_t> ground_truth);

/// R@1/5/10 as percentages of queries with rank <= k; MdR is the median rank,
/// averaging the two middle ranks for an even query count. InputError when a
/// ground-truth column is missing or out of range.
RetrievalResult retrieval_metrics(const Tensor& sim, std::span<const std::size_t> ground_truth,
                                  Direction direction);

struct ZeroShotResult {
  RetrievalResult t2v;
  RetrievalResult v2t;
};

/// CLS features of the listed pairs, encoded in chunks without a tape.
struct SplitEmbeddings {
  Tensor video_cls;  // [n x d]
  Tensor text_cls;   // [n x d]
};

SplitEmbeddings encode_split(const DualEncoder& model, const Corpus& corpus,
                             std::span<const std::size_t> indices, std::size_t frames = 0);

/// CLS-to-CLS retrieval in both directions over one split. `frames` keeps
/// that many frames per video (0 = all). InputError on an empty split.
ZeroShotResult evaluate_zero_shot(const DualEncoder& model, const Corpus& corpus,
                                  std::span<const std::size_t> indices, std::size_t frames = 0);

/// Redundancy weights of one pair under `model`.
RedundancyWeights pair_redundancy(const SyntheticPairRecord& pair, const DualEncoder& model,
                                  const WeightOptions& opts = {}, std::size_t frames = 0);

/// Mean weight of planted-aligned vs planted-redundant patches and tokens
/// across the listed pairs.
struct WeightSeparation {
  double aligned_patch = 0.0;
  double redundant_patch = 0.0;
  double aligned_token = 0.0;
  double redundant_token = 0.0;
};

WeightSeparation weight_separation(const DualEncoder& model, const Corpus& corpus,
                                   std::span<const std::size_t> indices,
                                   const WeightOptions& opts = {}, std::size_t frames = 0);

/// The RaCL weights of one pair rendered as a grayscale patch-grid image
/// (bright = high weight, i.e. low redundancy), a 1 x L token strip, and a
/// plain-text sidecar with the exact numbers.
struct HeatmapArtifact {
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::vector<double> patch_weights;  // row-major over the grid
  std::vector<double> token_weights;
  std::vector<std::size_t> token_ids;
  std::filesystem::path image_path;        // <stem>_patches.pgm
  std::filesystem::path token_image_path;  // <stem>_tokens.pgm
  std::filesystem::path sidecar_path;      // <stem>.txt
};

/// Writes the three heatmap files for `pair`. IoError when unwritable.
HeatmapArtifact export_heatmap(const SyntheticPairRecord& pair, const DualEncoder& model,
                               std::size_t grid_rows, std::size_t grid_cols,
                               const std::filesystem::path& stem, const WeightOptions& opts = {},
                               std::size_t frames = 0);

/// Parses a sidecar written by export_heatmap (image paths are resolved next
/// to the sidecar).
HeatmapArtifact read_heatmap_sidecar(const std::filesystem::path& path);

/// Width, height and pixels of a binary (P5) PGM file.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path);

inline constexpr std::array<double, 4> kAblationLambdas = {0.5, 1.0, 2.0, 4.0};
inline constexpr std::array<std::size_t, 4> kAblationFrames = {1, 2, 4, 8};
inline constexpr std::array<RaclMode, 4> kAblationRaclModes = {RaclMode::kOff, RaclMode::kV2T,
                                                               RaclMode::kT2V, RaclMode::kBoth};

struct AblationRow {
  std::string label;
  ZeroShotResult mean;                    // averaged over seeds
  std::vector<ZeroShotResult> per_seed;
};

struct AblationTable {
  std::string name;    // racl, frames or lambda
  std::string key;     // first column header
  std::vector<AblationRow> rows;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds = {0};
  bool racl_table = true;
  bool frames_table = true;
  bool lambda_table = true;
  std::function<void(const std::string& table, const std::string& row, std::uint64_t seed)> on_run;
};

/// Trains and evaluates one configuration per row and seed, evaluating on
/// `eval_indices`. The seed sets both encoder init and shuffling. The frame
/// table needs a corpus with at least 8 frames (ConfigError otherwise).
std::vector<AblationTable> ablation_suite(const Corpus& corpus, const TrainConfig& base,
                                          const EncoderConfig& encoder,
                                          std::span<const std::size_t> train_indices,
                                          std::span<const std::size_t> eval_indices,
                                          const AblationOptions& options = {});

/// Trains with `cfg` (encoder seeded with `seed`, shuffling too) and
/// evaluates zero-shot retrieval on `eval_indices`.
ZeroShotResult train_and_evaluate(const Corpus& corpus, TrainConfig cfg, EncoderConfig encoder,
                                  std::uint64_t seed, std::span<const std::size_t> train_indices,
                                  std::span<const std::size_t> eval_indices);

/// Tab-separated table: header row, then one row per configuration with
/// t2v and v2t R1/R5/R10/MdR.
std::string table_to_tsv(const AblationTable& table);

}  // namespace rap
