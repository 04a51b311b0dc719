#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rap/checkpoint.hpp"
#include "rap/data_synth.hpp"
#include "rap/encoders.hpp"
#include "rap/losses.hpp"
#include "rap/optimizer.hpp"

namespace rap {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  double lr = 1e-3;             // peak learning rate after warmup
  double initial_lr = 1e-6;
  std::size_t warmup_steps = 100;
  double weight_decay = 0.05;
  double lambda = 1.0;
  double tau = 0.07;
  bool learn_tau = false;       // learn log(tau), initialised at log(tau)
  RaclMode racl = RaclMode::kBoth;
  bool weight_grad = false;     // let gradients flow through the RaCL weights
  bool include_vtc = true;      // VTC on CLS features forms L_others
  bool clamp_weights = true;
  double weight_floor = 1e-6;
  std::size_t frames = 0;       // frames kept per video (0 = all)
  std::uint64_t seed = 0;       // shuffling; the encoder seed lives in EncoderConfig
  std::size_t checkpoint_every = 0;  // epochs between checkpoints, 0 = initial + final only

  void validate() const;
  /// Stable text form of every field, used for hashing and manifests.
  std::string canonical() const;
  LossConfig loss_config() const;
  WeightOptions weight_options() const;
  WarmupSchedule schedule() const;
};

/// 64-bit FNV-1a of the canonical train and encoder configs, as hex.
std::string config_hash(const TrainConfig& train, const EncoderConfig& encoder);

/// Encoder config whose data extents (N, p, L, vocabulary, K) match the corpus.
EncoderConfig encoder_config_for(const CorpusConfig& corpus, EncoderConfig base = {});

struct TrainState {
  DualEncoder model;
  AdamW optimizer;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::deque<double> loss_tail;  // last few totals
};

/// Initialises the encoder (and log-temperature when learnable) plus the
/// optimizer state.
TrainState init_train_state(const EncoderConfig& encoder, const TrainConfig& cfg);

/// Current softmax temperature of a state.
double current_tau(const TrainState& state, const TrainConfig& cfg);

/// One optimisation step over `batch` (at least 2 pairs): encode, weight,
/// loss, backward, AdamW update at the scheduled learning rate. NumericFault
/// names the offending term when a loss is not finite.
LossBreakdown train_step(TrainState& state, std::span<const SyntheticPairRecord> batch,
                         const TrainConfig& cfg);

/// Forward pass only: the loss breakdown of `batch` at the current params.
LossBreakdown evaluate_batch_loss(const TrainState& state, std::span<const SyntheticPairRecord> batch,
                                  const TrainConfig& cfg);

struct StepLog {
  std::size_t step = 0;  // 1-based index of the completed step
  std::size_t epoch = 0;
  double lr = 0.0;
  double tau = 0.0;
  LossBreakdown losses;
};

/// One JSON object per line; see README for the field list.
std::string to_json_line(const StepLog& log);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints/ and train_log.jsonl
  std::function<void(const StepLog&)> on_step;
};

struct TrainingRun {
  TrainState state;
  std::vector<StepLog> log;
  std::vector<std::filesystem::path> checkpoints;
  std::size_t steps_per_epoch = 0;
};

/// Epochs of shuffled, drop-last mini-batches over `train_indices`. Writes
/// the initial checkpoint, one every `checkpoint_every` epochs, and
/// checkpoints/final.rapckpt when out_dir is set. IoError at startup if the
/// directory cannot be written.
TrainingRun run_training(const TrainConfig& cfg, const EncoderConfig& encoder, const Corpus& corpus,
                         std::span<const std::size_t> train_indices, const RunOptions& options = {});

}  // namespace rap
