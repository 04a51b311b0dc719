#include "rap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rap/error.hpp"
#include "rap/ops.hpp"
#include "rap/rng.hpp"

namespace rap {
namespace {

constexpr const char* kLogTau = "loss.log_tau";
constexpr double kMinTau = 0.01;
constexpr double kMaxTau = 1.0;
constexpr std::size_t kLossTail = 8;
constexpr std::uint64_t kShuffleStreamBase = 100;

std::string encoder_canonical(const EncoderConfig& c) {
  std::ostringstream os;
  os << "hidden=" << c.hidden << ";proj_dim=" << c.proj_dim << ";layers=" << c.layers
     << ";heads=" << c.heads << ";mlp_dim=" << c.mlp_dim << ";vocab_size=" << c.vocab_size
     << ";frames=" << c.frames << ";patches=" << c.patches << ";patch_dim=" << c.patch_dim
     << ";max_tokens=" << c.max_tokens << ";positional=" << c.positional << ";seed=" << c.seed;
  return os.str();
}

void build_inputs(std::span<const SyntheticPairRecord> batch, const TrainConfig& cfg,
                  std::vector<VideoInput>& videos, std::vector<TextInput>& texts) {
  videos.reserve(batch.size());
  texts.reserve(batch.size());
  for (const auto& rec : batch) {
    videos.push_back(cfg.frames ? select_frames(rec.video, cfg.frames) : rec.video);
    texts.push_back(rec.text);
  }
}

// Encode, weight and score one batch. Recorded on a tape iff `params` are bound.
LossResult forward(const ParameterSet& params, const EncoderConfig& enc,
                   std::span<const SyntheticPairRecord> batch, const TrainConfig& cfg) {
  std::vector<VideoInput> videos;
  std::vector<TextInput> texts;
  build_inputs(batch, cfg, videos, texts);
  const EncodedBatch v = encode_videos(videos, params, enc);
  const EncodedBatch t = encode_texts(texts, params, enc);
  const Tensor tau = cfg.learn_tau ? exp(params.get(kLogTau)) : Tensor::scalar(cfg.tau);
  const BatchFeatures features = BatchFeatures::from_encoded(v, t, tau);
  BatchWeights weights;
  if (cfg.racl != RaclMode::kOff) {
    weights = compute_batch_weights(v.locals, t.locals, batch.size(), cfg.weight_options());
  }
  return training_loss(features, weights, cfg.loss_config());
}

void check_losses(const LossBreakdown& l) {
  const std::pair<const char*, double> terms[] = {
      {"l_v2t", l.l_v2t},           {"l_t2v", l.l_t2v},   {"l_racl_v2t", l.l_racl_v2t},
      {"l_racl_t2v", l.l_racl_t2v}, {"l_racl", l.l_racl}, {"l_others", l.l_others},
      {"total", l.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) throw NumericFault(std::string("non-finite loss term ") + name);
  }
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step) {
  char name[40];
  std::snprintf(name, sizeof(name), "step_%06zu.rapckpt", step);
  return dir / name;
}

}  // namespace

void TrainConfig::validate() const {
  const bool contrastive = include_vtc || racl != RaclMode::kOff;
  if (contrastive && batch_size < 2) {
    throw ConfigError("batch size must be at least 2 for in-batch negatives, got " +
                      std::to_string(batch_size));
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(lr >= 0.0) || !(initial_lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (!(weight_floor >= 0.0)) throw ConfigError("weight floor must be non-negative");
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size=" << batch_size << ";epochs=" << epochs << ";lr=" << lr
     << ";initial_lr=" << initial_lr << ";warmup_steps=" << warmup_steps
     << ";weight_decay=" << weight_decay << ";lambda=" << lambda << ";tau=" << tau
     << ";learn_tau=" << learn_tau << ";racl=" << to_string(racl) << ";weight_grad=" << weight_grad
     << ";include_vtc=" << include_vtc << ";clamp_weights=" << clamp_weights
     << ";weight_floor=" << weight_floor << ";frames=" << frames << ";seed=" << seed
     << ";checkpoint_every=" << checkpoint_every;
  return os.str();
}

LossConfig TrainConfig::loss_config() const { return LossConfig{lambda, include_vtc, racl}; }

WeightOptions TrainConfig::weight_options() const {
  return WeightOptions{clamp_weights, weight_floor, !weight_grad};
}

WarmupSchedule TrainConfig::schedule() const { return WarmupSchedule{initial_lr, lr, warmup_steps}; }

std::string config_hash(const TrainConfig& train, const EncoderConfig& encoder) {
  const std::string text = train.canonical() + "|" + encoder_canonical(encoder);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EncoderConfig encoder_config_for(const CorpusConfig& corpus, EncoderConfig base) {
  base.vocab_size = corpus.vocab_size;
  base.frames = corpus.frames;
  base.patches = corpus.patches();
  base.patch_dim = corpus.patch_dim();
  base.max_tokens = corpus.tokens;
  return base;
}

TrainState init_train_state(const EncoderConfig& encoder, const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.model = init_dual_encoder(encoder);
  if (cfg.learn_tau) s.model.params.add(kLogTau, Tensor::scalar(std::log(cfg.tau)));
  AdamWConfig opt;
  opt.weight_decay = cfg.weight_decay;
  s.optimizer = AdamW(s.model.params, opt);
  return s;
}

double current_tau(const TrainState& state, const TrainConfig& cfg) {
  return cfg.learn_tau ? std::exp(state.model.params.get(kLogTau).item()) : cfg.tau;
}

LossBreakdown train_step(TrainState& state, std::span<const SyntheticPairRecord> batch,
                         const TrainConfig& cfg) {
  if (batch.size() < 2) {
    throw InputError("train_step: batch of " + std::to_string(batch.size()) +
                     " pairs; at least 2 are needed for in-batch negatives");
  }
  Tape tape;
  const ParameterSet bound = state.model.params.bind(tape);
  const LossResult loss = forward(bound, state.model.config, batch, cfg);
  check_losses(loss.breakdown);
  if (loss.total.on_tape()) tape.backward(loss.total);

  state.optimizer.step(state.model.params, bound, cfg.schedule().lr(state.step));
  if (cfg.learn_tau) {
    auto v = state.model.params.get(kLogTau).mutable_values();
    v[0] = std::clamp(v[0], std::log(kMinTau), std::log(kMaxTau));
  }
  ++state.step;
  state.loss_tail.push_back(loss.breakdown.total);
  while (state.loss_tail.size() > kLossTail) state.loss_tail.pop_front();
  return loss.breakdown;
}

LossBreakdown evaluate_batch_loss(const TrainState& state, std::span<const SyntheticPairRecord> batch,
                                  const TrainConfig& cfg) {
  return forward(state.model.params, state.model.config, batch, cfg).breakdown;
}

std::string to_json_line(const StepLog& log) {
  nlohmann::json j;
  j["step"] = log.step;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["tau"] = log.tau;
  j["l_v2t"] = log.losses.l_v2t;
  j["l_t2v"] = log.losses.l_t2v;
  j["l_racl_v2t"] = log.losses.l_racl_v2t;
  j["l_racl_t2v"] = log.losses.l_racl_t2v;
  j["l_racl"] = log.losses.l_racl;
  j["l_others"] = log.losses.l_others;
  j["total"] = log.losses.total;
  return j.dump();
}

TrainingRun run_training(const TrainConfig& cfg, const EncoderConfig& encoder, const Corpus& corpus,
                         std::span<const std::size_t> train_indices, const RunOptions& options) {
  cfg.validate();
  for (std::size_t i : train_indices) {
    if (i >= corpus.pairs.size()) throw InputError("train index " + std::to_string(i) + " outside corpus");
  }
  const std::size_t steps_per_epoch = train_indices.size() / cfg.batch_size;
  if (cfg.epochs > 0 && steps_per_epoch == 0) {
    throw ConfigError("training split of " + std::to_string(train_indices.size()) +
                      " pairs is smaller than the batch size " + std::to_string(cfg.batch_size));
  }

  std::filesystem::path ckpt_dir;
  std::ofstream log_file;
  if (options.out_dir) {
    ckpt_dir = *options.out_dir / "checkpoints";
    std::error_code ec;
    std::filesystem::create_directories(ckpt_dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + ckpt_dir.string() + ": " + ec.message());
    log_file.open(*options.out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write training log in " + options.out_dir->string());
  }

  TrainingRun run;
  run.state = init_train_state(encoder, cfg);
  run.steps_per_epoch = steps_per_epoch;
  const std::string hash = config_hash(cfg, encoder);

  const auto save = [&](const std::filesystem::path& path) {
    CheckpointMeta meta{run.state.step, run.state.epoch, hash,
                        std::vector<double>(run.state.loss_tail.begin(), run.state.loss_tail.end())};
    save_checkpoint(path, run.state.model, meta);
    run.checkpoints.push_back(path);
  };
  if (options.out_dir) save(checkpoint_path(ckpt_dir, 0));

  std::vector<SyntheticPairRecord> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    run.state.epoch = epoch;
    Rng rng(derive_seed(cfg.seed, kShuffleStreamBase + epoch));
    const auto order = rng.permutation(train_indices.size());
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      batch.clear();
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        batch.push_back(corpus.pairs[train_indices[order[s * cfg.batch_size + b]]]);
      }
      StepLog entry;
      entry.lr = cfg.schedule().lr(run.state.step);
      entry.losses = train_step(run.state, batch, cfg);
      entry.step = run.state.step;
      entry.epoch = epoch;
      entry.tau = current_tau(run.state, cfg);
      if (log_file) log_file << to_json_line(entry) << '\n';
      if (options.on_step) options.on_step(entry);
      run.log.push_back(entry);
    }
    run.state.epoch = epoch + 1;
    if (options.out_dir && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      save(checkpoint_path(ckpt_dir, run.state.step));
    }
  }
  if (options.out_dir) {
    if (cfg.epochs > 0) save(ckpt_dir / "final.rapckpt");
    log_file.flush();
    if (!log_file) throw IoError("failed writing training log in " + options.out_dir->string());
  }
  return run;
}

}  // namespace rap
