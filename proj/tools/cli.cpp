#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rap/checkpoint.hpp"
#include "rap/data_synth.hpp"
#include "rap/error.hpp"
#include "rap/eval.hpp"
#include "rap/trainer.hpp"

#ifndef RAP_VERSION
#define RAP_VERSION "0.0.0"
#endif

namespace rap::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path run_dir(const std::string& out, std::uint64_t seed) {
  if (!out.empty()) return out;
  return fs::path("runs") / (timestamp() + "-s" + std::to_string(seed));
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

// Every option of `sub` after parsing (flags > config file > defaults),
// both as a JSON echo and as an argument list that replays the command.
struct Resolved {
  json values = json::object();
  std::vector<std::string> argv;
};

Resolved resolve(const CLI::App& sub) {
  Resolved r;
  r.argv.push_back(sub.get_name());
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "out") continue;
    if (opt->get_type_size() == 0) {
      const bool on = opt->count() > 0 && opt->as<bool>();
      r.values[name] = on;
      if (on) r.argv.push_back("--" + name);
      continue;
    }
    const std::string value = opt->count() ? opt->as<std::string>() : opt->get_default_str();
    if (value.empty()) continue;
    r.values[name] = value;
    r.argv.push_back("--" + name);
    r.argv.push_back(value);
  }
  return r;
}

void write_manifest(const fs::path& dir, const CLI::App& sub, const std::string& config_path,
                    std::uint64_t seed) {
  const Resolved r = resolve(sub);
  json m;
  m["command"] = sub.get_name();
  m["config_path"] = config_path.empty() ? json(nullptr) : json(config_path);
  m["config"] = r.values;
  m["argv"] = r.argv;
  m["seed"] = seed;
  m["out_dir"] = dir.string();
  m["version"] = version_string();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

json to_json(const RetrievalResult& r) {
  return {{"r1", r.r1}, {"r5", r.r5}, {"r10", r.r10}, {"mdr", r.mdr}, {"queries", r.queries}};
}

std::vector<std::size_t> split_indices(const Corpus& corpus, const std::string& which) {
  const Splits s = split_corpus(corpus.pairs.size(), corpus.config.seed);
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  if (which == "all") {
    std::vector<std::size_t> all(corpus.pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw ConfigError("unknown split '" + which + "' (train, val, test or all)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

void add_corpus_options(CLI::App* sub, CorpusConfig& c) {
  sub->add_option("--pairs", c.pairs, "Number of video-text pairs")->required();
  sub->add_option("--frames", c.frames, "Frames per video (K)");
  sub->add_option("--grid-rows", c.grid_rows, "Patch rows per frame");
  sub->add_option("--grid-cols", c.grid_cols, "Patch columns per frame");
  sub->add_option("--patch-size", c.patch_size, "Patch side length in raw cells");
  sub->add_option("--tokens", c.tokens, "Tokens per text (L)");
  sub->add_option("--vocab", c.vocab_size, "Vocabulary size");
  sub->add_option("--concept-dim", c.concept_dim, "Latent concept dimension");
  sub->add_option("--concepts", c.concepts, "Number of concepts");
  sub->add_option("--distractors", c.distractors, "Distractor concepts per video");
  sub->add_option("--rho-v", c.rho_v, "Fraction of planted-redundant patches");
  sub->add_option("--rho-t", c.rho_t, "Fraction of planted-redundant tokens");
  sub->add_option("--noise", c.noise, "Per-frame Gaussian noise scale");
  sub->add_option("--seed", c.seed, "Generator seed");
}

struct TrainFlags {
  TrainConfig train;
  EncoderConfig encoder;
  std::string racl = "both";
  bool no_vtc = false;
  bool no_clamp = false;
  bool no_positional = false;
  std::string corpus;

  void finish() {
    train.racl = parse_racl_mode(racl);
    train.include_vtc = !no_vtc;
    train.clamp_weights = !no_clamp;
    encoder.positional = !no_positional;
    encoder.seed = train.seed;
    train.validate();
  }
};

void add_train_options(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--corpus", f.corpus, "Corpus file written by gen-data")->required();
  sub->add_option("--epochs", f.train.epochs, "Training epochs");
  sub->add_option("--batch-size", f.train.batch_size, "Pairs per mini-batch");
  sub->add_option("--lr", f.train.lr, "Peak learning rate");
  sub->add_option("--initial-lr", f.train.initial_lr, "Learning rate at step 0");
  sub->add_option("--warmup-steps", f.train.warmup_steps, "Linear warmup length in steps");
  sub->add_option("--weight-decay", f.train.weight_decay, "AdamW decoupled weight decay");
  sub->add_option("--lambda", f.train.lambda, "Coefficient of the RaCL loss");
  sub->add_option("--tau", f.train.tau, "Softmax temperature (initial value if learned)");
  sub->add_flag("--learn-tau", f.train.learn_tau, "Learn log(tau), clamped to [0.01, 1]");
  sub->add_option("--racl", f.racl, "RaCL directions: off, v2t, t2v or both");
  sub->add_flag("--weight-grad", f.train.weight_grad, "Backpropagate through the RaCL weights");
  sub->add_flag("--no-vtc", f.no_vtc, "Drop the CLS contrastive term from the total loss");
  sub->add_flag("--no-clamp", f.no_clamp, "Do not clamp RaCL weights to [0, 1]");
  sub->add_option("--weight-floor", f.train.weight_floor, "Added to all-zero weight vectors");
  sub->add_option("--frames", f.train.frames, "Frames kept per video (0 = all)");
  sub->add_option("--seed", f.train.seed, "Seed for initialisation and shuffling");
  sub->add_option("--checkpoint-every", f.train.checkpoint_every, "Epochs between checkpoints (0 = final only)");
  sub->add_option("--hidden", f.encoder.hidden, "Transformer width");
  sub->add_option("--proj-dim", f.encoder.proj_dim, "Shared feature dimension d");
  sub->add_option("--layers", f.encoder.layers, "Transformer blocks per encoder");
  sub->add_option("--heads", f.encoder.heads, "Attention heads");
  sub->add_option("--mlp-dim", f.encoder.mlp_dim, "MLP width");
  sub->add_flag("--no-positional", f.no_positional, "Disable learned positional embeddings");
}

void print_result(std::ostream& out, const ZeroShotResult& r) {
  out << std::fixed << std::setprecision(2);
  out << "direction  R1      R5      R10     MdR\n";
  for (const RetrievalResult* x : {&r.t2v, &r.v2t}) {
    out << std::left << std::setw(11) << to_string(x->direction) << std::setw(8) << x->r1 << std::setw(8)
        << x->r5 << std::setw(8) << x->r10 << x->mdr << '\n';
  }
  out << std::defaultfloat;
}

int cmd_gen_data(const CLI::App& sub, CorpusConfig cfg, const std::string& out_flag,
                 const std::string& config_path, std::ostream& out) {
  cfg.validate();
  const fs::path dir = run_dir(out_flag, cfg.seed);
  make_dir(dir);
  write_manifest(dir, sub, config_path, cfg.seed);
  const Corpus corpus = generate_corpus(cfg);
  save_corpus(corpus, dir / "corpus.rapc");
  const Splits s = split_corpus(corpus.pairs.size(), cfg.seed);
  const json splits = {{"seed", cfg.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
  write_text(dir / "splits.json", splits.dump() + "\n");
  out << "wrote " << corpus.pairs.size() << " pairs to " << (dir / "corpus.rapc").string() << '\n';
  return kExitOk;
}

int cmd_train(const CLI::App& sub, TrainFlags f, const std::string& out_flag,
              const std::string& config_path, std::ostream& out, std::ostream& err) {
  f.finish();
  const Corpus corpus = load_corpus(f.corpus);
  const EncoderConfig enc = encoder_config_for(corpus.config, f.encoder);
  enc.validate();
  const fs::path dir = run_dir(out_flag, f.train.seed);
  make_dir(dir);
  write_manifest(dir, sub, config_path, f.train.seed);

  const Splits splits = split_corpus(corpus.pairs.size(), corpus.config.seed);
  RunOptions opts;
  opts.out_dir = dir;
  std::size_t steps_per_epoch = 0;
  if (f.train.batch_size > 0) steps_per_epoch = splits.train.size() / f.train.batch_size;
  opts.on_step = [&](const StepLog& s) {
    if (steps_per_epoch > 0 && s.step % steps_per_epoch == 0) {
      err << "epoch " << s.epoch + 1 << "/" << f.train.epochs << " step " << s.step << " loss "
          << s.losses.total << " lr " << s.lr << '\n';
    }
  };
  const TrainingRun run = run_training(f.train, enc, corpus, splits.train, opts);
  out << "trained " << run.state.step << " steps; checkpoints in " << (dir / "checkpoints").string() << '\n';
  if (!run.log.empty()) out << "final loss " << run.log.back().losses.total << '\n';
  return kExitOk;
}

int cmd_eval(const CLI::App& sub, const std::string& checkpoint, const std::string& corpus_path,
             const std::string& split, std::size_t frames, const std::string& out_flag,
             const std::string& config_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_path);
  const std::vector<std::size_t> indices = split_indices(corpus, split);
  const fs::path dir = run_dir(out_flag, ckpt.model.config.seed);
  make_dir(dir);
  write_manifest(dir, sub, config_path, ckpt.model.config.seed);
  const ZeroShotResult r = evaluate_zero_shot(ckpt.model, corpus, indices, frames);
  const json j = {{"checkpoint", checkpoint}, {"corpus", corpus_path}, {"split", split},
                  {"pairs", indices.size()}, {"t2v", to_json(r.t2v)}, {"v2t", to_json(r.v2t)}};
  write_text(dir / "eval.json", j.dump(2) + "\n");
  out << split << " split, " << indices.size() << " pairs\n";
  print_result(out, r);
  return kExitOk;
}

int cmd_score(const CLI::App& sub, const std::string& checkpoint, const std::string& corpus_path,
              std::size_t pair, std::size_t frames, const std::string& out_flag,
              const std::string& config_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_path);
  if (pair >= corpus.pairs.size()) {
    throw InputError("pair " + std::to_string(pair) + " outside corpus of " +
                     std::to_string(corpus.pairs.size()) + " pairs");
  }
  const fs::path dir = run_dir(out_flag, ckpt.model.config.seed);
  make_dir(dir);
  write_manifest(dir, sub, config_path, ckpt.model.config.seed);
  char stem[32];
  std::snprintf(stem, sizeof(stem), "pair_%04zu", pair);
  const auto& rec = corpus.pairs[pair];
  const HeatmapArtifact art = export_heatmap(rec, ckpt.model, corpus.config.grid_rows,
                                             corpus.config.grid_cols, dir / stem, {}, frames);
  double sums[4] = {0, 0, 0, 0};
  std::size_t counts[4] = {0, 0, 0, 0};
  for (std::size_t n = 0; n < art.patch_weights.size(); ++n) {
    sums[rec.patch_labels[n] ? 1 : 0] += art.patch_weights[n];
    ++counts[rec.patch_labels[n] ? 1 : 0];
  }
  for (std::size_t l = 0; l < art.token_weights.size(); ++l) {
    sums[rec.token_labels[l] ? 3 : 2] += art.token_weights[l];
    ++counts[rec.token_labels[l] ? 3 : 2];
  }
  const auto mean = [&](int i) { return counts[i] ? sums[i] / static_cast<double>(counts[i]) : 0.0; };
  out << "pair " << pair << " (concept " << rec.concept_id << ")\n"
      << "mean patch weight: aligned " << mean(0) << ", redundant " << mean(1) << '\n'
      << "mean token weight: aligned " << mean(2) << ", redundant " << mean(3) << '\n'
      << "wrote " << art.image_path.string() << ", " << art.token_image_path.string() << ", "
      << art.sidecar_path.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const CLI::App& sub, TrainFlags f, const std::string& seeds_flag,
               const std::string& tables_flag, const std::string& split, const std::string& out_flag,
               const std::string& config_path, std::ostream& out, std::ostream& err) {
  f.finish();
  AblationOptions opts;
  opts.seeds.clear();
  for (const std::string& s : split_list(seeds_flag)) {
    try {
      opts.seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + s + "' in --seeds");
    }
  }
  opts.racl_table = opts.frames_table = opts.lambda_table = false;
  for (const std::string& t : split_list(tables_flag)) {
    if (t == "racl") opts.racl_table = true;
    else if (t == "frames") opts.frames_table = true;
    else if (t == "lambda") opts.lambda_table = true;
    else throw ConfigError("unknown ablation table '" + t + "' (racl, frames, lambda)");
  }
  const Corpus corpus = load_corpus(f.corpus);
  const EncoderConfig enc = encoder_config_for(corpus.config, f.encoder);
  enc.validate();
  const Splits splits = split_corpus(corpus.pairs.size(), corpus.config.seed);
  const std::vector<std::size_t> eval = split_indices(corpus, split);
  const fs::path dir = run_dir(out_flag, opts.seeds.empty() ? 0 : opts.seeds.front());
  make_dir(dir);
  write_manifest(dir, sub, config_path, opts.seeds.empty() ? 0 : opts.seeds.front());

  opts.on_run = [&](const std::string& table, const std::string& row, std::uint64_t seed) {
    err << "ablation " << table << " " << row << " seed " << seed << '\n';
  };
  const std::vector<AblationTable> tables =
      ablation_suite(corpus, f.train, enc, splits.train, eval, opts);
  for (const AblationTable& t : tables) {
    const fs::path path = dir / ("ablation_" + t.name + ".tsv");
    write_text(path, table_to_tsv(t));
    out << "# " << t.name << " -> " << path.string() << '\n' << table_to_tsv(t);
  }
  return kExitOk;
}

int cmd_replay(const std::string& manifest_path, const std::string& out_flag, std::ostream& out,
               std::ostream& err) {
  const json m = read_json(manifest_path);
  if (!m.contains("argv") || !m["argv"].is_array() || m["argv"].empty()) {
    throw InputError(manifest_path + ": manifest has no argv record");
  }
  std::vector<std::string> args = m["argv"].get<std::vector<std::string>>();
  if (args.front() == "replay") throw InputError(manifest_path + ": refusing to replay a replay");
  if (!out_flag.empty()) {
    args.push_back("--out");
    args.push_back(out_flag);
  }
  return run(args, out, err);
}

}  // namespace

std::string version_string() { return std::string("rap ") + RAP_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Redundancy-aware video-text contrastive training on synthetic data", "rap"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  // One file can configure every command: options go under [gen-data],
  // [train], ... sections. Flags given on the command line win.
  app.set_config("--config", "", "TOML/INI file with a section per command");
  app.fallthrough();

  std::string out_flag, config_path;

  CorpusConfig corpus_cfg;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus with planted redundancy");
  add_corpus_options(gen, corpus_cfg);

  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "Train the dual encoder on a corpus");
  add_train_options(train, train_flags);

  std::string checkpoint, corpus_path, split = "test";
  std::size_t frames = 0, pair = 0;
  CLI::App* eval = app.add_subcommand("eval", "Zero-shot retrieval metrics of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--corpus", corpus_path, "Corpus file")->required();
  eval->add_option("--split", split, "train, val, test or all");
  eval->add_option("--frames", frames, "Frames kept per video (0 = all)");

  CLI::App* score = app.add_subcommand("score", "Export redundancy-weight heatmaps for one pair");
  score->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  score->add_option("--corpus", corpus_path, "Corpus file")->required();
  score->add_option("--pair", pair, "Pair index in the corpus")->required();
  score->add_option("--frames", frames, "Frames kept per video (0 = all)");

  TrainFlags ablate_flags;
  std::string seeds = "0,1,2", tables = "racl,frames,lambda";
  CLI::App* ablate = app.add_subcommand("ablate", "RaCL-direction, frame-count and lambda ablations");
  add_train_options(ablate, ablate_flags);
  ablate->add_option("--seeds", seeds, "Comma-separated seeds averaged per row");
  ablate->add_option("--tables", tables, "Comma-separated subset of racl,frames,lambda");
  ablate->add_option("--split", split, "Evaluation split: train, val, test or all");

  std::string manifest_path;
  CLI::App* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();

  for (CLI::App* sub : {gen, train, eval, score, ablate, replay}) {
    sub->add_option("--out", out_flag, "Output directory (default runs/<timestamp>-s<seed>)");
  }

  std::vector<const char*> argv{"rap"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  const CLI::Option* config_opt = app.get_option_no_throw("--config");
  const auto config_of = [&](const CLI::App*) {
    return config_opt && config_opt->count() ? config_opt->as<std::string>() : std::string();
  };
  try {
    if (gen->parsed()) return cmd_gen_data(*gen, corpus_cfg, out_flag, config_of(gen), out);
    if (train->parsed()) return cmd_train(*train, train_flags, out_flag, config_of(train), out, err);
    if (eval->parsed()) return cmd_eval(*eval, checkpoint, corpus_path, split, frames, out_flag, config_of(eval), out);
    if (score->parsed()) return cmd_score(*score, checkpoint, corpus_path, pair, frames, out_flag, config_of(score), out);
    if (ablate->parsed()) {
      return cmd_ablate(*ablate, ablate_flags, seeds, tables, split, out_flag, config_of(ablate), out, err);
    }
    if (replay->parsed()) return cmd_replay(manifest_path, out_flag, out, err);
  } catch (const ConfigError& e) {
    err << "rap: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "rap: error: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitUsage;
}

}  // namespace rap::cli
