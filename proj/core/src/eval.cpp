#include "rap/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rap/error.hpp"
#include "rap/ops.hpp"

namespace rap {
namespace {

constexpr std::size_t kEncodeChunk = 64;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const double> weights) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double w : weights) {
    const auto px = static_cast<unsigned char>(std::lround(std::clamp(w, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(px));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ZeroShotResult average(const std::vector<ZeroShotResult>& runs) {
  ZeroShotResult m;
  m.t2v.direction = Direction::kTextToVideo;
  m.v2t.direction = Direction::kVideoToText;
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    m.t2v.r1 += r.t2v.r1 / n;
    m.t2v.r5 += r.t2v.r5 / n;
    m.t2v.r10 += r.t2v.r10 / n;
    m.t2v.mdr += r.t2v.mdr / n;
    m.v2t.r1 += r.v2t.r1 / n;
    m.v2t.r5 += r.v2t.r5 / n;
    m.v2t.r10 += r.v2t.r10 / n;
    m.v2t.mdr += r.v2t.mdr / n;
    m.t2v.queries = r.t2v.queries;
    m.v2t.queries = r.v2t.queries;
  }
  return m;
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::kTextToVideo ? "t2v" : "v2t"; }

std::vector<std::size_t> truth_ranks(const Tensor& sim, std::span<const std::size_t> ground_truth) {
  if (sim.rank() != 2) throw DimensionError("retrieval: similarity must be a matrix");
  const std::size_t q = sim.rows(), c = sim.cols();
  if (ground_truth.size() != q) {
    throw InputError("retrieval: " + std::to_string(q) + " queries but " +
                     std::to_string(ground_truth.size()) + " ground-truth entries");
  }
  std::vector<std::size_t> ranks(q);
  for (std::size_t i = 0; i < q; ++i) {
    const std::size_t gt = ground_truth[i];
    if (gt >= c) {
      throw InputError("retrieval: ground-truth column " + std::to_string(gt) + " missing for query " +
                       std::to_string(i) + " (" + std::to_string(c) + " candidates)");
    }
    const double truth = sim.at(i, gt);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double s = sim.at(i, j);
      if (s > truth || (s == truth && j < gt)) ++ahead;
    }
    ranks[i] = ahead + 1;
  }
  return ranks;
}

RetrievalResult retrieval_metrics(const Tensor& sim, std::span<const std::size_t> ground_truth,
                                  Direction direction) {
  std::vector<std::size_t> ranks = truth_ranks(sim, ground_truth);
  if (ranks.empty()) throw InputError("retrieval: no queries");
  RetrievalResult r;
  r.direction = direction;
  r.queries = ranks.size();
  const double n = static_cast<double>(ranks.size());
  const auto pct = [&](std::size_t k) {
    return 100.0 * static_cast<double>(std::count_if(ranks.begin(), ranks.end(),
                                                     [k](std::size_t x) { return x <= k; })) / n;
  };
  r.r1 = pct(1);
  r.r5 = pct(5);
  r.r10 = pct(10);
  std::sort(ranks.begin(), ranks.end());
  const std::size_t mid = ranks.size() / 2;
  r.mdr = ranks.size() % 2 ? static_cast<double>(ranks[mid])
                           : 0.5 * static_cast<double>(ranks[mid - 1] + ranks[mid]);
  return r;
}

SplitEmbeddings encode_split(const DualEncoder& model, const Corpus& corpus,
                             std::span<const std::size_t> indices, std::size_t frames) {
  if (indices.empty()) throw InputError("evaluation split is empty");
  std::vector<Tensor> vc, tc;
  for (std::size_t start = 0; start < indices.size(); start += kEncodeChunk) {
    const std::size_t end = std::min(indices.size(), start + kEncodeChunk);
    std::vector<VideoInput> videos;
    std::vector<TextInput> texts;
    for (std::size_t i = start; i < end; ++i) {
      if (indices[i] >= corpus.pairs.size()) {
        throw InputError("pair index " + std::to_string(indices[i]) + " outside corpus of " +
                         std::to_string(corpus.pairs.size()));
      }
      const auto& rec = corpus.pairs[indices[i]];
      videos.push_back(frames ? select_frames(rec.video, frames) : rec.video);
      texts.push_back(rec.text);
    }
    vc.push_back(encode_videos(videos, model.params, model.config).cls);
    tc.push_back(encode_texts(texts, model.params, model.config).cls);
  }
  return {concat_rows(vc), concat_rows(tc)};
}

ZeroShotResult evaluate_zero_shot(const DualEncoder& model, const Corpus& corpus,
                                  std::span<const std::size_t> indices, std::size_t frames) {
  const SplitEmbeddings e = encode_split(model, corpus, indices, frames);
  std::vector<std::size_t> identity(indices.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  const Tensor t2v = matmul(e.text_cls, transpose(e.video_cls));
  ZeroShotResult r;
  r.t2v = retrieval_metrics(t2v, identity, Direction::kTextToVideo);
  r.v2t = retrieval_metrics(transpose(t2v), identity, Direction::kVideoToText);
  return r;
}

RedundancyWeights pair_redundancy(const SyntheticPairRecord& pair, const DualEncoder& model,
                                  const WeightOptions& opts, std::size_t frames) {
  const FeatureSet v = encode_video(frames ? select_frames(pair.video, frames) : pair.video,
                                    model.params, model.config);
  const FeatureSet t = encode_text(pair.text, model.params, model.config);
  return compute_redundancy(v.locals, t.locals, opts);
}

WeightSeparation weight_separation(const DualEncoder& model, const Corpus& corpus,
                                   std::span<const std::size_t> indices, const WeightOptions& opts,
                                   std::size_t frames) {
  double sums[4] = {0, 0, 0, 0};
  std::size_t counts[4] = {0, 0, 0, 0};
  for (std::size_t idx : indices) {
    const auto& rec = corpus.pairs.at(idx);
    const RedundancyWeights w = pair_redundancy(rec, model, opts, frames);
    for (std::size_t n = 0; n < rec.patch_labels.size(); ++n) {
      const int slot = rec.patch_labels[n] ? 1 : 0;
      sums[slot] += w.w_patch[n];
      ++counts[slot];
    }
    for (std::size_t l = 0; l < rec.token_labels.size(); ++l) {
      const int slot = rec.token_labels[l] ? 3 : 2;
      sums[slot] += w.w_token[l];
      ++counts[slot];
    }
  }
  const auto avg = [&](int i) { return counts[i] ? sums[i] / static_cast<double>(counts[i]) : 0.0; };
  return {avg(0), avg(1), avg(2), avg(3)};
}

HeatmapArtifact export_heatmap(const SyntheticPairRecord& pair, const DualEncoder& model,
                               std::size_t grid_rows, std::size_t grid_cols,
                               const std::filesystem::path& stem, const WeightOptions& opts,
                               std::size_t frames) {
  if (grid_rows * grid_cols != pair.video.patches) {
    throw DimensionError("heatmap grid " + std::to_string(grid_rows) + "x" + std::to_string(grid_cols) +
                         " does not match " + std::to_string(pair.video.patches) + " patches");
  }
  const RedundancyWeights w = pair_redundancy(pair, model, opts, frames);
  HeatmapArtifact art;
  art.grid_rows = grid_rows;
  art.grid_cols = grid_cols;
  art.patch_weights = to_vector(w.w_patch);
  art.token_weights = to_vector(w.w_token);
  art.token_ids = pair.text.token_ids;
  art.image_path = stem.string() + "_patches.pgm";
  art.token_image_path = stem.string() + "_tokens.pgm";
  art.sidecar_path = stem.string() + ".txt";

  if (stem.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(stem.parent_path(), ec);
    if (ec) throw IoError("cannot create " + stem.parent_path().string() + ": " + ec.message());
  }
  write_pgm(art.image_path, grid_cols, grid_rows, art.patch_weights);
  write_pgm(art.token_image_path, art.token_weights.size(), 1, art.token_weights);

  std::ofstream side(art.sidecar_path, std::ios::trunc);
  if (!side) throw IoError("cannot write " + art.sidecar_path.string());
  side << "# RaCL weights w = clamp(1 - redundancy, 0, 1); 1 = fully grounded\n";
  side << "grid " << grid_rows << ' ' << grid_cols << '\n';
  side << "patch_weights " << art.patch_weights.size();
  for (double v : art.patch_weights) side << ' ' << format_double(v);
  side << "\ntoken_ids " << art.token_ids.size();
  for (std::size_t id : art.token_ids) side << ' ' << id;
  side << "\ntoken_weights " << art.token_weights.size();
  for (double v : art.token_weights) side << ' ' << format_double(v);
  side << "\npatch_image " << art.image_path.filename().string();
  side << "\ntoken_image " << art.token_image_path.filename().string() << '\n';
  if (!side) throw IoError("failed writing " + art.sidecar_path.string());
  return art;
}

HeatmapArtifact read_heatmap_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  HeatmapArtifact art;
  art.sidecar_path = path;
  const auto bad = [&](const std::string& why) {
    return FormatError(FormatError::Kind::kMalformedHeader, path.string() + ": " + why);
  };
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "grid") {
      is >> art.grid_rows >> art.grid_cols;
    } else if (key == "patch_weights" || key == "token_weights") {
      std::size_t n = 0;
      is >> n;
      auto& dst = key == "patch_weights" ? art.patch_weights : art.token_weights;
      for (std::size_t i = 0; i < n; ++i) {
        std::string tok;
        is >> tok;
        double v = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc()) throw bad("bad weight '" + tok + "'");
        dst.push_back(v);
      }
    } else if (key == "token_ids") {
      std::size_t n = 0;
      is >> n;
      art.token_ids.resize(n);
      for (auto& id : art.token_ids) is >> id;
    } else if (key == "patch_image") {
      std::string name;
      is >> name;
      art.image_path = path.parent_path() / name;
    } else if (key == "token_image") {
      std::string name;
      is >> name;
      art.token_image_path = path.parent_path() / name;
    } else {
      throw bad("unknown record '" + key + "'");
    }
    if (is.fail()) throw bad("malformed line '" + line + "'");
  }
  return art;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) {
    throw FormatError(FormatError::Kind::kMalformedHeader, path.string() + ": not an 8-bit P5 PGM");
  }
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw FormatError(FormatError::Kind::kTruncated, path.string() + ": truncated pixel data");
  }
  return img;
}

ZeroShotResult train_and_evaluate(const Corpus& corpus, TrainConfig cfg, EncoderConfig encoder,
                                  std::uint64_t seed, std::span<const std::size_t> train_indices,
                                  std::span<const std::size_t> eval_indices) {
  cfg.seed = seed;
  encoder.seed = seed;
  const TrainingRun run = run_training(cfg, encoder, corpus, train_indices);
  return evaluate_zero_shot(run.state.model, corpus, eval_indices, cfg.frames);
}

std::vector<AblationTable> ablation_suite(const Corpus& corpus, const TrainConfig& base,
                                          const EncoderConfig& encoder,
                                          std::span<const std::size_t> train_indices,
                                          std::span<const std::size_t> eval_indices,
                                          const AblationOptions& options) {
  if (options.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (options.frames_table && corpus.config.frames < kAblationFrames.back()) {
    throw ConfigError("frame ablation needs a corpus with at least " +
                      std::to_string(kAblationFrames.back()) + " frames, this one has " +
                      std::to_string(corpus.config.frames));
  }
  const auto run_row = [&](const std::string& table, const std::string& label, const TrainConfig& cfg) {
    AblationRow row;
    row.label = label;
    for (std::uint64_t seed : options.seeds) {
      if (options.on_run) options.on_run(table, label, seed);
      row.per_seed.push_back(train_and_evaluate(corpus, cfg, encoder, seed, train_indices, eval_indices));
    }
    row.mean = average(row.per_seed);
    return row;
  };

  std::vector<AblationTable> tables;
  if (options.racl_table) {
    AblationTable t{"racl", "racl", {}};
    for (RaclMode mode : kAblationRaclModes) {
      TrainConfig cfg = base;
      cfg.racl = mode;
      t.rows.push_back(run_row(t.name, to_string(mode), cfg));
    }
    tables.push_back(std::move(t));
  }
  if (options.frames_table) {
    AblationTable t{"frames", "frames", {}};
    for (std::size_t k : kAblationFrames) {
      TrainConfig cfg = base;
      cfg.frames = k;
      t.rows.push_back(run_row(t.name, std::to_string(k), cfg));
    }
    tables.push_back(std::move(t));
  }
  if (options.lambda_table) {
    AblationTable t{"lambda", "lambda", {}};
    for (double lambda : kAblationLambdas) {
      TrainConfig cfg = base;
      cfg.racl = RaclMode::kBoth;
      cfg.lambda = lambda;
      t.rows.push_back(run_row(t.name, format_double(lambda), cfg));
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

std::string table_to_tsv(const AblationTable& table) {
  std::ostringstream os;
  os << table.key << "\tt2v_r1\tt2v_r5\tt2v_r10\tt2v_mdr\tv2t_r1\tv2t_r5\tv2t_r10\tv2t_mdr\tseeds\n";
  for (const auto& row : table.rows) {
    os << row.label;
    for (const RetrievalResult* r : {&row.mean.t2v, &row.mean.v2t}) {
      os << '\t' << format_double(r->r1) << '\t' << format_double(r->r5) << '\t'
         << format_double(r->r10) << '\t' << format_double(r->mdr);
    }
    os << '\t' << row.per_seed.size() << '\n';
  }
  return os.str();
}

}  // namespace rap
