#include "rap/data_synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "rap/error.hpp"
#include "rap/rng.hpp"

namespace rap {
namespace {

constexpr const char* kMagic = "RAPCORPUS";
constexpr int kVersion = 1;

// Stream tags for derive_seed.
constexpr std::uint64_t kWorldStream = 1;
constexpr std::uint64_t kPairStream = 2;
constexpr std::uint64_t kSplitStream = 3;
constexpr std::uint64_t kConceptStreamBase = 1000;

std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
}

struct World {
  std::vector<std::vector<double>> concepts;  // [concepts][c]
  std::vector<std::vector<double>> renderer;  // [p][c]
};

World make_world(const CorpusConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, kWorldStream));
  World w;
  w.concepts.assign(cfg.concepts, std::vector<double>(cfg.concept_dim));
  for (auto& z : w.concepts)
    for (double& v : z) v = rng.normal();
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.concept_dim));
  w.renderer.assign(cfg.patch_dim(), std::vector<double>(cfg.concept_dim));
  for (auto& row : w.renderer)
    for (double& v : row) v = s * rng.normal();
  return w;
}

std::vector<double> render(const World& w, std::size_t concept_id) {
  const auto& z = w.concepts[concept_id];
  std::vector<double> out(w.renderer.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < z.size(); ++j) out[i] += w.renderer[i][j] * z[j];
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string config_line(const CorpusConfig& c) {
  std::ostringstream os;
  os << "config pairs=" << c.pairs << " frames=" << c.frames << " grid_rows=" << c.grid_rows
     << " grid_cols=" << c.grid_cols << " patch_size=" << c.patch_size << " tokens=" << c.tokens
     << " vocab_size=" << c.vocab_size << " concept_dim=" << c.concept_dim
     << " concepts=" << c.concepts << " distractors=" << c.distractors << " rho_v=" << format_double(c.rho_v)
     << " rho_t=" << format_double(c.rho_t) << " noise=" << format_double(c.noise)
     << " seed=" << c.seed;
  return os.str();
}

CorpusConfig parse_config_line(const std::vector<std::string>& f, const std::string& file) {
  const auto malformed = [&](const std::string& why) {
    return FormatError(FormatError::Kind::kMalformedHeader, file + ": malformed header: " + why);
  };
  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < f.size(); ++i) {
    const auto eq = f[i].find('=');
    if (eq == std::string::npos) throw malformed("bad config field " + f[i]);
    kv[f[i].substr(0, eq)] = f[i].substr(eq + 1);
  }
  const auto raw = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw malformed(std::string("config lacks ") + key);
    return it->second;
  };
  const auto integer = [&](const char* key) {
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw malformed(std::string("bad ") + key);
    return v;
  };
  const auto real = [&](const char* key) {
    const std::string& s = raw(key);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw malformed(std::string("bad ") + key);
    return v;
  };
  CorpusConfig c;
  c.pairs = integer("pairs");
  c.frames = integer("frames");
  c.grid_rows = integer("grid_rows");
  c.grid_cols = integer("grid_cols");
  c.patch_size = integer("patch_size");
  c.tokens = integer("tokens");
  c.vocab_size = integer("vocab_size");
  c.concept_dim = integer("concept_dim");
  c.concepts = integer("concepts");
  c.distractors = integer("distractors");
  c.rho_v = real("rho_v");
  c.rho_t = real("rho_t");
  c.noise = real("noise");
  c.seed = integer("seed");
  return c;
}

}  // namespace

std::size_t CorpusConfig::redundant_patches() const { return round_count(rho_v, patches()); }
std::size_t CorpusConfig::redundant_tokens() const { return round_count(rho_t, tokens); }

void CorpusConfig::validate() const {
  if (frames == 0 || grid_rows == 0 || grid_cols == 0 || patch_size == 0 || tokens == 0 ||
      vocab_size == 0 || concept_dim == 0) {
    throw ConfigError("corpus config: extents must be positive");
  }
  if (!(rho_v >= 0.0 && rho_v < 1.0) || !(rho_t >= 0.0 && rho_t < 1.0)) {
    throw ConfigError("corpus config: rho_v and rho_t must lie in [0, 1)");
  }
  if (redundant_patches() >= patches()) {
    throw ConfigError("corpus config: rho_v leaves no aligned patch");
  }
  if (redundant_tokens() >= tokens) throw ConfigError("corpus config: rho_t leaves no aligned token");
  if (concepts < 2) throw ConfigError("corpus config: need at least 2 concepts for distractors");
  if (redundant_patches() > 0 && (distractors == 0 || distractors >= concepts)) {
    throw ConfigError("corpus config: distractors must lie in [1, concepts - 1] when rho_v > 0");
  }
  if (vocab_size < tokens - redundant_tokens()) {
    throw ConfigError("corpus config: vocabulary of " + std::to_string(vocab_size) +
                      " cannot hold " + std::to_string(tokens - redundant_tokens()) +
                      " distinct concept tokens");
  }
  if (!(noise >= 0.0)) throw ConfigError("corpus config: noise must be non-negative");
}

std::vector<std::size_t> concept_tokens(const CorpusConfig& cfg, std::size_t concept_id) {
  Rng rng(derive_seed(cfg.seed, kConceptStreamBase + concept_id));
  return rng.sample_without_replacement(cfg.vocab_size, cfg.tokens - cfg.redundant_tokens());
}

Corpus generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  const World world = make_world(cfg);
  std::vector<std::vector<std::size_t>> token_sets(cfg.concepts);
  for (std::size_t k = 0; k < cfg.concepts; ++k) token_sets[k] = concept_tokens(cfg, k);

  const std::size_t n = cfg.patches(), p = cfg.patch_dim(), len = cfg.tokens;
  const std::size_t rows = cfg.grid_rows * cfg.patch_size, cols = cfg.grid_cols * cfg.patch_size;
  Rng rng(derive_seed(cfg.seed, kPairStream));

  Corpus corpus;
  corpus.config = cfg;
  corpus.pairs.reserve(cfg.pairs);
  std::vector<std::vector<double>> base(n);
  std::vector<double> grid(rows * cols);
  for (std::size_t i = 0; i < cfg.pairs; ++i) {
    SyntheticPairRecord rec;
    rec.concept_id = rng.uniform_index(cfg.concepts);
    const auto& own = token_sets[rec.concept_id];

    rec.patch_labels.assign(n, false);
    for (std::size_t pos : rng.sample_without_replacement(n, cfg.redundant_patches()))
      rec.patch_labels[pos] = true;

    // Redundant patches each show one of a few distractor concepts drawn
    // for this pair (never the pair's own concept).
    std::vector<bool> in_video(cfg.concepts, false);
    in_video[rec.concept_id] = true;
    std::vector<std::size_t> pool;
    if (cfg.redundant_patches() > 0) {
      for (std::size_t d : rng.sample_without_replacement(cfg.concepts - 1, cfg.distractors)) {
        pool.push_back(d >= rec.concept_id ? d + 1 : d);
        in_video[pool.back()] = true;
      }
    }
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t shown =
          rec.patch_labels[pos] ? pool[rng.uniform_index(pool.size())] : rec.concept_id;
      base[pos] = render(world, shown);
    }

    // Redundant tokens name concepts absent from the video and avoid every
    // id that a shown concept could produce.
    rec.token_labels.assign(len, false);
    const std::size_t redundant = cfg.redundant_tokens();
    for (std::size_t pos : rng.sample_without_replacement(len, redundant)) rec.token_labels[pos] = true;
    std::vector<std::vector<std::size_t>> absent;
    if (redundant > 0) {
      std::vector<bool> shown_id(cfg.vocab_size, false);
      for (std::size_t k = 0; k < cfg.concepts; ++k)
        if (in_video[k])
          for (std::size_t id : token_sets[k]) shown_id[id] = true;
      for (std::size_t k = 0; k < cfg.concepts; ++k) {
        if (in_video[k]) continue;
        std::vector<std::size_t> ids;
        for (std::size_t id : token_sets[k])
          if (!shown_id[id]) ids.push_back(id);
        if (!ids.empty()) absent.push_back(std::move(ids));
      }
      if (absent.empty()) {
        throw ConfigError("corpus config: no token id is free of the concepts shown in pair " +
                          std::to_string(i) + "; raise vocab_size or concepts");
      }
    }
    rec.text.token_ids.resize(len);
    std::size_t next = 0;
    for (std::size_t pos = 0; pos < len; ++pos) {
      if (rec.token_labels[pos]) {
        const auto& ids = absent[rng.uniform_index(absent.size())];
        rec.text.token_ids[pos] = ids[rng.uniform_index(ids.size())];
      } else {
        rec.text.token_ids[pos] = own[next++];
      }
    }

    rec.video.frames = cfg.frames;
    rec.video.patches = n;
    rec.video.patch_dim = p;
    rec.video.values.reserve(cfg.frames * n * p);
    for (std::size_t f = 0; f < cfg.frames; ++f) {
      for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t br = pos / cfg.grid_cols, bc = pos % cfg.grid_cols;
        for (std::size_t j = 0; j < p; ++j) {
          const std::size_t r = br * cfg.patch_size + j / cfg.patch_size;
          const std::size_t c = bc * cfg.patch_size + j % cfg.patch_size;
          grid[r * cols + c] = base[pos][j] + cfg.noise * rng.normal();
        }
      }
      const Tensor frame = patchify(grid, rows, cols, cfg.patch_size);
      rec.video.values.insert(rec.video.values.end(), frame.values().begin(), frame.values().end());
    }
    corpus.pairs.push_back(std::move(rec));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  const CorpusConfig& c = corpus.config;
  io::ByteWriter w;
  for (const auto& rec : corpus.pairs) {
    if (rec.video.values.size() != c.frames * c.patches() * c.patch_dim() ||
        rec.text.token_ids.size() != c.tokens || rec.patch_labels.size() != c.patches() ||
        rec.token_labels.size() != c.tokens) {
      throw DimensionError("save_corpus: pair does not match the corpus config");
    }
    w.i64(static_cast<std::int64_t>(rec.concept_id));
    w.f64s(rec.video.values);
    for (std::size_t id : rec.text.token_ids) w.i64(static_cast<std::int64_t>(id));
    for (bool b : rec.patch_labels) w.u8(b ? 1 : 0);
    for (bool b : rec.token_labels) w.u8(b ? 1 : 0);
  }
  io::write_container(path, kMagic, kVersion,
                      {config_line(c), "count " + std::to_string(corpus.pairs.size())}, w.bytes());
}

Corpus load_corpus(const std::filesystem::path& path) {
  const std::string file = path.string();
  const io::Container container = io::read_container(path, kMagic, kVersion);
  const auto malformed = [&](const std::string& why) {
    return FormatError(FormatError::Kind::kMalformedHeader, file + ": malformed header: " + why);
  };
  Corpus corpus;
  bool have_config = false, have_count = false;
  std::size_t count = 0;
  for (const auto& line : container.header_lines) {
    const auto f = io::fields(line);
    if (f.empty()) continue;
    if (f[0] == "config") {
      corpus.config = parse_config_line(f, file);
      have_config = true;
    } else if (f[0] == "count" && f.size() == 2) {
      try {
        count = static_cast<std::size_t>(std::stoull(f[1]));
      } catch (const std::exception&) {
        throw malformed("bad count");
      }
      have_count = true;
    } else {
      throw malformed("unknown record '" + line + "'");
    }
  }
  if (!have_config || !have_count) throw malformed("missing config or count record");

  const CorpusConfig& c = corpus.config;
  const std::size_t n = c.patches(), p = c.patch_dim(), len = c.tokens;
  const std::size_t per_pair = 8 + 8 * c.frames * n * p + 8 * len + n + len;
  if (container.payload.size() != per_pair * count) {
    throw malformed("payload of " + std::to_string(container.payload.size()) + " bytes does not hold " +
                    std::to_string(count) + " pairs of " + std::to_string(per_pair) + " bytes");
  }
  io::ByteReader r(container.payload, file);
  corpus.pairs.resize(count);
  for (auto& rec : corpus.pairs) {
    rec.concept_id = static_cast<std::size_t>(r.i64());
    rec.video.frames = c.frames;
    rec.video.patches = n;
    rec.video.patch_dim = p;
    rec.video.values.resize(c.frames * n * p);
    r.f64s(rec.video.values);
    rec.text.token_ids.resize(len);
    for (auto& id : rec.text.token_ids) id = static_cast<std::size_t>(r.i64());
    rec.patch_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) rec.patch_labels[i] = r.u8() != 0;
    rec.token_labels.resize(len);
    for (std::size_t i = 0; i < len; ++i) rec.token_labels[i] = r.u8() != 0;
  }
  return corpus;
}

Splits split_corpus(std::size_t pairs, std::uint64_t seed, double train_fraction,
                    double val_fraction) {
  if (!(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0)) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  Rng rng(derive_seed(seed, kSplitStream));
  const auto perm = rng.permutation(pairs);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(pairs)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(pairs)));
  Splits s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

VideoInput select_frames(const VideoInput& video, std::size_t count) {
  video.validate();
  if (count == 0 || count > video.frames) {
    throw ConfigError("select_frames: cannot take " + std::to_string(count) + " of " +
                      std::to_string(video.frames) + " frames");
  }
  VideoInput out{count, video.patches, video.patch_dim, {}};
  const std::size_t frame_size = video.patches * video.patch_dim;
  out.values.reserve(count * frame_size);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t f = i * video.frames / count;
    const auto begin = video.values.begin() + static_cast<std::ptrdiff_t>(f * frame_size);
    out.values.insert(out.values.end(), begin, begin + static_cast<std::ptrdiff_t>(frame_size));
  }
  return out;
}

}  // namespace rap
