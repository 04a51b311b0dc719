#include "rap/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "rap/error.hpp"
#include "rap/ops.hpp"
#include "rap/rng.hpp"

namespace rap {
namespace {

std::string layer_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".block" + std::to_string(layer);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = stddev * rng.normal();
  return t;
}

void add_linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                bool bias, Rng& rng) {
  ps.add(name + ".w", normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (bias) ps.add(name + ".b", Tensor(Shape{out}, 0.0));
}

void add_layer_norm(ParameterSet& ps, const std::string& name, std::size_t width) {
  ps.add(name + ".g", Tensor(Shape{width}, 1.0));
  ps.add(name + ".b", Tensor(Shape{width}, 0.0));
}

void add_tower(ParameterSet& ps, const std::string& prefix, const EncoderConfig& cfg,
               std::size_t positions, Rng& rng) {
  const std::size_t h = cfg.hidden;
  const std::size_t hd = h / cfg.heads;
  ps.add(prefix + ".cls", normal_tensor({h}, 1.0, rng));
  if (cfg.positional) ps.add(prefix + ".pos", normal_tensor({positions, h}, 0.1, rng));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string b = layer_name(prefix, l);
    add_layer_norm(ps, b + ".ln1", h);
    for (std::size_t head = 0; head < cfg.heads; ++head) {
      const std::string a = b + ".attn.h" + std::to_string(head);
      add_linear(ps, a + ".q", h, hd, true, rng);
      add_linear(ps, a + ".k", h, hd, true, rng);
      add_linear(ps, a + ".v", h, hd, true, rng);
      ps.add(a + ".o.w", normal_tensor({hd, h}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    }
    ps.add(b + ".attn.o.b", Tensor(Shape{h}, 0.0));
    add_layer_norm(ps, b + ".ln2", h);
    add_linear(ps, b + ".mlp.fc1", h, cfg.mlp_dim, true, rng);
    add_linear(ps, b + ".mlp.fc2", cfg.mlp_dim, h, true, rng);
  }
  add_layer_norm(ps, prefix + ".ln_final", h);
  add_linear(ps, prefix + ".proj", h, cfg.proj_dim, false, rng);
}

Tensor linear(const Tensor& x, const ParameterSet& ps, const std::string& name) {
  Tensor y = matmul(x, ps.get(name + ".w"));
  const std::string bias = name + ".b";
  return ps.contains(bias) ? add_rowwise(y, ps.get(bias)) : y;
}

Tensor affine_layer_norm(const Tensor& x, const ParameterSet& ps, const std::string& name) {
  return add_rowwise(mul_rowwise(layer_norm_rows(x), ps.get(name + ".g")), ps.get(name + ".b"));
}

// Multi-head self-attention over `groups` independent sequences of `seq`
// rows each. Each head has its own q/k/v/o matrices, which equals the usual
// concat-then-project formulation.
Tensor self_attention(const Tensor& x, std::size_t groups, std::size_t seq, const ParameterSet& ps,
                      const std::string& block, const EncoderConfig& cfg) {
  const std::size_t hd = cfg.hidden / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor out;
  for (std::size_t head = 0; head < cfg.heads; ++head) {
    const std::string a = block + ".attn.h" + std::to_string(head);
    const Tensor q = reshape(linear(x, ps, a + ".q"), {groups, seq, hd});
    const Tensor k = reshape(linear(x, ps, a + ".k"), {groups, seq, hd});
    const Tensor v = reshape(linear(x, ps, a + ".v"), {groups, seq, hd});
    const Tensor scores = scale(batched_matmul(q, k, /*transpose_b=*/true), inv_sqrt);
    const Tensor attn = softmax_rows(scores);
    const Tensor ctx = reshape(batched_matmul(attn, v), {groups * seq, hd});
    const Tensor proj = matmul(ctx, ps.get(a + ".o.w"));
    out = head == 0 ? proj : add(out, proj);
  }
  return add_rowwise(out, ps.get(block + ".attn.o.b"));
}

void check_finite(const Tensor& t, const std::string& tower, std::size_t layer) {
  if (!all_finite(t)) {
    throw NumericFault(tower + " encoder: non-finite activations at layer " + std::to_string(layer));
  }
}

// Pre-LN transformer over [groups*seq x hidden] rows.
Tensor transformer(Tensor x, std::size_t groups, std::size_t seq, const ParameterSet& ps,
                   const std::string& prefix, const EncoderConfig& cfg) {
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string b = layer_name(prefix, l);
    x = add(x, self_attention(affine_layer_norm(x, ps, b + ".ln1"), groups, seq, ps, b, cfg));
    const Tensor h = gelu(linear(affine_layer_norm(x, ps, b + ".ln2"), ps, b + ".mlp.fc1"));
    x = add(x, linear(h, ps, b + ".mlp.fc2"));
    check_finite(x, prefix, l);
  }
  return affine_layer_norm(x, ps, prefix + ".ln_final");
}

// Prepends the learned CLS row to every group of `count` rows and adds the
// positional table, giving [groups*(count+1) x hidden].
Tensor with_cls_and_positions(const Tensor& rows, std::size_t groups, std::size_t count,
                              const ParameterSet& ps, const std::string& prefix,
                              const EncoderConfig& cfg) {
  const std::size_t seq = count + 1;
  const Tensor cls = reshape(ps.get(prefix + ".cls"), {1, cfg.hidden});
  const Tensor parts[] = {cls, rows};
  const Tensor pool = concat_rows(parts);
  std::vector<std::size_t> idx;
  idx.reserve(groups * seq);
  for (std::size_t g = 0; g < groups; ++g) {
    idx.push_back(0);
    for (std::size_t i = 0; i < count; ++i) idx.push_back(1 + g * count + i);
  }
  Tensor x = gather_rows(pool, idx);
  if (cfg.positional) {
    std::vector<std::size_t> pos_idx;
    pos_idx.reserve(groups * seq);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t s = 0; s < seq; ++s) pos_idx.push_back(s);
    x = add(x, gather_rows(ps.get(prefix + ".pos"), pos_idx));
  }
  return x;
}

// Projects [batch*seq x hidden] to the shared space, normalises rows and
// separates CLS (position 0) from the locals.
EncodedBatch project_and_split(const Tensor& pooled, std::size_t batch, std::size_t seq,
                               const ParameterSet& ps, const std::string& prefix) {
  const Tensor features = l2_normalize_rows(matmul(pooled, ps.get(prefix + ".proj.w")));
  std::vector<std::size_t> cls_idx, local_idx;
  for (std::size_t b = 0; b < batch; ++b) {
    cls_idx.push_back(b * seq);
    for (std::size_t s = 1; s < seq; ++s) local_idx.push_back(b * seq + s);
  }
  EncodedBatch out;
  out.cls = gather_rows(features, cls_idx);
  out.locals = gather_rows(features, local_idx);
  out.batch = batch;
  out.count = seq - 1;
  return out;
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden == 0 || proj_dim == 0 || layers == 0 || heads == 0 || mlp_dim == 0 ||
      vocab_size == 0 || frames == 0 || patches == 0 || patch_dim == 0 || max_tokens == 0) {
    throw ConfigError("encoder config: all extents must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("encoder config: hidden (" + std::to_string(hidden) +
                      ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
}

void VideoInput::validate() const {
  if (frames == 0 || patches == 0 || patch_dim == 0) {
    throw DimensionError("video input: K, N and p must be positive");
  }
  if (values.size() != frames * patches * patch_dim) {
    throw DimensionError("video input: expected " + std::to_string(frames * patches * patch_dim) +
                         " values, got " + std::to_string(values.size()));
  }
}

FeatureSet EncodedBatch::item(std::size_t b) const {
  if (b >= batch) throw DimensionError("batch item " + std::to_string(b) + " out of range");
  FeatureSet fs;
  fs.cls = reshape(slice_rows(cls, b, b + 1), {cls.cols()});
  fs.locals = slice_rows(locals, b * count, (b + 1) * count);
  return fs;
}

void ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractViolation("duplicate parameter " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return names_.size();
}

const Tensor& ParameterSet::get(const std::string& name) const {
  const std::size_t i = index_of(name);
  if (i == names_.size()) throw InputError("unknown parameter " + name);
  return values_[i];
}

Tensor& ParameterSet::get(const std::string& name) {
  const std::size_t i = index_of(name);
  if (i == names_.size()) throw InputError("unknown parameter " + name);
  return values_[i];
}

bool ParameterSet::contains(const std::string& name) const { return index_of(name) != names_.size(); }

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

ParameterSet ParameterSet::bind(Tape& tape) const {
  ParameterSet out;
  out.names_ = names_;
  out.values_.reserve(values_.size());
  for (const auto& v : values_) out.values_.push_back(tape.variable(v));
  return out;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  out.names_ = names_;
  for (const auto& v : values_) out.values_.push_back(v.detach());
  return out;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto a = values_[i].values();
    const auto b = other.values_[i].values();
    if (values_[i].shape() != other.values_[i].shape() || !std::equal(a.begin(), a.end(), b.begin()))
      return false;
  }
  return true;
}

DualEncoder init_dual_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  DualEncoder model;
  model.config = cfg;
  Rng rng(derive_seed(cfg.seed, 0x656e63));
  add_linear(model.params, "video.patch_embed", cfg.patch_dim, cfg.hidden, true, rng);
  add_tower(model.params, "video", cfg, cfg.patches + 1, rng);
  model.params.add("text.token_embed", normal_tensor({cfg.vocab_size, cfg.hidden}, 1.0, rng));
  add_tower(model.params, "text", cfg, cfg.max_tokens + 1, rng);
  return model;
}

Tensor patchify(std::span<const double> grid, std::size_t rows, std::size_t cols,
                std::size_t patch_size) {
  if (patch_size == 0 || rows % patch_size != 0 || cols % patch_size != 0) {
    throw ConfigError("patchify: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (grid.size() != rows * cols) throw DimensionError("patchify: grid value count mismatch");
  const std::size_t pr = rows / patch_size, pc = cols / patch_size;
  const std::size_t p = patch_size * patch_size;
  std::vector<double> out;
  out.reserve(pr * pc * p);
  for (std::size_t br = 0; br < pr; ++br)
    for (std::size_t bc = 0; bc < pc; ++bc)
      for (std::size_t r = 0; r < patch_size; ++r)
        for (std::size_t c = 0; c < patch_size; ++c)
          out.push_back(grid[(br * patch_size + r) * cols + bc * patch_size + c]);
  return Tensor(Shape{pr * pc, p}, std::move(out));
}

EncodedBatch encode_videos(std::span<const VideoInput> videos, const ParameterSet& params,
                           const EncoderConfig& cfg) {
  if (videos.empty()) throw InputError("encode_videos: empty batch");
  const std::size_t batch = videos.size();
  const std::size_t k = videos[0].frames, n = videos[0].patches, p = videos[0].patch_dim;
  for (const auto& v : videos) {
    v.validate();
    if (v.frames != k || v.patches != n || v.patch_dim != p) {
      throw DimensionError("encode_videos: videos in a batch must share K, N and p");
    }
  }
  if (n != cfg.patches || p != cfg.patch_dim) {
    throw DimensionError("encode_videos: video has N=" + std::to_string(n) + ", p=" +
                         std::to_string(p) + " but encoder expects N=" + std::to_string(cfg.patches) +
                         ", p=" + std::to_string(cfg.patch_dim));
  }

  std::vector<double> raw;
  raw.reserve(batch * k * n * p);
  for (const auto& v : videos) raw.insert(raw.end(), v.values.begin(), v.values.end());
  const std::size_t groups = batch * k;
  const Tensor patches(Shape{groups * n, p}, std::move(raw));

  const Tensor embedded = linear(patches, params, "video.patch_embed");
  Tensor x = with_cls_and_positions(embedded, groups, n, params, "video", cfg);
  x = transformer(std::move(x), groups, n + 1, params, "video", cfg);

  const std::size_t seq = n + 1;
  // Same position averaged across the K frames of each video.
  const Tensor pooled =
      reshape(mean(reshape(x, {batch, k, seq * cfg.hidden}), 1), {batch * seq, cfg.hidden});
  return project_and_split(pooled, batch, seq, params, "video");
}

EncodedBatch encode_texts(std::span<const TextInput> texts, const ParameterSet& params,
                          const EncoderConfig& cfg) {
  if (texts.empty()) throw InputError("encode_texts: empty batch");
  const std::size_t batch = texts.size();
  const std::size_t len = texts[0].token_ids.size();
  if (len == 0) throw DimensionError("encode_texts: text must have at least one token");
  if (len > cfg.max_tokens) {
    throw DimensionError("encode_texts: text length " + std::to_string(len) +
                         " exceeds max_tokens " + std::to_string(cfg.max_tokens));
  }
  std::vector<std::size_t> ids;
  ids.reserve(batch * len);
  for (const auto& t : texts) {
    if (t.token_ids.size() != len) throw DimensionError("encode_texts: texts in a batch must share L");
    for (std::size_t id : t.token_ids) {
      if (id >= cfg.vocab_size) {
        throw DimensionError("encode_texts: token id " + std::to_string(id) +
                             " outside vocabulary of " + std::to_string(cfg.vocab_size));
      }
      ids.push_back(id);
    }
  }
  const Tensor embedded = gather_rows(params.get("text.token_embed"), ids);
  Tensor x = with_cls_and_positions(embedded, batch, len, params, "text", cfg);
  x = transformer(std::move(x), batch, len + 1, params, "text", cfg);
  return project_and_split(x, batch, len + 1, params, "text");
}

FeatureSet encode_video(const VideoInput& video, const ParameterSet& params,
                        const EncoderConfig& cfg) {
  return encode_videos(std::span<const VideoInput>(&video, 1), params, cfg).item(0);
}

FeatureSet encode_text(const TextInput& text, const ParameterSet& params, const EncoderConfig& cfg) {
  return encode_texts(std::span<const TextInput>(&text, 1), params, cfg).item(0);
}

}  // namespace rap
