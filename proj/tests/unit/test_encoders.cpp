#include <doctest.h>

#include <cmath>
#include <limits>

#include "rap/encoders.hpp"
#include "rap/error.hpp"
#include "rap/ops.hpp"
#include "support.hpp"

using namespace rap;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.hidden = 8;
  cfg.proj_dim = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.mlp_dim = 12;
  cfg.vocab_size = 7;
  cfg.frames = 2;
  cfg.patches = 3;
  cfg.patch_dim = 4;
  cfg.max_tokens = 3;
  cfg.seed = 5;
  return cfg;
}

VideoInput random_video(Rng& rng, std::size_t k, std::size_t n, std::size_t p) {
  VideoInput v{k, n, p, {}};
  for (std::size_t i = 0; i < k * n * p; ++i) v.values.push_back(rng.normal());
  return v;
}

void check_unit_rows(const Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) ss += t.at(r, c) * t.at(r, c);
    CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-9);
  }
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_SUITE("encoders") {

TEST_CASE("patchify 4x4 grid with patch 2") {
  std::vector<double> grid(16);
  for (std::size_t i = 0; i < 16; ++i) grid[i] = static_cast<double>(i);
  const Tensor p = patchify(grid, 4, 4, 2);
  REQUIRE(p.shape() == Shape{4, 4});
  const double want[4][4] = {{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}};
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.at(n, i) == want[n][i]);
}

TEST_CASE("patchify with patch equal to grid is the whole grid") {
  const std::vector<double> grid = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Tensor p = patchify(grid, 3, 3, 3);
  REQUIRE(p.shape() == Shape{1, 9});
  for (std::size_t i = 0; i < 9; ++i) CHECK(p[i] == grid[i]);
}

TEST_CASE("patchify 6x4 grid follows block index arithmetic") {
  const std::size_t rows = 6, cols = 4, ps = 2;
  std::vector<double> grid(rows * cols);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 100.0 + static_cast<double>(i);
  const Tensor p = patchify(grid, rows, cols, ps);
  REQUIRE(p.shape() == Shape{6, 4});
  for (std::size_t n = 0; n < 6; ++n) {
    const std::size_t br = n / (cols / ps), bc = n % (cols / ps);
    for (std::size_t i = 0; i < ps; ++i)
      for (std::size_t j = 0; j < ps; ++j)
        CHECK(p.at(n, i * ps + j) == grid[(br * ps + i) * cols + bc * ps + j]);
  }
}

TEST_CASE("patchify rejects non-divisible extents") {
  const std::vector<double> grid(15, 0.0);
  CHECK_THROWS_AS(patchify(grid, 5, 3, 2), ConfigError);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.proj_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("video features have unit rows and (N+1) x d shape") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  Rng rng(1);
  const FeatureSet fs = encode_video(random_video(rng, 2, 3, 4), model.params, cfg);
  CHECK(fs.cls.numel() == cfg.proj_dim);
  CHECK(fs.locals.shape() == Shape{3, cfg.proj_dim});
  check_unit_rows(fs.locals);
  check_unit_rows(reshape(fs.cls, Shape{1, cfg.proj_dim}));
}

TEST_CASE("text features have unit rows and (L+1) x d shape") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  const FeatureSet fs = encode_text(TextInput{{0, 6, 3}}, model.params, cfg);
  CHECK(fs.locals.shape() == Shape{3, cfg.proj_dim});
  check_unit_rows(fs.locals);
  check_unit_rows(reshape(fs.cls, Shape{1, cfg.proj_dim}));
}

TEST_CASE("unit rows hold for arbitrary parameter values") {
  const EncoderConfig cfg = small_config();
  DualEncoder model = init_dual_encoder(cfg);
  Rng rng(77);
  for (Tensor& t : model.params.values())
    for (double& x : t.mutable_values()) x = 3.0 * rng.normal();
  const FeatureSet v = encode_video(random_video(rng, 2, 3, 4), model.params, cfg);
  const FeatureSet t = encode_text(TextInput{{1, 2, 2}}, model.params, cfg);
  check_unit_rows(v.locals);
  check_unit_rows(t.locals);
}

TEST_CASE("single frame pooling equals duplicated frames") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  Rng rng(2);
  const VideoInput one = random_video(rng, 1, 3, 4);
  VideoInput two = one;
  two.frames = 2;
  two.values.insert(two.values.end(), one.values.begin(), one.values.end());
  const FeatureSet a = encode_video(one, model.params, cfg);
  const FeatureSet b = encode_video(two, model.params, cfg);
  check_close(a.locals, b.locals, 1e-9);
  check_close(a.cls, b.cls, 1e-9);
}

TEST_CASE("repeated token without positions gives identical locals") {
  EncoderConfig cfg = small_config();
  cfg.positional = false;
  const DualEncoder model = init_dual_encoder(cfg);
  const FeatureSet fs = encode_text(TextInput{{4, 4}}, model.params, cfg);
  for (std::size_t c = 0; c < cfg.proj_dim; ++c) CHECK(fs.locals.at(0, c) == fs.locals.at(1, c));

  cfg.positional = true;
  const DualEncoder with_pos = init_dual_encoder(cfg);
  const FeatureSet p = encode_text(TextInput{{4, 4}}, with_pos.params, cfg);
  bool differ = false;
  for (std::size_t c = 0; c < cfg.proj_dim; ++c) differ = differ || p.locals.at(0, c) != p.locals.at(1, c);
  CHECK(differ);
}

TEST_CASE("batched encoding matches per-item encoding") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  Rng rng(6);
  const std::vector<VideoInput> vids = {random_video(rng, 2, 3, 4), random_video(rng, 2, 3, 4)};
  const EncodedBatch batch = encode_videos(vids, model.params, cfg);
  for (std::size_t b = 0; b < 2; ++b) {
    const FeatureSet single = encode_video(vids[b], model.params, cfg);
    check_close(batch.item(b).locals, single.locals, 1e-12);
    check_close(batch.item(b).cls, single.cls, 1e-12);
  }
}

TEST_CASE("encoding is deterministic in the seed") {
  const EncoderConfig cfg = small_config();
  CHECK(init_dual_encoder(cfg).params == init_dual_encoder(cfg).params);
  EncoderConfig other = cfg;
  other.seed = 6;
  CHECK_FALSE(init_dual_encoder(other).params == init_dual_encoder(cfg).params);

  const DualEncoder model = init_dual_encoder(cfg);
  Rng r1(3), r2(3);
  const FeatureSet a = encode_video(random_video(r1, 2, 3, 4), model.params, cfg);
  const FeatureSet b = encode_video(random_video(r2, 2, 3, 4), model.params, cfg);
  for (std::size_t i = 0; i < a.locals.numel(); ++i) CHECK(a.locals[i] == b.locals[i]);
}

TEST_CASE("text gradient with respect to the embedding table") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  Rng rng(12);
  const Tensor probe = test::random_matrix(rng, 3, cfg.proj_dim);
  const double err = test::gradient_error(
      [&](const std::vector<Tensor>& in) {
        ParameterSet ps = model.params.clone();
        ps.get("text.token_embed") = in[0];
        const FeatureSet fs = encode_text(TextInput{{1, 5, 1}}, ps, cfg);
        return sum(mul(fs.locals, probe));
      },
      {model.params.get("text.token_embed")});
  CHECK(err < 1e-4);
}

TEST_CASE("video gradient with respect to every parameter") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  Rng rng(13);
  const VideoInput v = random_video(rng, 2, 3, 4);
  const Tensor probe = test::random_matrix(rng, 3, cfg.proj_dim);
  const double err = test::param_gradient_error(
      [&](const ParameterSet& ps) {
        const FeatureSet fs = encode_video(v, ps, cfg);
        return add(sum(mul(fs.locals, probe)), sum(fs.cls));
      },
      model.params);
  CHECK(err < 1e-4);
}

TEST_CASE("malformed inputs are rejected") {
  const EncoderConfig cfg = small_config();
  const DualEncoder model = init_dual_encoder(cfg);
  CHECK_THROWS_AS(encode_text(TextInput{{7}}, model.params, cfg), DimensionError);
  CHECK_THROWS_AS(encode_text(TextInput{{1, 1, 1, 1}}, model.params, cfg), DimensionError);
  VideoInput bad{2, 3, 4, std::vector<double>(5, 0.0)};
  CHECK_THROWS_AS(encode_video(bad, model.params, cfg), DimensionError);
}

TEST_CASE("non-finite activations name the layer") {
  const EncoderConfig cfg = small_config();
  DualEncoder model = init_dual_encoder(cfg);
  model.params.get("video.patch_embed.w").mutable_values()[0] =
      std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  try {
    encode_video(random_video(rng, 2, 3, 4), model.params, cfg);
    FAIL("expected NumericFault");
  } catch (const NumericFault& e) {
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
}

}  // TEST_SUITE
