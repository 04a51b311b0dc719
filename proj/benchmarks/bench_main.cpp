#include <benchmark/benchmark.h>

#include <vector>

#include "rap/data_synth.hpp"
#include "rap/encoders.hpp"
#include "rap/losses.hpp"
#include "rap/ops.hpp"
#include "rap/redundancy.hpp"
#include "rap/rng.hpp"
#include "rap/trainer.hpp"

namespace {

rap::Tensor random_matrix(rap::Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal();
  return rap::Tensor::matrix(rows, cols, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  rap::Rng rng(1);
  const rap::Tensor a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(rap::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  rap::Rng rng(2);
  const rap::Tensor a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  for (auto _ : state) {
    rap::Tape tape;
    const rap::Tensor x = tape.variable(a), y = tape.variable(b);
    tape.backward(rap::sum(rap::matmul(x, y)));
    benchmark::DoNotOptimize(x.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

// Redundancy weights for one pair at the default N = 16, L = 8, d = 16.
void BM_PairRedundancy(benchmark::State& state) {
  rap::Rng rng(3);
  const rap::Tensor p = rap::l2_normalize_rows(random_matrix(rng, 16, 16));
  const rap::Tensor t = rap::l2_normalize_rows(random_matrix(rng, 8, 16));
  for (auto _ : state) benchmark::DoNotOptimize(rap::compute_redundancy(p, t));
}
BENCHMARK(BM_PairRedundancy);

struct TrainFixture {
  rap::Corpus corpus;
  rap::EncoderConfig encoder;
  TrainFixture() {
    rap::CorpusConfig cc;
    cc.pairs = 64;
    corpus = rap::generate_corpus(cc);
    encoder = rap::encoder_config_for(cc);
  }
};

// Encode a batch of videos and texts without a tape.
void BM_EncodeBatch(benchmark::State& state) {
  static const TrainFixture fx;
  const rap::DualEncoder model = rap::init_dual_encoder(fx.encoder);
  const auto b = static_cast<std::size_t>(state.range(0));
  std::vector<rap::VideoInput> videos;
  std::vector<rap::TextInput> texts;
  for (std::size_t i = 0; i < b; ++i) {
    videos.push_back(fx.corpus.pairs[i].video);
    texts.push_back(fx.corpus.pairs[i].text);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(rap::encode_videos(videos, model.params, fx.encoder));
    benchmark::DoNotOptimize(rap::encode_texts(texts, model.params, fx.encoder));
  }
}
BENCHMARK(BM_EncodeBatch)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// One full optimisation step (forward, weights, loss, backward, AdamW).
void BM_TrainStep(benchmark::State& state) {
  static const TrainFixture fx;
  rap::TrainConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  rap::TrainState s = rap::init_train_state(fx.encoder, cfg);
  const std::vector<rap::SyntheticPairRecord> batch(fx.corpus.pairs.begin(),
                                                    fx.corpus.pairs.begin() + state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rap::train_step(s, batch, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
