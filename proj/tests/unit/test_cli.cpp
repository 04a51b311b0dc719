#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "rap/checkpoint.hpp"
#include "rap/data_synth.hpp"
#include "rap/eval.hpp"

using namespace rap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome rap_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

fs::path fresh(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rap_unit_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::vector<std::string> kTinyCorpus = {"--pairs", "40",   "--frames",  "2",      "--grid-rows",
                                              "2",       "--grid-cols", "2", "--patch-size", "2",
                                              "--tokens", "4",   "--vocab",   "32",     "--concepts", "8"};
const std::vector<std::string> kTinyModel = {"--batch-size", "8", "--hidden", "8", "--proj-dim", "4",
                                             "--layers", "1", "--mlp-dim", "16"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

fs::path tiny_corpus(const std::string& name) {
  const fs::path dir = fresh(name);
  const Outcome o = rap_run(cat({"gen-data", "--out", dir.string()}, kTinyCorpus));
  REQUIRE(o.code == 0);
  return dir / "corpus.rapc";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version and help") {
  const Outcome v = rap_run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(cli::version_string()) != std::string::npos);
  CHECK(cli::version_string() == "rap 0.1.0");
  CHECK(rap_run({"--help"}).code == 0);
  CHECK(rap_run({}).code == cli::kExitUsage);
  CHECK(rap_run({"gen-data", "--pairs", "3", "--bogus"}).code == cli::kExitUsage);
}

TEST_CASE("gen-data is deterministic") {
  const fs::path a = fresh("gen_a"), b = fresh("gen_b");
  REQUIRE(rap_run({"gen-data", "--pairs", "10", "--seed", "7", "--out", a.string()}).code == 0);
  REQUIRE(rap_run({"gen-data", "--pairs", "10", "--seed", "7", "--out", b.string()}).code == 0);
  CHECK(slurp(a / "corpus.rapc") == slurp(b / "corpus.rapc"));
  CHECK(slurp(a / "splits.json") == slurp(b / "splits.json"));
  const auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  CHECK(ma["config"] == mb["config"]);
  CHECK(ma["seed"] == 7);
  CHECK(load_corpus(a / "corpus.rapc").pairs.size() == 10);
}

TEST_CASE("missing required flag writes nothing") {
  const fs::path dir = fresh("missing");
  const Outcome o = rap_run({"gen-data", "--seed", "7", "--out", dir.string()});
  CHECK(o.code == cli::kExitUsage);
  CHECK(o.err.find("pairs") != std::string::npos);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("invalid values are usage errors") {
  const fs::path dir = fresh("invalid");
  CHECK(rap_run({"gen-data", "--pairs", "5", "--rho-v", "1.5", "--out", dir.string()}).code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(dir / "corpus.rapc"));
  CHECK(rap_run({"gen-data", "--pairs", "five", "--out", dir.string()}).code == cli::kExitUsage);
}

TEST_CASE("rho-v 0 gives no redundant patches") {
  const fs::path dir = fresh("rho0");
  REQUIRE(rap_run({"gen-data", "--pairs", "12", "--rho-v", "0", "--out", dir.string()}).code == 0);
  const Corpus c = load_corpus(dir / "corpus.rapc");
  for (const auto& p : c.pairs)
    for (bool b : p.patch_labels) CHECK_FALSE(b);
}

TEST_CASE("config file sections with flag precedence") {
  const fs::path dir = fresh("config");
  fs::create_directories(dir);
  const fs::path ini = dir / "rap.ini";
  std::ofstream(ini) << "[gen-data]\npairs = 12\nseed = 3\nrho-t = 0.25\n";
  REQUIRE(rap_run({"gen-data", "--config", ini.string(), "--out", (dir / "a").string()}).code == 0);
  const Corpus a = load_corpus(dir / "a" / "corpus.rapc");
  CHECK(a.pairs.size() == 12);
  CHECK(a.config.seed == 3);
  CHECK(a.config.rho_t == 0.25);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["config_path"] == ini.string());

  REQUIRE(rap_run({"gen-data", "--config", ini.string(), "--pairs", "5", "--out", (dir / "b").string()}).code == 0);
  const Corpus b = load_corpus(dir / "b" / "corpus.rapc");
  CHECK(b.pairs.size() == 5);
  CHECK(b.config.seed == 3);
}

TEST_CASE("train with zero epochs writes the initial checkpoint only") {
  const fs::path corpus = tiny_corpus("train0_data");
  const fs::path dir = fresh("train0");
  const Outcome o =
      rap_run(cat({"train", "--corpus", corpus.string(), "--epochs", "0", "--out", dir.string()}, kTinyModel));
  CHECK(o.code == 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "checkpoints")) names.push_back(e.path().filename().string());
  CHECK(names == std::vector<std::string>{"step_000000.rapckpt"});
  CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("eval on a missing checkpoint names the path") {
  const fs::path corpus = tiny_corpus("eval_missing_data");
  const std::string missing = (fresh("eval_missing") / "nope.rapckpt").string();
  const Outcome o = rap_run({"eval", "--checkpoint", missing, "--corpus", corpus.string(), "--out",
                             fresh("eval_missing_out").string()});
  CHECK(o.code == cli::kExitFault);
  CHECK(o.err.find(missing) != std::string::npos);
}

TEST_CASE("train, eval, score and replay") {
  const fs::path corpus = tiny_corpus("flow_data");
  const fs::path run = fresh("flow_train");
  REQUIRE(rap_run(cat({"train", "--corpus", corpus.string(), "--epochs", "2", "--out", run.string()}, kTinyModel))
              .code == 0);
  const fs::path final_ckpt = run / "checkpoints" / "final.rapckpt";
  REQUIRE(fs::exists(final_ckpt));
  CHECK(fs::exists(run / "train_log.jsonl"));

  const fs::path ev = fresh("flow_eval");
  const Outcome e = rap_run({"eval", "--checkpoint", final_ckpt.string(), "--corpus", corpus.string(), "--split",
                             "all", "--out", ev.string()});
  REQUIRE(e.code == 0);
  const auto ej = nlohmann::json::parse(slurp(ev / "eval.json"));
  CHECK(ej["pairs"] == 40);
  const Checkpoint ckpt = load_checkpoint(final_ckpt);
  const Corpus c = load_corpus(corpus);
  std::vector<std::size_t> all(40);
  for (std::size_t i = 0; i < 40; ++i) all[i] = i;
  const ZeroShotResult z = evaluate_zero_shot(ckpt.model, c, all);
  CHECK(ej["t2v"]["r1"].get<double>() == z.t2v.r1);
  CHECK(ej["v2t"]["mdr"].get<double>() == z.v2t.mdr);

  // score --pair 3 against the library's heatmap export for the same pair
  const fs::path sc = fresh("flow_score");
  const Outcome s = rap_run({"score", "--checkpoint", final_ckpt.string(), "--corpus", corpus.string(), "--pair",
                             "3", "--out", sc.string()});
  REQUIRE(s.code == 0);
  CHECK(s.out.find("pair 3") != std::string::npos);
  CHECK(fs::exists(sc / "pair_0003_patches.pgm"));
  CHECK(fs::exists(sc / "pair_0003_tokens.pgm"));
  const HeatmapArtifact from_cli = read_heatmap_sidecar(sc / "pair_0003.txt");
  const HeatmapArtifact direct = export_heatmap(c.pairs[3], ckpt.model, 2, 2, fresh("flow_direct"));
  CHECK(from_cli.patch_weights == direct.patch_weights);
  CHECK(from_cli.token_weights == direct.token_weights);
  CHECK(slurp(sc / "pair_0003_patches.pgm") == slurp(direct.image_path));
  CHECK(rap_run({"score", "--checkpoint", final_ckpt.string(), "--corpus", corpus.string(), "--pair", "40",
                 "--out", fresh("flow_score_bad").string()})
            .code == cli::kExitFault);

  // replaying the training manifest reproduces the final checkpoint exactly
  const fs::path again = fresh("flow_replay");
  REQUIRE(rap_run({"replay", (run / "manifest.json").string(), "--out", again.string()}).code == 0);
  CHECK(slurp(again / "checkpoints" / "final.rapckpt") == slurp(final_ckpt));
  CHECK(slurp(again / "train_log.jsonl") == slurp(run / "train_log.jsonl"));
}

TEST_CASE("ablate writes one table per request") {
  const fs::path corpus = tiny_corpus("ablate_data");
  const fs::path dir = fresh("ablate");
  const Outcome o = rap_run(cat({"ablate", "--corpus", corpus.string(), "--epochs", "1", "--seeds", "0",
                                 "--tables", "lambda", "--out", dir.string()},
                                kTinyModel));
  REQUIRE(o.code == 0);
  CHECK(fs::exists(dir / "ablation_lambda.tsv"));
  CHECK_FALSE(fs::exists(dir / "ablation_racl.tsv"));
  std::istringstream in(slurp(dir / "ablation_lambda.tsv"));
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 5);
  CHECK(lines[1].rfind("0.5\t", 0) == 0);
  CHECK(lines[4].rfind("4\t", 0) == 0);
  CHECK(rap_run({"ablate", "--corpus", corpus.string(), "--tables", "nope", "--out", fresh("ablate_bad").string()})
            .code == cli::kExitUsage);
}

}  // TEST_SUITE
