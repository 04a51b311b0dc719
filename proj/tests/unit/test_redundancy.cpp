#include <doctest.h>

#include <cmath>

#include "rap/error.hpp"
#include "rap/ops.hpp"
#include "rap/redundancy.hpp"
#include "support.hpp"

using namespace rap;

TEST_SUITE("redundancy") {

TEST_CASE("similarity of unit vectors") {
  const std::vector<double> u = {0.6, 0.8}, v = {-0.8, 0.6}, w = {-0.6, -0.8};
  CHECK(similarity(u, u) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(similarity(u, v) == doctest::Approx(0.0));
  CHECK(similarity(u, w) == doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<double> big = {1.0, 1.0};
  CHECK_THROWS_AS(similarity(u, big), ContractViolation);
  const std::vector<double> three = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(similarity(u, three), DimensionError);
}

TEST_CASE("dissim_matrix extremes and per-entry oracle") {
  const Tensor p = Tensor::matrix({{0.6, 0.8}, {1.0, 0.0}});
  const Tensor t = Tensor::matrix({{0.6, 0.8}, {-1.0, 0.0}});
  const Tensor m = dissim_matrix(p, t);
  CHECK(m.at(0, 0) == doctest::Approx(0.0));
  CHECK(m.at(1, 1) == doctest::Approx(2.0));

  Rng rng(31);
  const Tensor pr = test::random_unit_rows(rng, 3, 5);
  const Tensor tr = test::random_unit_rows(rng, 2, 5);
  const Tensor mr = dissim_matrix(pr, tr);
  const auto ref = test::ref_dissim(test::to_mat(pr), test::to_mat(tr));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(std::abs(mr.at(n, l) - ref[n][l]) < 1e-12);
      CHECK(mr.at(n, l) >= -1e-9);
      CHECK(mr.at(n, l) <= 2.0 + 1e-9);
    }

  CHECK_THROWS_AS(dissim_matrix(pr, test::random_unit_rows(rng, 2, 4)), DimensionError);
}

TEST_CASE("redundancy_scores row and column minima") {
  const RedundancyWeights r = redundancy_scores(Tensor::matrix({{0.3, 0.8, 0.6}, {0.9, 0.2, 0.7}}));
  CHECK(r.vr.numel() == 2);
  CHECK(r.vr[0] == 0.3);
  CHECK(r.vr[1] == 0.2);
  REQUIRE(r.tr.numel() == 3);
  CHECK(r.tr[0] == 0.3);
  CHECK(r.tr[1] == 0.2);
  CHECK(r.tr[2] == 0.6);

  const RedundancyWeights one = redundancy_scores(Tensor::matrix({{0.42}}));
  CHECK(one.vr[0] == 0.42);
  CHECK(one.tr[0] == 0.42);

  const RedundancyWeights grounded = redundancy_scores(Tensor::matrix({{0.5, 0.0}, {1.0, 1.5}}));
  CHECK(grounded.vr[0] == 0.0);

  CHECK_THROWS_AS(redundancy_scores(Tensor(Shape{0, 3})), DimensionError);
}

TEST_CASE("transposing M swaps vr and tr") {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(8), l = 1 + rng.uniform_index(8);
    const Tensor m = dissim_matrix(test::random_unit_rows(rng, n, 4), test::random_unit_rows(rng, l, 4));
    const RedundancyWeights a = redundancy_scores(m);
    const RedundancyWeights b = redundancy_scores(transpose(m));
    for (std::size_t i = 0; i < n; ++i) CHECK(a.vr[i] == b.tr[i]);
    for (std::size_t i = 0; i < l; ++i) CHECK(a.tr[i] == b.vr[i]);
  }
}

TEST_CASE("adding a token column never raises visual redundancy") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(8), l = 1 + rng.uniform_index(7);
    const Tensor patches = test::random_unit_rows(rng, n, 5);
    const Tensor tokens = test::random_unit_rows(rng, l, 5);
    const Tensor extra = test::random_unit_rows(rng, 1, 5);
    const Tensor parts[] = {tokens, extra};
    const Tensor before = redundancy_scores(dissim_matrix(patches, tokens)).vr;
    const Tensor after = redundancy_scores(dissim_matrix(patches, concat_rows(parts))).vr;
    for (std::size_t i = 0; i < n; ++i) CHECK(after[i] <= before[i]);
  }
}

TEST_CASE("positive rescaling before normalisation leaves M unchanged") {
  Rng rng(42);
  const Tensor raw_p = test::random_matrix(rng, 4, 6);
  const Tensor raw_t = test::random_matrix(rng, 3, 6);
  const Tensor m = dissim_matrix(l2_normalize_rows(raw_p), l2_normalize_rows(raw_t));
  std::vector<double> scaled(raw_p.values().begin(), raw_p.values().end());
  for (std::size_t c = 0; c < 6; ++c) scaled[6 + c] *= 37.5;  // row 1 only
  const Tensor m2 = dissim_matrix(l2_normalize_rows(Tensor::matrix(4, 6, scaled)),
                                  l2_normalize_rows(scale(raw_t, 0.01)));
  for (std::size_t i = 0; i < m.numel(); ++i) CHECK(std::abs(m[i] - m2[i]) < 1e-9);
}

TEST_CASE("patch weight equals the clamped maximum similarity") {
  Rng rng(43);
  const Tensor p = test::random_unit_rows(rng, 5, 4);
  const Tensor t = test::random_unit_rows(rng, 6, 4);
  const RedundancyWeights w = compute_redundancy(p, t);
  const auto pm = test::to_mat(p), tm = test::to_mat(t);
  bool all_zero = true;
  std::vector<double> want;
  for (const auto& row : pm) {
    double best = -2.0;
    for (const auto& tok : tm) best = std::max(best, test::ref_dot(row, tok));
    want.push_back(std::clamp(best, 0.0, 1.0));
    all_zero = all_zero && want.back() == 0.0;
  }
  REQUIRE_FALSE(all_zero);
  for (std::size_t n = 0; n < 5; ++n) CHECK(std::abs(w.w_patch[n] - want[n]) < 1e-12);
}

TEST_CASE("weights_from_redundancy examples") {
  CHECK(weights_from_redundancy(Tensor::vector({0.0}))[0] == 1.0);
  const Tensor w = weights_from_redundancy(Tensor::vector({0.3, 0.2}));
  CHECK(w[0] == 1.0 - 0.3);
  CHECK(w[1] == 1.0 - 0.2);

  WeightOptions no_floor;
  no_floor.floor = 0.0;
  CHECK(weights_from_redundancy(Tensor::vector({1.5}), no_floor)[0] == 0.0);
  // all-zero vector gets the floor, mixed vector does not
  const Tensor floored = weights_from_redundancy(Tensor::vector({1.5, 1.2}));
  CHECK(floored[0] == 1e-6);
  CHECK(floored[1] == 1e-6);
  const Tensor mixed = weights_from_redundancy(Tensor::vector({1.5, 0.5}));
  CHECK(mixed[0] == 0.0);
  CHECK(mixed[1] == 0.5);

  WeightOptions raw;
  raw.clamp = false;
  CHECK(weights_from_redundancy(Tensor::vector({1.5, 0.5}), raw)[0] == doctest::Approx(-0.5));
}

TEST_CASE("weights stay in [0, 1] for every admissible score") {
  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(1 + rng.uniform_index(8));
    for (double& x : r) x = 2.0 * rng.uniform();
    const Tensor w = weights_from_redundancy(Tensor::vector(r));
    const auto ref = test::ref_weights(r);
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(w[i] >= 0.0);
      CHECK(w[i] <= 1.0);
      CHECK(w[i] == ref[i]);
    }
  }
}

TEST_CASE("out-of-range redundancy is a contract violation") {
  CHECK_THROWS_AS(weights_from_redundancy(Tensor::vector({-0.01})), ContractViolation);
  CHECK_THROWS_AS(weights_from_redundancy(Tensor::vector({2.01})), ContractViolation);
  CHECK_NOTHROW(weights_from_redundancy(Tensor::vector({2.0 + 5e-7})));
}

TEST_CASE("detached weights record nothing, attached weights carry gradient") {
  Rng rng(45);
  Tape tape;
  const Tensor p = tape.variable(test::random_unit_rows(rng, 3, 4));
  const Tensor t = tape.variable(test::random_unit_rows(rng, 2, 4));
  const std::size_t ops = tape.op_count();
  const RedundancyWeights detached = compute_redundancy(p, t);
  CHECK(tape.op_count() == ops);
  CHECK_FALSE(detached.w_patch.on_tape());

  WeightOptions live;
  live.detach = false;
  const RedundancyWeights attached = compute_redundancy(p, t, live);
  CHECK(attached.w_patch.on_tape());

  const Tensor raw_p = test::random_matrix(rng, 3, 4);
  const Tensor raw_t = test::random_matrix(rng, 4, 4);
  const double err = test::gradient_error(
      [&](const std::vector<Tensor>& in) {
        const RedundancyWeights w =
            compute_redundancy(l2_normalize_rows(in[0]), l2_normalize_rows(in[1]), live);
        return add(sum(w.w_patch), sum(w.w_token));
      },
      {raw_p, raw_t});
  CHECK(err < 1e-5);
}

TEST_CASE("batch weights stack per pair") {
  Rng rng(46);
  const Tensor v = test::random_unit_rows(rng, 2 * 3, 4);
  const Tensor t = test::random_unit_rows(rng, 2 * 5, 4);
  const BatchWeights bw = compute_batch_weights(v, t, 2);
  REQUIRE(bw.w_patch.shape() == Shape{2, 3});
  REQUIRE(bw.w_token.shape() == Shape{2, 5});
  const auto vb = test::blocks(v, 2), tb = test::blocks(t, 2);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto m = test::ref_dissim(vb[b], tb[b]);
    const auto wp = test::ref_weights(test::ref_row_min(m));
    const auto wt = test::ref_weights(test::ref_col_min(m));
    for (std::size_t n = 0; n < 3; ++n) CHECK(std::abs(bw.w_patch.at(b, n) - wp[n]) < 1e-12);
    for (std::size_t l = 0; l < 5; ++l) CHECK(std::abs(bw.w_token.at(b, l) - wt[l]) < 1e-12);
  }
}

}  // TEST_SUITE
