#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dhg/dynamic_weight.hpp"
#include "dhg/gradcheck.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dhg;

namespace {

SkeletonSequence random_sequence(std::mt19937_64& rng, std::size_t frames, std::size_t joints) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  SkeletonSequence seq{Tensor<float>({1, frames, joints, 3})};
  for (float& v : seq.coords.data()) v = g(rng);
  return seq;
}

DisplacementField random_dis(std::mt19937_64& rng, std::size_t frames, std::size_t nodes) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  DisplacementField d{Tensor<double>({frames, nodes})};
  for (double& v : d.dis.data()) v = u(rng);
  return d;
}

}  // namespace

TEST_CASE("displacement examples") {
  SkeletonSequence still{Tensor<float>({1, 4, 3, 3}, 0.25f)};
  const DisplacementField zero = displacement(still, 0);
  for (double v : zero.dis.data()) CHECK(v == 0.0);

  SkeletonSequence step{Tensor<float>({1, 2, 2, 3})};
  step.coords(0, 1, 1, 0) = 3.0f;
  step.coords(0, 1, 1, 1) = 4.0f;
  DisplacementField d = displacement(step, 0);
  CHECK(d.dis == Tensor<double>({2, 2}, {0, 0, 0, 5}));
  CHECK_THROWS_AS(displacement(step, 1), Error);
}

TEST_CASE("displacement matches a per-element recomputation and both layouts agree") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SkeletonSequence seq = random_sequence(rng, 2 + trial, 25);
    DisplacementField d = displacement(seq, 0);
    for (std::size_t i = 0; i < 25; ++i) CHECK(d.dis(0, i) == 0.0);
    for (std::size_t t = 1; t < seq.frames(); ++t)
      for (std::size_t i = 0; i < 25; ++i) {
        const double dx = double(seq.coords(0, t, i, 0)) - seq.coords(0, t - 1, i, 0);
        const double dy = double(seq.coords(0, t, i, 1)) - seq.coords(0, t - 1, i, 1);
        const double dz = double(seq.coords(0, t, i, 2)) - seq.coords(0, t - 1, i, 2);
        CHECK(std::abs(d.dis(t, i) - std::sqrt(dx * dx + dy * dy + dz * dz)) < 1e-14);
      }
    Tensor<float> ctn({3, seq.frames(), 25});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < seq.frames(); ++t)
        for (std::size_t i = 0; i < 25; ++i) ctn(c, t, i) = seq.coords(0, t, i, c);
    CHECK(displacement(ctn.ptr(), 3, seq.frames(), 25).dis == d.dis);
  }
}

TEST_CASE("displacement is translation invariant and scales linearly") {
  std::mt19937_64 rng(12);
  SkeletonSequence seq = random_sequence(rng, 10, 25);
  DisplacementField base = displacement(seq, 0);
  SkeletonSequence moved = seq, scaled = seq;
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t i = 0; i < 25; ++i) {
      moved.coords(0, t, i, 0) += 0.5f;
      moved.coords(0, t, i, 2) -= 0.25f;
      for (std::size_t c = 0; c < 3; ++c) scaled.coords(0, t, i, c) *= 2.0f;
    }
  CHECK(max_abs_diff(displacement(moved, 0).dis, base.dis) < 1e-5);
  DisplacementField d2 = displacement(scaled, 0);
  for (std::size_t k = 0; k < base.dis.size(); ++k) CHECK(d2.dis[k] == 2.0 * base.dis[k]);
}

TEST_CASE("joint_weights examples") {
  Hypergraph pair = Hypergraph::make(2, {{0, 1}});
  DisplacementField d{Tensor<double>({2, 2}, {0, 0, 3, 1})};
  DynamicWeightField wf = joint_weights(d, pair);
  CHECK(wf.w_all(1, 0, 0) == 0.75);
  CHECK(wf.w_all(1, 1, 0) == 0.25);
  CHECK(wf.w_all(0, 0, 0) == 0.5);
  CHECK(wf.w_all(0, 1, 0) == 0.5);

  Hypergraph four = Hypergraph::make(5, {{0, 1, 2, 3}, {4}});
  DisplacementField equal{Tensor<double>({1, 5}, 0.7)};
  DynamicWeightField w4 = joint_weights(equal, four);
  for (std::size_t v = 0; v < 4; ++v) CHECK(w4.w_all(0, v, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w4.w_all(0, 4, 0) == 0.0);
  CHECK(w4.w_all(0, 4, 1) == 1.0);

  DynamicWeightField soft = joint_weights(d, pair, WeightMode::kSoftmax);
  CHECK(soft.w_all(1, 0, 0) == doctest::Approx(std::exp(3.0) / (std::exp(3.0) + std::exp(1.0))));
  CHECK(soft.w_all(0, 0, 0) == 0.5);

  CHECK_THROWS_AS(joint_weights(d, four), Error);
}

TEST_CASE("joint_weights support, normalization and scale invariance") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> cd(1e-3, 1e3);
  std::bernoulli_distribution still(0.2);
  for (int trial = 0; trial < 100; ++trial) {
    Hypergraph hg = oracle::random_hypergraph(rng);
    DisplacementField d = random_dis(rng, 6, hg.num_nodes);
    for (double& v : d.dis.data())
      if (still(rng)) v = 0.0;
    for (std::size_t i = 0; i < hg.num_nodes; ++i) d.dis(0, i) = 0.0;
    DynamicWeightField wf = joint_weights(d, hg);
    IncidenceMatrix h = incidence(hg);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t e = 0; e < hg.num_edges(); ++e) {
        double s = 0;
        for (std::size_t v = 0; v < hg.num_nodes; ++v) {
          if (h.h(v, e) == 0.0) CHECK(wf.w_all(t, v, e) == 0.0);
          s += wf.w_all(t, v, e);
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    for (std::size_t e = 0; e < hg.num_edges(); ++e)
      for (std::size_t v : hg.edges[e]) CHECK(wf.w_all(0, v, e) == 1.0 / double(hg.edges[e].size()));

    DisplacementField scaled = d;
    const double c = cd(rng);
    for (double& v : scaled.dis.data()) v *= c;
    CHECK(max_abs_diff(joint_weights(scaled, hg).w_all, wf.w_all) < 1e-12);
  }
}

TEST_CASE("imp_operator examples") {
  Hypergraph hg = Hypergraph::make(3, {{0, 1}});
  DisplacementField still{Tensor<double>({1, 3})};
  Tensor<double> imp = imp_operator(joint_weights(still, hg), incidence(hg), 0);
  CHECK(imp == Tensor<double>({3, 1}, {0.5, 0.5, 0.0}));
  CHECK_THROWS_AS(imp_operator(joint_weights(still, hg), incidence(hg), 1), Error);
  CHECK_THROWS_AS(imp_operator(joint_weights(still, hg), incidence(Hypergraph::make(3, {{0, 1}, {2}})), 0), Error);
}

TEST_CASE("Imp column sums, Gram oracle and PSD") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    Hypergraph hg = oracle::random_hypergraph(rng);
    DisplacementField d = random_dis(rng, 3, hg.num_nodes);
    DynamicWeightField wf = joint_weights(d, hg);
    IncidenceMatrix h = incidence(hg);
    Tensor<double> imp = imp_operator(wf, h, 2);
    for (std::size_t e = 0; e < hg.num_edges(); ++e) {
      double s = 0;
      for (std::size_t v = 0; v < hg.num_nodes; ++v) {
        CHECK((imp(v, e) != 0.0) == (h.h(v, e) != 0.0));
        s += imp(v, e);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    Tensor<double> g = imp_gram(imp);
    oracle::Matrix m = oracle::to_matrix(imp);
    CHECK(oracle::max_diff(oracle::multiply(m, oracle::transpose(m)), g) < 1e-12);
    for (double ev : oracle::symmetric_eigenvalues(oracle::to_matrix(g))) CHECK(ev >= -1e-12);
  }
}

TEST_CASE("normalized Gram") {
  Tensor<double> g({3, 3}, {2, 1, 0, 1, 2, 0, 0, 0, 0});
  Tensor<double> n = normalize_gram(g);
  CHECK(n(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(n(0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(n(2, 2) == 0.0);
}

TEST_CASE("weighted_hconv_forward") {
  Tape<double> tape;
  std::mt19937_64 rng(15);
  // Node 0 alone in an edge with weight 1 receives exactly its own features.
  Tensor<double> imp({3, 2}, {1, 0, 0, 0.5, 0, 0.5});
  Tensor<double> x = dhg::testing::random_tensor({3, 4}, rng);
  auto y = weighted_hconv_forward(tape.constant(x), tape.constant(Tensor<double>::identity(4)), imp);
  for (std::size_t c = 0; c < 4; ++c) CHECK(y.value()(0, c) == x(0, c));

  Hypergraph hg = oracle::random_hypergraph(rng, 10, 6);
  Tensor<double> wimp = imp_operator(joint_weights(random_dis(rng, 2, hg.num_nodes), hg), incidence(hg), 1);
  auto px = dhg::testing::random_param("x", {hg.num_nodes, 3}, rng);
  auto theta = dhg::testing::random_param("theta", {3, 5}, rng);
  auto res = gradcheck(
      [&](Tape<double>& t) { return ops::sum(ops::relu(weighted_hconv_forward(t.param(px), t.param(theta), wimp))); },
      {&px, &theta});
  CHECK(worst(res) < 1e-5);
  CHECK_THROWS_AS(weighted_hconv_forward(tape.constant(Tensor<double>({4, 2})), tape.constant(Tensor<double>({2, 2})), imp),
                  Error);
}

TEST_CASE("frame_gram_operators picks strided frames") {
  std::mt19937_64 rng(16);
  Hypergraph hg = oracle::random_hypergraph(rng, 8, 4);
  DynamicWeightField wf = joint_weights(random_dis(rng, 8, hg.num_nodes), hg);
  IncidenceMatrix h = incidence(hg);
  Tensor<double> ops = frame_gram_operators(wf, h, 4, 2, false);
  const std::size_t n = hg.num_nodes;
  for (std::size_t t = 0; t < 4; ++t) {
    Tensor<double> g = imp_gram(imp_operator(wf, h, 2 * t));
    for (std::size_t k = 0; k < n * n; ++k) CHECK(ops[t * n * n + k] == g[k]);
  }
  Tensor<double> norm = frame_gram_operators(wf, h, 1, 1, true);
  CHECK(max_abs_diff(norm.reshaped({n, n}), normalize_gram(imp_gram(imp_operator(wf, h, 0)))) == 0.0);
  CHECK_THROWS_AS(frame_gram_operators(wf, h, 5, 2, false), Error);
}
