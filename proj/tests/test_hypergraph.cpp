#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "dhg/gradcheck.hpp"
#include "dhg/hypergraph.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

using namespace dhg;

TEST_CASE("incidence and degrees by hand") {
  Hypergraph hg = Hypergraph::make(3, {{0, 1}, {1, 2}});
  IncidenceMatrix h = incidence(hg);
  CHECK(h.h == Tensor<double>({3, 2}, {1, 0, 1, 1, 0, 1}));
  Degrees d = degrees(hg);
  CHECK(d.node == std::vector<double>{1, 2, 1});
  CHECK(d.edge == std::vector<double>{2, 2});

  Hypergraph heavy = Hypergraph::make(3, {{0, 1}, {1, 2}}, {2.0, 1.0});
  Degrees dh = degrees(heavy);
  CHECK(dh.node == std::vector<double>{2, 3, 1});
  CHECK(dh.edge == d.edge);

  Hypergraph all = Hypergraph::make(4, {{0, 1, 2, 3}});
  for (std::size_t v = 0; v < 4; ++v) CHECK(incidence(all).h(v, 0) == 1.0);
}

TEST_CASE("incidence column sums and degree double counting on random hypergraphs") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Hypergraph hg = oracle::random_hypergraph(rng);
    IncidenceMatrix h = incidence(hg);
    Degrees d = degrees(hg);
    double lhs = 0, rhs = 0;
    for (std::size_t e = 0; e < hg.num_edges(); ++e) {
      double col = 0;
      for (std::size_t v = 0; v < hg.num_nodes; ++v) col += h.h(v, e);
      CHECK(col == static_cast<double>(hg.edges[e].size()));
      rhs += hg.weights[e] * d.edge[e];
    }
    for (double x : d.node) lhs += x;
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("hconv_operator small cases") {
  CHECK(hconv_operator(Hypergraph::make(1, {{0}})) == Tensor<double>({1, 1}, {1.0}));
  CHECK(hconv_operator(Hypergraph::make(2, {{0, 1}})) == Tensor<double>({2, 2}, {0.5, 0.5, 0.5, 0.5}));
  try {
    hconv_operator(Hypergraph::make(3, {{0, 1}}));
    FAIL("expected IsolatedNode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIsolatedNode);
  }
}

TEST_CASE("hconv_operator matches the dense product chain") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Hypergraph hg = oracle::random_hypergraph(rng);
    CHECK(oracle::max_diff(oracle::hypergraph_conv(hg.num_nodes, hg.edges, hg.weights), hconv_operator(hg)) < 1e-12);
  }
}

TEST_CASE("hconv_operator is symmetric PSD, weight-scale and permutation consistent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> cd(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    Hypergraph hg = oracle::random_hypergraph(rng);
    Tensor<double> op = hconv_operator(hg);
    const std::size_t n = hg.num_nodes;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(op(i, j) - op(j, i)) < 1e-12);
    for (double ev : oracle::symmetric_eigenvalues(oracle::to_matrix(op))) CHECK(ev >= -1e-10);

    Hypergraph scaled = hg;
    const double c = cd(rng);
    for (double& w : scaled.weights) w *= c;
    CHECK(max_abs_diff(hconv_operator(scaled), op) < 1e-12);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<double> pop = hconv_operator(permute_nodes(hg, perm));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(pop(perm[i], perm[j]) - op(i, j)) < 1e-12);
  }
}

TEST_CASE("2-uniform reduction: H Hᵀ equals A + diag(deg) exactly") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    GraphTopology g = oracle::random_graph(rng, 2 + trial % 24, 0.25);
    bool any = false;
    for (double v : g.adjacency.data()) any = any || v != 0.0;
    if (!any) continue;
    Hypergraph hg = two_uniform_hypergraph(g);
    oracle::Matrix h = oracle::to_matrix(incidence(hg).h);
    oracle::Matrix hht = oracle::multiply(h, oracle::transpose(h));
    const std::size_t n = hg.num_nodes;
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 0;
      for (std::size_t j = 0; j < n; ++j) deg += g.adjacency(i, j);
      for (std::size_t j = 0; j < n; ++j) CHECK(hht[i][j] == g.adjacency(i, j) + (i == j ? deg : 0.0));
    }
  }
}

TEST_CASE("graph_operator") {
  CHECK(graph_operator(GraphTopology{Tensor<double>({2, 2})}) == Tensor<double>::identity(2));
  CHECK(max_abs_diff(graph_operator(GraphTopology::from_edges(2, {{0, 1}})),
                     Tensor<double>({2, 2}, {0.5, 0.5, 0.5, 0.5})) < 1e-15);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    GraphTopology g = oracle::random_graph(rng, 1 + trial % 25, 0.3);
    Tensor<double> op = graph_operator(g);
    CHECK(oracle::max_diff(oracle::graph_conv(oracle::to_matrix(g.adjacency)), op) < 1e-12);
    for (std::size_t i = 0; i < op.shape()[0]; ++i)
      for (std::size_t j = 0; j < op.shape()[0]; ++j) CHECK(op(i, j) == op(j, i));
  }
}

TEST_CASE("hconv_forward") {
  Tape<double> tape;
  std::mt19937_64 rng(6);
  Tensor<double> x = dhg::testing::random_tensor({1, 4}, rng);
  auto out = hconv_forward(tape.constant(x), tape.constant(Tensor<double>::identity(4)),
                           hconv_operator(Hypergraph::make(1, {{0}})));
  CHECK(out.value() == x);

  // Regular 2-node-edge hypergraph: equal row sums, so constant features stay constant.
  Hypergraph ring = Hypergraph::make(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  auto constant = hconv_forward(tape.constant(Tensor<double>({4, 3}, 0.7)), tape.constant(Tensor<double>::identity(3)),
                                hconv_operator(ring));
  for (double v : constant.value().data()) CHECK(std::abs(v - constant.value()[0]) < 1e-15);

  Hypergraph hg = oracle::random_hypergraph(rng, 9, 5);
  Tensor<double> op = hconv_operator(hg);
  auto px = dhg::testing::random_param("x", {hg.num_nodes, 3}, rng);
  auto theta = dhg::testing::random_param("theta", {3, 4}, rng);
  auto res = gradcheck([&](Tape<double>& t) { return ops::sum(ops::relu(hconv_forward(t.param(px), t.param(theta), op))); },
                       {&px, &theta});
  CHECK(worst(res) < 1e-5);

  CHECK_THROWS_AS(hconv_forward(tape.constant(Tensor<double>({3, 2})), tape.constant(Tensor<double>({2, 2})), op), Error);
}

TEST_CASE("static skeleton hypergraph config") {
  Hypergraph hg = static_skeleton_hypergraph("data/ntu25_hypergraph.txt");
  CHECK(hg.num_nodes == 25);
  CHECK(hg.num_edges() == 6);
  Degrees d = degrees(hg);
  for (double x : d.node) CHECK(x > 0.0);
  CHECK_NOTHROW(hconv_operator(hg));

  // Round trip through the text form.
  Hypergraph back = parse_hypergraph_config(format_hypergraph_config(hg), 25);
  CHECK(back.edges == hg.edges);

  // Dropping joint 3 from every hyperedge isolates it.
  TempDir dir;
  std::ofstream(dir / "hg.txt") << "# no head\n0,1,2,20\n4,5,6,7,21,22\n8,9,10,11,23,24\n12,13,14,15\n16,17,18,19\n7,11,15,19\n";
  Hypergraph broken = static_skeleton_hypergraph(dir / "hg.txt");
  try {
    hconv_operator(broken);
    FAIL("expected IsolatedNode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIsolatedNode);
  }

  CHECK_THROWS_AS(parse_hypergraph_config("0,1\n1,x\n", 3), Error);
  CHECK_THROWS_AS(parse_hypergraph_config("0,1\n1,7\n", 3), Error);
  CHECK_THROWS_AS(static_skeleton_hypergraph(dir / "nope.txt"), Error);
}
