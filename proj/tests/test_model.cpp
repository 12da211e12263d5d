#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <random>

#include "dhg/gradcheck.hpp"
#include "dhg/model.hpp"
#include "dhg/ntu25.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

using namespace dhg;

namespace {

SkeletonSequence sample(std::size_t label, std::size_t index, std::size_t frames = 32) {
  SyntheticSpec spec;
  spec.frames = frames;
  return synthesize_sample(spec, label, index, "train");
}

SkeletonSequence two_person_sample(std::mt19937_64& rng, std::size_t frames) {
  SkeletonSequence seq = sample(1, 0, frames);
  std::normal_distribution<float> g(0.0f, 0.3f);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < 25; ++j)
      for (std::size_t c = 0; c < 3; ++c) seq.coords(1, t, j, c) = seq.coords(0, t, j, c) + g(rng);
  return seq;
}

template <typename T>
Tensor<T> logits(DhstNetwork<T>& net, const std::vector<const SkeletonSequence*>& seqs) {
  Tape<T> tape(Tape<T>::Mode::kNoGrad);
  return net.forward(tape, make_batch<T>(seqs)).value();
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.channels = {8, 8, 16};
  cfg.stride_blocks = {2};
  return cfg;
}

}  // namespace

TEST_CASE("config text round trip and validation") {
  ModelConfig cfg;
  cfg.multi_dilation = true;
  cfg.fusion = BranchFusion::kConcat;
  cfg.topology.k_n = 5;
  cfg.topology.space = TopologySpace::kRaw;
  cfg.weight_mode = WeightMode::kSoftmax;
  ModelConfig back = ModelConfig::from_text(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.hypergraph.edges == cfg.hypergraph.edges);
  CHECK(back.digest() == cfg.digest());
  CHECK(ModelConfig().digest() != cfg.digest());

  CHECK(ModelConfig().hypergraph.edges == static_skeleton_hypergraph("data/ntu25_hypergraph.txt").edges);
  CHECK(ntu25_tree().parent == KinematicTree::load("data/ntu25_tree.txt").parent);

  CHECK_THROWS_AS(ModelConfig::from_text("bogus = 1\n"), Error);
  CHECK_THROWS_AS(ModelConfig::from_text("k_n = three\n"), Error);
  try {
    ModelConfig::from_text("static_branch = false\nweight_branch = false\ntopology_branch = false\n").validate();
    FAIL("expected NoBranchEnabled");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoBranchEnabled);
  }
  CHECK(ablation_toggles("no/dynamic") == BranchToggles{true, false, false});
  CHECK(ablation_toggles("no-static") == BranchToggles{false, true, true});
  CHECK_THROWS_AS(ablation_toggles("no-everything"), Error);
}

TEST_CASE("default plan") {
  const auto blocks = ModelConfig().blocks();
  REQUIRE(blocks.size() == 10);
  const std::size_t channels[] = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(blocks[i].out_channels == channels[i]);
    CHECK(blocks[i].in_channels == (i ? channels[i - 1] : 3));
    CHECK(blocks[i].temporal_stride == (i == 4 || i == 7 ? 2 : 1));
    CHECK(blocks[i].temporal_dilation == 1);
  }
  ModelConfig md;
  md.multi_dilation = true;
  const auto dil = md.blocks();
  for (std::size_t i = 0; i < 10; ++i) CHECK(dil[i].temporal_dilation == (i >= 7 ? 2 : 1));
}

TEST_CASE("make_batch drops padding persons") {
  std::mt19937_64 rng(40);
  SkeletonSequence one = sample(0, 0), two = two_person_sample(rng, 32);
  ModelBatch<float> b = make_batch<float>({&one, &two});
  CHECK(b.x.shape() == Shape{3, 3, 32, 25});
  CHECK(b.persons == std::vector<std::size_t>{1, 2});
  CHECK(b.labels == std::vector<std::size_t>{0, 1});
  CHECK(b.x(2, 1, 5, 7) == two.coords(1, 5, 7, 1));
  SkeletonSequence empty{Tensor<float>({2, 32, 25, 3})};
  CHECK(make_batch<float>({&empty}).persons == std::vector<std::size_t>{1});
  SkeletonSequence short_seq = sample(0, 0, 16);
  CHECK_THROWS_AS(make_batch<float>({&one, &short_seq}), Error);
}

TEST_CASE("block shapes and branch errors") {
  std::mt19937_64 rng(41);
  DhstBlockConfig cfg;
  DhstBlock<float> block(cfg, "b", rng);
  Tape<float> tape(Tape<float>::Mode::kNoGrad);
  SkeletonSequence seq = sample(2, 3);
  ModelBatch<float> batch = make_batch<float>({&seq});
  DhstNetwork<float> net(ModelConfig(), 1);
  Tensor<float> static_op = hconv_operator(ntu25_hypergraph()).cast<float>();
  Tensor<float> wops = net.weight_operators(batch.x, 1);
  BlockContext<float> ctx;
  ctx.static_op = &static_op;
  ctx.weight_ops = &wops;
  ctx.raw_input = &batch.x;
  Var<float> y = block.forward(tape.constant(batch.x), ctx);
  CHECK(y.shape() == Shape{1, 64, 32, 25});

  DhstBlockConfig off = cfg;
  off.branches = {false, false, false};
  try {
    DhstBlock<float> bad(off, "bad", rng);
    FAIL("expected NoBranchEnabled");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoBranchEnabled);
  }
  DhstBlockConfig strided = cfg;
  strided.temporal_stride = 2;
  DhstBlock<float> down(strided, "down", rng);
  CHECK(down.forward(tape.constant(batch.x), ctx).shape() == Shape{1, 64, 16, 25});
  CHECK_THROWS_AS(block.forward(tape.constant(Tensor<float>({1, 4, 32, 25})), ctx), Error);
}

TEST_CASE("network shape chain") {
  DhstNetwork<float> net(ModelConfig(), 2);
  SkeletonSequence seq = sample(0, 1);
  std::vector<Shape> shapes;
  Tape<float> tape(Tape<float>::Mode::kNoGrad);
  ForwardOptions opts;
  opts.shapes = &shapes;
  Var<float> out = net.forward(tape, make_batch<float>({&seq}), opts);
  REQUIRE(shapes.size() == 11);
  CHECK(shapes[0] == Shape{1, 3, 32, 25});
  const std::size_t channels[] = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
  const std::size_t frames[] = {32, 32, 32, 32, 16, 16, 16, 8, 8, 8};
  for (std::size_t i = 0; i < 10; ++i) CHECK(shapes[i + 1] == Shape{1, channels[i], frames[i], 25});
  CHECK(out.shape() == Shape{1, 4});
}

TEST_CASE("T=64 two-person input gives finite logits") {
  std::mt19937_64 rng(42);
  DhstNetwork<float> net(ModelConfig(), 3);
  SkeletonSequence seq = two_person_sample(rng, 64);
  Tensor<float> out = logits(net, {&seq});
  CHECK(out.shape() == Shape{1, 4});
  CHECK(out.all_finite());
}

TEST_CASE("eval forward is deterministic and person-order invariant") {
  std::mt19937_64 rng(43);
  DhstNetwork<float> net(small_config(), 4);
  SkeletonSequence a = two_person_sample(rng, 16);
  SkeletonSequence swapped = a;
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t j = 0; j < 25; ++j)
      for (std::size_t c = 0; c < 3; ++c) std::swap(swapped.coords(0, t, j, c), swapped.coords(1, t, j, c));
  Tensor<float> first = logits(net, {&a});
  CHECK(logits(net, {&a}) == first);
  CHECK(logits(net, {&swapped}) == first);

  Tensor<float> pair = logits(net, {&a, &a});
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(pair(0, k) == pair(1, k));
    CHECK(pair(0, k) == first[k]);
  }
}

TEST_CASE("disabling any branch changes the logits") {
  DhstNetwork<float> full(small_config(), 5);
  std::map<std::string, Parameter<float>*> by_name;
  for (Parameter<float>* p : full.parameters()) by_name[p->name] = p;
  SkeletonSequence seq = sample(3, 2, 16);
  const Tensor<float> reference = logits(full, {&seq});
  for (const std::string& name : ablation_names()) {
    ModelConfig cfg = small_config();
    cfg.branches = ablation_toggles(name);
    DhstNetwork<float> ablated(cfg, 5);
    for (Parameter<float>* p : ablated.parameters()) {
      REQUIRE(by_name.count(p->name));
      p->value = by_name[p->name]->value;
    }
    const Tensor<float> out = logits(ablated, {&seq});
    CAPTURE(name);
    CHECK(out.all_finite());
    CHECK_FALSE(out == reference);
  }
}

TEST_CASE("static-only block on the 2-uniform skeleton hypergraph uses the reduction operator") {
  std::mt19937_64 rng(44);
  DhstBlockConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 5;
  cfg.branches = {true, false, false};
  cfg.batchnorm = false;
  cfg.residual = false;
  DhstBlock<double> block(cfg, "b", rng);
  const Hypergraph two = two_uniform_hypergraph(ntu25_skeleton_graph());
  const Tensor<double> op = hconv_operator(two);

  // For unit-weight 2-uniform hypergraphs the operator is D^{-1/2}(A + D)D^{-1/2} / 2.
  const oracle::Matrix adj = oracle::to_matrix(ntu25_skeleton_graph().adjacency);
  oracle::Matrix expect = oracle::zeros(25, 25);
  std::vector<double> deg(25, 0.0);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = 0; j < 25; ++j) deg[i] += adj[i][j];
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = 0; j < 25; ++j)
      expect[i][j] = (adj[i][j] + (i == j ? deg[i] : 0.0)) / (2.0 * std::sqrt(deg[i] * deg[j]));
  CHECK(oracle::max_diff(expect, op) < 1e-12);

  Tape<double> tape;
  Tensor<double> x = dhg::testing::random_tensor({2, 3, 4, 25}, rng);
  BlockContext<double> ctx;
  ctx.static_op = &op;
  Var<double> s = block.spatial(tape.constant(x), ctx);
  const Tensor<double>& theta = block.parameters()[0]->value;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t o = 0; o < 5; ++o)
        for (std::size_t i = 0; i < 25; ++i) {
          double v = 0;
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t j = 0; j < 25; ++j) v += expect[i][j] * x(r, c, t, j) * theta(c, o);
          CHECK(std::abs(s.value()(r, o, t, i) - v) < 1e-12);
        }
}

TEST_CASE("full block gradient check in double precision") {
  std::mt19937_64 rng(45);
  DhstBlockConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 8;
  cfg.batchnorm = false;
  cfg.embed_dim = 4;
  for (std::size_t stride : {1, 2}) {
    cfg.temporal_stride = stride;
    DhstBlock<double> block(cfg, "g", rng);
    ModelConfig mc;
    DhstNetwork<double> helper(mc, 0);
    Tensor<double> x = dhg::testing::random_tensor({2, 3, 6, 25}, rng);
    Tensor<double> static_op = hconv_operator(mc.hypergraph);
    Tensor<double> wops = helper.weight_operators(x, 1);
    Tensor<double> probe = dhg::testing::random_tensor({2, 8, 6 / stride, 25}, rng);
    BlockContext<double> ctx;
    ctx.static_op = &static_op;
    ctx.weight_ops = &wops;
    ctx.raw_input = &x;
    auto loss = [&](Tape<double>& t) {
      return ops::sum(ops::mul(block.forward(t.constant(x), ctx), t.constant(probe)));
    };
    auto res = gradcheck(loss, block.parameters());
    CAPTURE(stride);
    for (const auto& r : res) {
      CAPTURE(r.name);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("topology trace and raw space") {
  ModelConfig cfg = small_config();
  cfg.topology.frame_stride = 2;
  DhstNetwork<float> net(cfg, 6);
  SkeletonSequence seq = sample(1, 1, 16);
  TopologyTrace trace;
  Tape<float> tape(Tape<float>::Mode::kNoGrad);
  ForwardOptions opts;
  opts.trace = &trace;
  net.forward(tape, make_batch<float>({&seq}), opts);
  REQUIRE(trace.size() == 3);
  CHECK(trace[0].size() == 1);
  CHECK(trace[0][0].size() == 16);
  CHECK(trace[2][0].size() == 8);
  for (const auto& frame : trace[0][0]) CHECK(frame.num_edges() == 29);
  CHECK(trace[0][0][0].edges == trace[0][0][1].edges);

  cfg.topology.space = TopologySpace::kRaw;
  DhstNetwork<float> raw(cfg, 6);
  TopologyTrace raw_trace;
  Tape<float> tape2(Tape<float>::Mode::kNoGrad);
  opts.trace = &raw_trace;
  raw.forward(tape2, make_batch<float>({&seq}), opts);
  // Raw-space topology at a block only depends on the input coordinates.
  Tensor<double> f({25, 3});
  for (std::size_t j = 0; j < 25; ++j)
    for (std::size_t c = 0; c < 3; ++c) f(j, c) = seq.coords(0, 4, j, c);
  CHECK(raw_trace[1][0][4].edges == dynamic_hypergraph(f, cfg.topology, derive_seed(cfg.topology.seed, 1, 4)).edges);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  DhstNetwork<float> net(small_config(), 7);
  // Perturb the running statistics so they are visibly carried along.
  for (auto& [name, t] : net.buffers()) t->fill(0.5f);
  save_checkpoint(net, dir / "m.dhgw");
  auto back = load_network<float>(dir / "m.dhgw");
  SkeletonSequence seq = sample(0, 4, 16);
  CHECK(logits(*back, {&seq}) == logits(net, {&seq}));
  for (auto& [name, t] : back->buffers()) CHECK(t->data()[0] == 0.5f);

  std::ifstream in(dir / "m.dhgw", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "DHGW");

  DhstNetwork<float> other(ModelConfig(), 7);
  try {
    load_checkpoint(other, dir / "m.dhgw");
    FAIL("expected CheckpointMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCheckpointMismatch);
  }
  std::ofstream(dir / "junk.dhgw") << "JUNKJUNK";
  CHECK_THROWS_AS(load_network<float>(dir / "junk.dhgw"), Error);
  CHECK_THROWS_AS(load_network<float>(dir / "missing.dhgw"), Error);
}

TEST_CASE("two-stream fusion") {
  Tensor<float> joint({2}, {2, 0}), bone({2}, {0, 1});
  TwoStreamScores s = fuse_two_stream(joint, bone);
  CHECK(s.fused == Tensor<float>({2}, {2, 1}));
  CHECK(s.predicted == 0);
  CHECK(fuse_two_stream(joint, Tensor<float>({2})).predicted == argmax(joint.data()));
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<float> j = dhg::testing::random_tensor<float>({7}, rng), b = dhg::testing::random_tensor<float>({7}, rng);
    TwoStreamScores base = fuse_two_stream(j, b);
    for (std::size_t k = 0; k < 7; ++k) CHECK(base.fused[k] == j[k] + b[k]);
    Tensor<float> shifted = j;
    for (float& v : shifted.data()) v += 0.5f;
    TwoStreamScores moved = fuse_two_stream(shifted, b);
    // Shifting one stream by a constant shifts every fused score alike.
    std::size_t best = 0;
    for (std::size_t k = 1; k < 7; ++k)
      if (moved.fused[k] > moved.fused[best]) best = k;
    CHECK(moved.predicted == best);
    CHECK(std::abs(double(moved.fused[moved.predicted]) - double(moved.fused[base.predicted])) < 1e-6);
  }
  CHECK_THROWS_AS(fuse_two_stream(joint, Tensor<float>({3})), Error);
  CHECK(argmax(Tensor<float>({3}, {1, 1, 0}).data()) == 0);
  CHECK(in_top_k(Tensor<float>({3}, {1, 1, 0}).data(), 1, 2));
  CHECK_FALSE(in_top_k(Tensor<float>({3}, {1, 1, 0}).data(), 1, 1));
  CHECK(in_top_k(Tensor<float>({3}, {0, 0, 0}).data(), 2, 3));
}
