#include "dhg/gradcheck_suite.hpp"

#include <random>

#include "dhg/dynamic_weight.hpp"
#include "dhg/model.hpp"
#include "dhg/ntu25.hpp"
#include "dhg/topology.hpp"

namespace dhg {

namespace {

// Uniform in [-1, 1] away from zero so ReLU and max kinks are not straddled
// by the finite-difference step.
Tensor<double> draw(Shape shape, std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data()) {
    double x;
    do x = 2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0;
    while (std::abs(x) < 1e-3);
    v = x;
  }
  return t;
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Parameter<double>& param(const std::string& name, Shape shape) {
    params_.emplace_back(name, draw(std::move(shape), rng_));
    return params_.back();
  }
  Tensor<double> tensor(Shape shape) { return draw(std::move(shape), rng_); }

  // Checks Σ probe ⊙ f(params) so every output element contributes.
  template <typename F>
  void check(const std::string& op, std::vector<Parameter<double>*> ps, F&& f) {
    Tensor<double> probe;
    {
      Tape<double> tape(Tape<double>::Mode::kNoGrad);
      probe = draw(f(tape).shape(), rng_);
    }
    auto loss = [&](Tape<double>& t) { return ops::sum(ops::mul(f(t), t.constant(probe))); };
    cases_.push_back({op, gradcheck(loss, ps)});
  }

  std::vector<GradCheckCase> take() { return std::move(cases_); }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::deque<Parameter<double>> params_;
  std::vector<GradCheckCase> cases_;
};

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, bool include_block) {
  Suite s(seed);
  using V = Var<double>;
  using Tp = Tape<double>;
  {
    auto& a = s.param("a", {4, 3});
    auto& b = s.param("b", {3, 5});
    s.check("matmul", {&a, &b}, [&](Tp& t) { return ops::matmul(t.param(a), t.param(b)); });
  }
  {
    auto& a = s.param("a", {3, 4});
    auto& b = s.param("b", {3, 4});
    s.check("add", {&a, &b}, [&](Tp& t) { return ops::add(t.param(a), t.param(b)); });
    s.check("sub", {&a, &b}, [&](Tp& t) { return ops::sub(t.param(a), t.param(b)); });
    s.check("mul", {&a, &b}, [&](Tp& t) { return ops::mul(t.param(a), t.param(b)); });
    s.check("scale", {&a}, [&](Tp& t) { return ops::scale(t.param(a), -1.7); });
    s.check("relu", {&a}, [&](Tp& t) { return ops::relu(t.param(a)); });
    s.check("sum", {&a}, [&](Tp& t) { return ops::sum(t.param(a)); });
    s.check("softmax", {&a}, [&](Tp& t) { return ops::softmax(t.param(a), 1); });
  }
  {
    auto& logits = s.param("logits", {5, 4});
    s.check("cross_entropy", {&logits},
            [&](Tp& t) { return ops::cross_entropy(t.param(logits), std::vector<std::size_t>{0, 3, 1, 1, 2}); });
  }
  {
    auto& x = s.param("x", {3, 4, 5, 6});
    auto& g = s.param("gamma", {4});
    auto& b = s.param("beta", {4});
    BatchNormState<double> st(4);
    s.check("batchnorm(train)", {&x, &g, &b},
            [&](Tp& t) { return ops::batchnorm(t.param(x), t.param(g), t.param(b), st, true, false); });
    for (double& v : st.running_var.data()) v = 0.5 + std::abs(v);
    s.check("batchnorm(eval)", {&x, &g, &b},
            [&](Tp& t) { return ops::batchnorm(t.param(x), t.param(g), t.param(b), st, false); });
    s.check("global_avg_pool", {&x}, [&](Tp& t) { return ops::global_avg_pool(t.param(x)); });
  }
  {
    auto& x = s.param("x", {2, 3, 7, 4});
    auto& w = s.param("w", {5, 3, 3, 1});
    for (auto [stride, dilation] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 2}, std::pair{2, 2}})
      s.check("conv_temporal(s=" + std::to_string(stride) + ",d=" + std::to_string(dilation) + ")", {&x, &w},
              [&](Tp& t) { return ops::conv_temporal(t.param(x), t.param(w), stride, dilation); });
    auto& theta = s.param("theta", {3, 6});
    s.check("channel_mix", {&x, &theta}, [&](Tp& t) { return ops::channel_mix(t.param(x), t.param(theta)); });
    s.check("frame_stride", {&x}, [&](Tp& t) { return ops::frame_stride(t.param(x), 2); });
    auto& bias = s.param("bias", {3});
    s.check("bias_add", {&x, &bias}, [&](Tp& t) { return ops::bias_add(t.param(x), t.param(bias)); });
    const Tensor<double> shared = s.tensor({4, 4}), frames = s.tensor({2, 7, 4, 4});
    s.check("node_aggregate(shared)", {&x}, [&](Tp& t) { return ops::node_aggregate(t.param(x), shared); });
    s.check("node_aggregate(per-frame)", {&x}, [&](Tp& t) { return ops::node_aggregate(t.param(x), frames); });
    auto& y = s.param("y", {2, 2, 7, 4});
    s.check("concat_channels", {&x, &y}, [&](Tp& t) { return ops::concat_channels(std::vector<V>{t.param(x), t.param(y)}); });
  }
  {
    auto& rows = s.param("rows", {5, 6});
    s.check("segment_max", {&rows}, [&](Tp& t) { return ops::segment_max(t.param(rows), {2, 1, 2}); });
  }
  const Hypergraph hg = ntu25_hypergraph();
  {
    auto& x = s.param("x", {25, 3});
    auto& theta = s.param("theta", {3, 4});
    const Tensor<double> op = hconv_operator(hg);
    s.check("hconv_forward", {&x, &theta}, [&](Tp& t) { return hconv_forward(t.param(x), t.param(theta), op); });

    DisplacementField dis{Tensor<double>({2, 25})};
    for (double& v : dis.dis.data()) v = double(s.rng()() >> 11) * 0x1.0p-53;
    const Tensor<double> imp = imp_operator(joint_weights(dis, hg), incidence(hg), 1);
    s.check("weighted_hconv_forward", {&x, &theta},
            [&](Tp& t) { return weighted_hconv_forward(t.param(x), t.param(theta), imp); });

    auto& w_map = s.param("w_map", {3, 6});
    s.check("embed_frame", {&x, &w_map}, [&](Tp& t) { return embed_frame(t.param(x), t.param(w_map)); });
  }
  if (include_block) {
    DhstBlockConfig cfg;
    cfg.in_channels = 3;
    cfg.out_channels = 8;
    cfg.embed_dim = 4;
    cfg.batchnorm = false;
    cfg.temporal_stride = 2;
    DhstBlock<double> block(cfg, "block", s.rng());
    ModelConfig mc;
    DhstNetwork<double> helper(mc, 0);
    const Tensor<double> x = s.tensor({2, 3, 6, 25});
    const Tensor<double> static_op = hconv_operator(mc.hypergraph);
    const Tensor<double> weight_ops = helper.weight_operators(x, 1);
    BlockContext<double> ctx;
    ctx.static_op = &static_op;
    ctx.weight_ops = &weight_ops;
    ctx.raw_input = &x;
    s.check("dhst_block", block.parameters(), [&](Tp& t) { return block.forward(t.constant(x), ctx); });
  }
  return s.take();
}

}  // namespace dhg
