#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dhg/kernels.hpp"
#include "test_support.hpp"

using namespace dhg;
namespace k = dhg::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("gemm variants match the serial loop nests") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> ext(1, 37);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = ext(rng), n = ext(rng) * (trial % 3 == 0 ? 30 : 1), kk = ext(rng);
    const bool acc = trial % 2 == 0;
    auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng), c0 = random_vec(m * n, rng);
    auto c1 = c0;
    k::gemm_nn(m, n, kk, a.data(), b.data(), c0.data(), acc);
    k::reference::gemm_nn(m, n, kk, a.data(), b.data(), c1.data(), acc);
    CHECK(max_diff(c0, c1) < 1e-12);

    auto at = random_vec(kk * m, rng);
    c1 = c0;
    k::gemm_tn(m, n, kk, at.data(), b.data(), c0.data(), acc);
    k::reference::gemm_tn(m, n, kk, at.data(), b.data(), c1.data(), acc);
    CHECK(max_diff(c0, c1) < 1e-12);

    auto bt = random_vec(n * kk, rng);
    c1 = c0;
    k::gemm_nt(m, n, kk, a.data(), bt.data(), c0.data(), acc);
    k::reference::gemm_nt(m, n, kk, a.data(), bt.data(), c1.data(), acc);
    CHECK(max_diff(c0, c1) < 1e-12);
  }
}

TEST_CASE("temporal convolution kernels match the direct loops") {
  std::mt19937_64 rng(12);
  for (std::size_t stride : {1u, 2u})
    for (std::size_t dilation : {1u, 2u, 3u})
      for (std::size_t frames : {1u, 5u, 8u}) {
        k::ConvGeom g{2, 3, 4, frames, 5, stride, dilation};
        const std::size_t to = g.frames_out();
        auto x = random_vec(g.batch * g.c_in * frames * g.nodes, rng);
        auto w = random_vec(g.c_out * g.c_in * 3, rng);
        auto dy = random_vec(g.batch * g.c_out * to * g.nodes, rng);

        std::vector<double> y0(dy.size()), y1(dy.size());
        k::conv_temporal_forward(g, x.data(), w.data(), y0.data());
        k::reference::conv_temporal_forward(g, x.data(), w.data(), y1.data());
        CHECK(max_diff(y0, y1) < 1e-12);

        std::vector<double> dx0(x.size(), 0.5), dx1(x.size(), 0.5);
        k::conv_temporal_backward_data(g, dy.data(), w.data(), dx0.data());
        k::reference::conv_temporal_backward_data(g, dy.data(), w.data(), dx1.data());
        CHECK(max_diff(dx0, dx1) < 1e-12);

        std::vector<double> dw0(w.size(), 0.25), dw1(w.size(), 0.25);
        k::conv_temporal_backward_weight(g, x.data(), dy.data(), dw0.data());
        k::reference::conv_temporal_backward_weight(g, x.data(), dy.data(), dw1.data());
        CHECK(max_diff(dw0, dw1) < 1e-12);
      }
}

TEST_CASE("output length is ceil(T / stride)") {
  CHECK(k::ConvGeom{1, 1, 1, 8, 1, 2, 1}.frames_out() == 4);
  CHECK(k::ConvGeom{1, 1, 1, 8, 1, 1, 1}.frames_out() == 8);
  CHECK(k::ConvGeom{1, 1, 1, 7, 1, 2, 3}.frames_out() == 4);
}

TEST_CASE("node aggregation kernels match the direct loops") {
  std::mt19937_64 rng(13);
  for (bool transpose : {false, true})
    for (bool acc : {false, true}) {
      const std::size_t rows = 17, n = 25;
      auto x = random_vec(rows * n, rng), op = random_vec(n * n, rng), y0 = random_vec(rows * n, rng);
      auto y1 = y0;
      k::node_aggregate(rows, n, x.data(), op.data(), y0.data(), transpose, acc);
      k::reference::node_aggregate(rows, n, x.data(), op.data(), y1.data(), transpose, acc);
      CHECK(max_diff(y0, y1) < 1e-12);

      k::FrameGeom g{3, 4, 5, 7};
      auto fx = random_vec(3 * 4 * 5 * 7, rng), fops = random_vec(3 * 5 * 49, rng);
      auto f0 = random_vec(fx.size(), rng);
      auto f1 = f0;
      k::frame_aggregate(g, fx.data(), fops.data(), f0.data(), transpose, acc);
      k::reference::frame_aggregate(g, fx.data(), fops.data(), f1.data(), transpose, acc);
      CHECK(max_diff(f0, f1) < 1e-12);
    }
}
