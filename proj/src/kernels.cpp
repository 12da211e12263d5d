#include "dhg/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dhg::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 512;
// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

// Serial body for rows [i0, i1): c[i, :] (+)= Σ_p a[i, p] b[p, :]
template <typename T>
void gemm_rows(std::size_t i0, std::size_t i1, std::size_t n, std::size_t k, const T* __restrict a,
               const T* __restrict b, T* __restrict c, bool accumulate) {
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t jn = std::min(kColBlock, n - j0);
    std::size_t i = i0;
    for (; i + kRowBlock <= i1; i += kRowBlock) {
      T* __restrict c0 = c + (i + 0) * n + j0;
      T* __restrict c1 = c + (i + 1) * n + j0;
      T* __restrict c2 = c + (i + 2) * n + j0;
      T* __restrict c3 = c + (i + 3) * n + j0;
      if (!accumulate) {
        std::fill(c0, c0 + jn, T{0});
        std::fill(c1, c1 + jn, T{0});
        std::fill(c2, c2 + jn, T{0});
        std::fill(c3, c3 + jn, T{0});
      }
      for (std::size_t p = 0; p < k; ++p) {
        const T a0 = a[(i + 0) * k + p];
        const T a1 = a[(i + 1) * k + p];
        const T a2 = a[(i + 2) * k + p];
        const T a3 = a[(i + 3) * k + p];
        const T* __restrict bp = b + p * n + j0;
#pragma omp simd
        for (std::size_t j = 0; j < jn; ++j) {
          const T bv = bp[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < i1; ++i) {
      T* __restrict ci = c + i * n + j0;
      if (!accumulate) std::fill(ci, ci + jn, T{0});
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* __restrict bp = b + p * n + j0;
#pragma omp simd
        for (std::size_t j = 0; j < jn; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

template <typename T>
std::vector<T> transposed(std::size_t rows, std::size_t cols, const T* src) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

// col[(c * 3 + tap), t * nodes + v] = x_b[c, t * stride + (tap - 1) * dilation, v]
template <typename T>
void im2col(const ConvGeom& g, const T* xb, T* col) {
  const std::size_t to = g.frames_out();
  const std::size_t row_len = to * g.nodes;
  const long rows = static_cast<long>(g.c_in * ConvGeom::kTaps);
#pragma omp parallel for schedule(static) if (rows * static_cast<long>(row_len) > static_cast<long>(kParallelWork))
  for (long r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(r) / ConvGeom::kTaps;
    const long shift = (static_cast<long>(static_cast<std::size_t>(r) % ConvGeom::kTaps) - 1) *
                       static_cast<long>(g.dilation);
    T* dst = col + static_cast<std::size_t>(r) * row_len;
    for (std::size_t t = 0; t < to; ++t) {
      const long src = static_cast<long>(t * g.stride) + shift;
      T* out = dst + t * g.nodes;
      if (src < 0 || src >= static_cast<long>(g.frames)) {
        std::fill(out, out + g.nodes, T{0});
      } else {
        const T* in = xb + (c * g.frames + static_cast<std::size_t>(src)) * g.nodes;
        std::copy(in, in + g.nodes, out);
      }
    }
  }
}

// dx_b += scatter(col); rows for one input channel never touch another channel.
template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* dxb) {
  const std::size_t to = g.frames_out();
  const std::size_t row_len = to * g.nodes;
  const long channels = static_cast<long>(g.c_in);
#pragma omp parallel for schedule(static) if (channels * static_cast<long>(row_len * 3) > static_cast<long>(kParallelWork))
  for (long cl = 0; cl < channels; ++cl) {
    const std::size_t c = static_cast<std::size_t>(cl);
    for (std::size_t tap = 0; tap < ConvGeom::kTaps; ++tap) {
      const long shift = (static_cast<long>(tap) - 1) * static_cast<long>(g.dilation);
      const T* src_row = col + (c * ConvGeom::kTaps + tap) * row_len;
      for (std::size_t t = 0; t < to; ++t) {
        const long src = static_cast<long>(t * g.stride) + shift;
        if (src < 0 || src >= static_cast<long>(g.frames)) continue;
        T* out = dxb + (c * g.frames + static_cast<std::size_t>(src)) * g.nodes;
        const T* in = src_row + t * g.nodes;
        for (std::size_t v = 0; v < g.nodes; ++v) out[v] += in[v];
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const long blocks = static_cast<long>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
    gemm_rows(i0, std::min(m, i0 + kRowBlock), n, k, a, b, c, accumulate);
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const std::vector<T> at = transposed(k, m, a);
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  const std::vector<T> bt = transposed(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

template <typename T>
void conv_temporal_forward(const ConvGeom& g, const T* x, const T* w, T* y) {
  const std::size_t to = g.frames_out();
  const std::size_t taps = g.c_in * ConvGeom::kTaps;
  std::vector<T> col(taps * to * g.nodes);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x + b * g.c_in * g.frames * g.nodes, col.data());
    gemm_nn(g.c_out, to * g.nodes, taps, w, col.data(), y + b * g.c_out * to * g.nodes, false);
  }
}

template <typename T>
void conv_temporal_backward_data(const ConvGeom& g, const T* dy, const T* w, T* dx) {
  const std::size_t to = g.frames_out();
  const std::size_t taps = g.c_in * ConvGeom::kTaps;
  const std::vector<T> wt = transposed(g.c_out, taps, w);
  std::vector<T> col(taps * to * g.nodes);
  for (std::size_t b = 0; b < g.batch; ++b) {
    gemm_nn(taps, to * g.nodes, g.c_out, wt.data(), dy + b * g.c_out * to * g.nodes, col.data(), false);
    col2im_add(g, col.data(), dx + b * g.c_in * g.frames * g.nodes);
  }
}

template <typename T>
void conv_temporal_backward_weight(const ConvGeom& g, const T* x, const T* dy, T* dw) {
  const std::size_t to = g.frames_out();
  const std::size_t taps = g.c_in * ConvGeom::kTaps;
  const std::size_t cols = to * g.nodes;
  std::vector<T> col(taps * cols);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x + b * g.c_in * g.frames * g.nodes, col.data());
    gemm_nt(g.c_out, taps, cols, dy + b * g.c_out * cols, col.data(), dw, true);
  }
}

template <typename T>
void node_aggregate(std::size_t rows, std::size_t nodes, const T* x, const T* op, T* y, bool transpose_op,
                    bool accumulate) {
  // y = x · opᵀ, or y = x · op when transposed.
  if (transpose_op) {
    gemm_nn(rows, nodes, nodes, x, op, y, accumulate);
  } else {
    gemm_nt(rows, nodes, nodes, x, op, y, accumulate);
  }
}

template <typename T>
void frame_aggregate(const FrameGeom& g, const T* x, const T* ops, T* y, bool transpose_op, bool accumulate) {
  const std::size_t nn = g.nodes * g.nodes;
  const long planes = static_cast<long>(g.batch * g.channels);
#pragma omp parallel for schedule(static) if (g.batch * g.channels * g.frames * nn > kParallelWork)
  for (long plane = 0; plane < planes; ++plane) {
    const std::size_t b = static_cast<std::size_t>(plane) / g.channels;
    for (std::size_t t = 0; t < g.frames; ++t) {
      const T* op = ops + (b * g.frames + t) * nn;
      const std::size_t row = (static_cast<std::size_t>(plane) * g.frames + t) * g.nodes;
      const T* xr = x + row;
      T* yr = y + row;
      for (std::size_t n = 0; n < g.nodes; ++n) {
        T acc = accumulate ? yr[n] : T{0};
        if (transpose_op) {
          for (std::size_t m = 0; m < g.nodes; ++m) acc += op[m * g.nodes + n] * xr[m];
        } else {
          const T* opr = op + n * g.nodes;
          for (std::size_t m = 0; m < g.nodes; ++m) acc += opr[m] * xr[m];
        }
        yr[n] = acc;
      }
    }
  }
}

#define DHG_INSTANTIATE(T)                                                                                    \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);                \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);                \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);                \
  template void conv_temporal_forward<T>(const ConvGeom&, const T*, const T*, T*);                              \
  template void conv_temporal_backward_data<T>(const ConvGeom&, const T*, const T*, T*);                        \
  template void conv_temporal_backward_weight<T>(const ConvGeom&, const T*, const T*, T*);                      \
  template void node_aggregate<T>(std::size_t, std::size_t, const T*, const T*, T*, bool, bool);                \
  template void frame_aggregate<T>(const FrameGeom&, const T*, const T*, T*, bool, bool);

DHG_INSTANTIATE(float)
DHG_INSTANTIATE(double)

#undef DHG_INSTANTIATE

}  // namespace dhg::kernels
