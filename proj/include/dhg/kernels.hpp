#pragma once

// Dense compute kernels behind the differentiable ops. Every kernel exists
// twice: an OpenMP-parallel version in dhg::kernels and a plain serial loop
// nest in dhg::kernels::reference. The reference versions are the test
// oracles and the benchmark baseline; they are never called by the library.
//
// All buffers are contiguous row-major. Parallel kernels assign each output
// element to exactly one thread with a fixed summation order, so results are
// independent of the thread count.

#include <cstddef>

namespace dhg::kernels {

// Temporal convolution geometry: x [batch, c_in, frames, nodes],
// w [c_out, c_in, 3], y [batch, c_out, frames_out, nodes]. Zero padding of
// `dilation` frames on both ends.
struct ConvGeom {
  std::size_t batch = 1;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t frames = 1;
  std::size_t nodes = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;

  static constexpr std::size_t kTaps = 3;
  std::size_t frames_out() const { return (frames + stride - 1) / stride; }
};

// Per-frame aggregation geometry: x [batch, channels, frames, nodes],
// ops [batch, frames, nodes, nodes].
struct FrameGeom {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t frames = 1;
  std::size_t nodes = 1;
};

int max_threads();

// c[m×n] (+)= a[m×k] · b[k×n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
// c[m×n] (+)= a[k×m]ᵀ · b[k×n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
// c[m×n] (+)= a[m×k] · b[n×k]ᵀ
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void conv_temporal_forward(const ConvGeom& g, const T* x, const T* w, T* y);
// dx += convᵀ(dy)
template <typename T>
void conv_temporal_backward_data(const ConvGeom& g, const T* dy, const T* w, T* dx);
// dw += Σ_b dy_b ⋆ x_b
template <typename T>
void conv_temporal_backward_weight(const ConvGeom& g, const T* x, const T* dy, T* dw);

// y[r, n] (+)= Σ_m op[n, m] · x[r, m]   (transpose_op: op[m, n])
template <typename T>
void node_aggregate(std::size_t rows, std::size_t nodes, const T* x, const T* op, T* y, bool transpose_op,
                    bool accumulate);

// y[b, c, t, n] (+)= Σ_m ops[b, t, n, m] · x[b, c, t, m]   (transpose_op: ops[b, t, m, n])
template <typename T>
void frame_aggregate(const FrameGeom& g, const T* x, const T* ops, T* y, bool transpose_op, bool accumulate);

namespace reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void conv_temporal_forward(const ConvGeom& g, const T* x, const T* w, T* y);
template <typename T>
void conv_temporal_backward_data(const ConvGeom& g, const T* dy, const T* w, T* dx);
template <typename T>
void conv_temporal_backward_weight(const ConvGeom& g, const T* x, const T* dy, T* dw);
template <typename T>
void node_aggregate(std::size_t rows, std::size_t nodes, const T* x, const T* op, T* y, bool transpose_op,
                    bool accumulate);
template <typename T>
void frame_aggregate(const FrameGeom& g, const T* x, const T* ops, T* y, bool transpose_op, bool accumulate);

}  // namespace reference
}  // namespace dhg::kernels
