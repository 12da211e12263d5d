#include "dhg/kernels.hpp"

namespace dhg::kernels::reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void conv_temporal_forward(const ConvGeom& g, const T* x, const T* w, T* y) {
  const std::size_t to = g.frames_out();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.c_out; ++o)
      for (std::size_t t = 0; t < to; ++t)
        for (std::size_t v = 0; v < g.nodes; ++v) {
          T acc{0};
          for (std::size_t c = 0; c < g.c_in; ++c)
            for (std::size_t tap = 0; tap < ConvGeom::kTaps; ++tap) {
              const long src = static_cast<long>(t * g.stride) + (static_cast<long>(tap) - 1) * static_cast<long>(g.dilation);
              if (src < 0 || src >= static_cast<long>(g.frames)) continue;
              acc += w[(o * g.c_in + c) * ConvGeom::kTaps + tap] *
                     x[((b * g.c_in + c) * g.frames + static_cast<std::size_t>(src)) * g.nodes + v];
            }
          y[((b * g.c_out + o) * to + t) * g.nodes + v] = acc;
        }
}

template <typename T>
void conv_temporal_backward_data(const ConvGeom& g, const T* dy, const T* w, T* dx) {
  const std::size_t to = g.frames_out();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.c_out; ++o)
      for (std::size_t t = 0; t < to; ++t)
        for (std::size_t v = 0; v < g.nodes; ++v) {
          const T gy = dy[((b * g.c_out + o) * to + t) * g.nodes + v];
          for (std::size_t c = 0; c < g.c_in; ++c)
            for (std::size_t tap = 0; tap < ConvGeom::kTaps; ++tap) {
              const long src = static_cast<long>(t * g.stride) + (static_cast<long>(tap) - 1) * static_cast<long>(g.dilation);
              if (src < 0 || src >= static_cast<long>(g.frames)) continue;
              dx[((b * g.c_in + c) * g.frames + static_cast<std::size_t>(src)) * g.nodes + v] +=
                  w[(o * g.c_in + c) * ConvGeom::kTaps + tap] * gy;
            }
        }
}

template <typename T>
void conv_temporal_backward_weight(const ConvGeom& g, const T* x, const T* dy, T* dw) {
  const std::size_t to = g.frames_out();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.c_out; ++o)
      for (std::size_t t = 0; t < to; ++t)
        for (std::size_t v = 0; v < g.nodes; ++v) {
          const T gy = dy[((b * g.c_out + o) * to + t) * g.nodes + v];
          for (std::size_t c = 0; c < g.c_in; ++c)
            for (std::size_t tap = 0; tap < ConvGeom::kTaps; ++tap) {
              const long src = static_cast<long>(t * g.stride) + (static_cast<long>(tap) - 1) * static_cast<long>(g.dilation);
              if (src < 0 || src >= static_cast<long>(g.frames)) continue;
              dw[(o * g.c_in + c) * ConvGeom::kTaps + tap] +=
                  gy * x[((b * g.c_in + c) * g.frames + static_cast<std::size_t>(src)) * g.nodes + v];
            }
        }
}

template <typename T>
void node_aggregate(std::size_t rows, std::size_t nodes, const T* x, const T* op, T* y, bool transpose_op,
                    bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t n = 0; n < nodes; ++n) {
      T acc = accumulate ? y[r * nodes + n] : T{0};
      for (std::size_t m = 0; m < nodes; ++m)
        acc += (transpose_op ? op[m * nodes + n] : op[n * nodes + m]) * x[r * nodes + m];
      y[r * nodes + n] = acc;
    }
}

template <typename T>
void frame_aggregate(const FrameGeom& g, const T* x, const T* ops, T* y, bool transpose_op, bool accumulate) {
  const std::size_t nn = g.nodes * g.nodes;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.channels; ++c)
      for (std::size_t t = 0; t < g.frames; ++t) {
        const T* op = ops + (b * g.frames + t) * nn;
        const std::size_t row = ((b * g.channels + c) * g.frames + t) * g.nodes;
        for (std::size_t n = 0; n < g.nodes; ++n) {
          T acc = accumulate ? y[row + n] : T{0};
          for (std::size_t m = 0; m < g.nodes; ++m)
            acc += (transpose_op ? op[m * g.nodes + n] : op[n * g.nodes + m]) * x[row + m];
          y[row + n] = acc;
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

}  // namespace dhg::kernels::reference
