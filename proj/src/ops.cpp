#include <algorithm>
#include <cmath>
#include <limits>

#include "dhg/autograd.hpp"
#include "dhg/kernels.hpp"

namespace dhg::ops {

namespace {

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void need_rank(const Var<T>& a, std::size_t rank, const char* op) {
  require(a.value().rank() == rank, ErrorCode::kShapeMismatch,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

// Elements before / along / after `axis`.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit out;
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  out.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) out.inner *= s[i];
  return out;
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  need_rank(a, 2, "matmul");
  need_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, ErrorCode::kShapeMismatch,
          "matmul: inner extents " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<T> out({m, n});
  kernels::gemm_nn(m, n, k, a.value().ptr(), b.value().ptr(), out.ptr(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* ga = tape.grad_target(ia)) kernels::gemm_nt(m, k, n, g.ptr(), tape.value(ib).ptr(), ga->ptr(), true);
    if (Tensor<T>* gb = tape.grad_target(ib)) kernels::gemm_tn(k, n, m, tape.value(ia).ptr(), g.ptr(), gb->ptr(), true);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {a, b}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* ga = tape.grad_target(ia)) *ga += g;
    if (Tensor<T>* gb = tape.grad_target(ib)) *gb += g;
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {a, b}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* ga = tape.grad_target(ia)) *ga += g;
    if (Tensor<T>* gb = tape.grad_target(ib))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* ga = tape.grad_target(ia)) {
      const Tensor<T>& o = tape.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * o[i];
    }
    if (Tensor<T>* gb = tape.grad_target(ib)) {
      const Tensor<T>& o = tape.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * o[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(out), {a}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* ga = tape.grad_target(ia))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ia = a.id();
  return a.tape().record("relu", std::move(out), {a}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* ga = tape.grad_target(ia)) {
      const Tensor<T>& x = tape.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > T{0}) (*ga)[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (T v : a.value().data()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor<T>({1}, total), {a}, [=](Tape<T>& tape, std::size_t self) {
    const T g = tape.grad_out(self)[0];
    if (Tensor<T>* ga = tape.grad_target(ia))
      for (T& v : ga->data()) v += g;
  });
}

template <typename T>
Var<T> softmax(const Var<T>& a, std::size_t axis) {
  require(axis < a.value().rank(), ErrorCode::kInvalidAxis,
          "softmax axis " + std::to_string(axis) + " for shape " + shape_str(a.shape()));
  const AxisSplit s = split_at(a.shape(), axis);
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T hi = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) hi = std::max(hi, x[base + l * s.inner]);
      T z{0};
      for (std::size_t l = 0; l < s.len; ++l) z += (out[base + l * s.inner] = std::exp(x[base + l * s.inner] - hi));
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= z;
    }
  const std::size_t ia = a.id();
  return a.tape().record("softmax", std::move(out), {a}, [=](Tape<T>& tape, std::size_t self) {
    Tensor<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const Tensor<T>& g = tape.grad_out(self);
    const Tensor<T>& y = tape.value(self);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        T dot{0};
        for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          (*ga)[i] += y[i] * (g[i] - dot);
        }
      }
  });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& labels) {
  const Tensor<T>& x = logits.value();
  require(x.rank() == 1 || x.rank() == 2, ErrorCode::kShapeMismatch,
          "cross_entropy expects [K] or [B, K], got " + shape_str(x.shape()));
  const std::size_t rows = x.rank() == 2 ? x.shape()[0] : 1;
  const std::size_t k = x.shape().back();
  require(labels.size() == rows, ErrorCode::kShapeMismatch,
          "cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  Tensor<T> probs(x.shape());
  T loss{0};
  for (std::size_t r = 0; r < rows; ++r) {
    require(labels[r] < k, ErrorCode::kLabelOutOfRange,
            "label " + std::to_string(labels[r]) + " with " + std::to_string(k) + " classes");
    const T* row = x.ptr() + r * k;
    T hi = *std::max_element(row, row + k);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) z += (probs[r * k + j] = std::exp(row[j] - hi));
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] /= z;
    loss += std::log(z) + hi - row[labels[r]];
  }
  loss /= static_cast<T>(rows);
  const std::size_t il = logits.id();
  return logits.tape().record(
      "cross_entropy", Tensor<T>({1}, loss), {logits},
      [=, probs = std::move(probs)](Tape<T>& tape, std::size_t self) {
        Tensor<T>* gl = tape.grad_target(il);
        if (!gl) return;
        const T g = tape.grad_out(self)[0] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < k; ++j)
            (*gl)[r * k + j] += g * (probs[r * k + j] - (j == labels[r] ? T{1} : T{0}));
      });
}

template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, bool train,
                 bool update_state) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() >= 2, ErrorCode::kShapeMismatch, "batchnorm needs a channel axis, got " + shape_str(xv.shape()));
  const AxisSplit s = split_at(xv.shape(), 1);
  const std::size_t c = s.len;
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c} && state.running_mean.shape() == Shape{c},
          ErrorCode::kShapeMismatch, "batchnorm channel parameters for " + shape_str(xv.shape()));
  const std::size_t count = s.outer * s.inner;
  std::vector<T> mean(c), inv_std(c);
  if (train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T acc{0};
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* p = xv.ptr() + (o * c + ch) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) acc += p[i];
      }
      mean[ch] = acc / static_cast<T>(count);
      T var{0};
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* p = xv.ptr() + (o * c + ch) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) var += (p[i] - mean[ch]) * (p[i] - mean[ch]);
      }
      var /= static_cast<T>(count);
      inv_std[ch] = T{1} / std::sqrt(var + state.eps);
      if (update_state) {
        const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
        state.running_mean[ch] = (T{1} - state.momentum) * state.running_mean[ch] + state.momentum * mean[ch];
        state.running_var[ch] = (T{1} - state.momentum) * state.running_var[ch] + state.momentum * unbiased;
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = T{1} / std::sqrt(state.running_var[ch] + state.eps);
    }
  }
  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (o * c + ch) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) {
        const T h = (xv[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = gv[ch] * h + bv[ch];
      }
    }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      "batchnorm", std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tape, std::size_t self) {
        const Tensor<T>& g = tape.grad_out(self);
        const Tensor<T>& gv = tape.value(ig);
        std::vector<T> sum_g(c, T{0}), sum_gh(c, T{0});
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (o * c + ch) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) {
              sum_g[ch] += g[base + i];
              sum_gh[ch] += g[base + i] * xhat[base + i];
            }
          }
        if (Tensor<T>* gg = tape.grad_target(ig))
          for (std::size_t ch = 0; ch < c; ++ch) (*gg)[ch] += sum_gh[ch];
        if (Tensor<T>* gb = tape.grad_target(ib))
          for (std::size_t ch = 0; ch < c; ++ch) (*gb)[ch] += sum_g[ch];
        Tensor<T>* gx = tape.grad_target(ix);
        if (!gx) return;
        const T n = static_cast<T>(count);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (o * c + ch) * s.inner;
            const T k = gv[ch] * inv_std[ch];
            for (std::size_t i = 0; i < s.inner; ++i) {
              if (train) {
                (*gx)[base + i] += k * (g[base + i] - sum_g[ch] / n - xhat[base + i] * sum_gh[ch] / n);
              } else {
                (*gx)[base + i] += k * g[base + i];
              }
            }
          }
      });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() >= 2, ErrorCode::kShapeMismatch, "global_avg_pool needs [B, C, ...], got " + shape_str(xv.shape()));
  const std::size_t b = xv.shape()[0], c = xv.shape()[1];
  const std::size_t inner = xv.size() / (b * c);
  Tensor<T> out({b, c});
  for (std::size_t i = 0; i < b * c; ++i) {
    T acc{0};
    for (std::size_t j = 0; j < inner; ++j) acc += xv[i * inner + j];
    out[i] = acc / static_cast<T>(inner);
  }
  const std::size_t ix = x.id();
  return x.tape().record("global_avg_pool", std::move(out), {x}, [=](Tape<T>& tape, std::size_t self) {
    Tensor<T>* gx = tape.grad_target(ix);
    if (!gx) return;
    const Tensor<T>& g = tape.grad_out(self);
    for (std::size_t i = 0; i < b * c; ++i) {
      const T share = g[i] / static_cast<T>(inner);
      for (std::size_t j = 0; j < inner; ++j) (*gx)[i * inner + j] += share;
    }
  });
}

template <typename T>
Var<T> conv_temporal(const Var<T>& x, const Var<T>& w, std::size_t stride, std::size_t dilation) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  require(xv.rank() == 3 || xv.rank() == 4, ErrorCode::kShapeMismatch,
          "conv_temporal expects [B, C, T, N] or [C, T, N], got " + shape_str(xv.shape()));
  require(stride == 1 || stride == 2, ErrorCode::kShapeMismatch, "conv_temporal stride must be 1 or 2");
  require(dilation >= 1, ErrorCode::kShapeMismatch, "conv_temporal dilation must be >= 1");
  const bool batched = xv.rank() == 4;
  kernels::ConvGeom geom;
  geom.batch = batched ? xv.shape()[0] : 1;
  geom.c_in = xv.shape()[batched ? 1 : 0];
  geom.frames = xv.shape()[batched ? 2 : 1];
  geom.nodes = xv.shape()[batched ? 3 : 2];
  geom.stride = stride;
  geom.dilation = dilation;
  require(wv.rank() == 4 && wv.shape()[1] == geom.c_in && wv.shape()[2] == 3 && wv.shape()[3] == 1,
          ErrorCode::kShapeMismatch,
          "conv_temporal weight " + shape_str(wv.shape()) + " for input " + shape_str(xv.shape()));
  geom.c_out = wv.shape()[0];
  Shape out_shape = batched ? Shape{geom.batch, geom.c_out, geom.frames_out(), geom.nodes}
                            : Shape{geom.c_out, geom.frames_out(), geom.nodes};
  Tensor<T> out(out_shape);
  kernels::conv_temporal_forward(geom, xv.ptr(), wv.ptr(), out.ptr());
  const std::size_t ix = x.id(), iw = w.id();
  return x.tape().record("conv_temporal", std::move(out), {x, w}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* gx = tape.grad_target(ix))
      kernels::conv_temporal_backward_data(geom, g.ptr(), tape.value(iw).ptr(), gx->ptr());
    if (Tensor<T>* gw = tape.grad_target(iw))
      kernels::conv_temporal_backward_weight(geom, tape.value(ix).ptr(), g.ptr(), gw->ptr());
  });
}

template <typename T>
Var<T> channel_mix(const Var<T>& x, const Var<T>& theta) {
  need_rank(x, 4, "channel_mix");
  need_rank(theta, 2, "channel_mix");
  const Shape& xs = x.shape();
  const std::size_t b = xs[0], ci = xs[1], plane = xs[2] * xs[3];
  require(theta.shape()[0] == ci, ErrorCode::kShapeMismatch,
          "channel_mix: theta " + shape_str(theta.shape()) + " for input " + shape_str(xs));
  const std::size_t co = theta.shape()[1];
  Tensor<T> out({b, co, xs[2], xs[3]});
  const T* th = theta.value().ptr();
  for (std::size_t i = 0; i < b; ++i)
    kernels::gemm_tn(co, plane, ci, th, x.value().ptr() + i * ci * plane, out.ptr() + i * co * plane, false);
  const std::size_t ix = x.id(), it = theta.id();
  return x.tape().record("channel_mix", std::move(out), {x, theta}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* gx = tape.grad_target(ix)) {
      const T* thv = tape.value(it).ptr();
      for (std::size_t i = 0; i < b; ++i)
        kernels::gemm_nn(ci, plane, co, thv, g.ptr() + i * co * plane, gx->ptr() + i * ci * plane, true);
    }
    if (Tensor<T>* gt = tape.grad_target(it)) {
      const T* xv = tape.value(ix).ptr();
      for (std::size_t i = 0; i < b; ++i)
        kernels::gemm_nt(ci, co, plane, xv + i * ci * plane, g.ptr() + i * co * plane, gt->ptr(), true);
    }
  });
}

template <typename T>
Var<T> frame_stride(const Var<T>& x, std::size_t stride) {
  need_rank(x, 4, "frame_stride");
  require(stride >= 1, ErrorCode::kShapeMismatch, "frame_stride needs stride >= 1");
  const Shape& xs = x.shape();
  const std::size_t bc = xs[0] * xs[1], t = xs[2], n = xs[3];
  const std::size_t to = (t + stride - 1) / stride;
  Tensor<T> out({xs[0], xs[1], to, n});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < bc; ++p)
    for (std::size_t f = 0; f < to; ++f)
      std::copy_n(xv.ptr() + (p * t + f * stride) * n, n, out.ptr() + (p * to + f) * n);
  const std::size_t ix = x.id();
  return x.tape().record("frame_stride", std::move(out), {x}, [=](Tape<T>& tape, std::size_t self) {
    Tensor<T>* gx = tape.grad_target(ix);
    if (!gx) return;
    const Tensor<T>& g = tape.grad_out(self);
    for (std::size_t p = 0; p < bc; ++p)
      for (std::size_t f = 0; f < to; ++f)
        for (std::size_t v = 0; v < n; ++v) (*gx)[(p * t + f * stride) * n + v] += g[(p * to + f) * n + v];
  });
}

template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() >= 2 && b.shape() == Shape{xv.shape()[1]}, ErrorCode::kShapeMismatch,
          "bias_add: bias " + shape_str(b.shape()) + " for " + shape_str(xv.shape()));
  const AxisSplit s = split_at(xv.shape(), 1);
  Tensor<T> out = xv;
  const Tensor<T>& bv = b.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t c = 0; c < s.len; ++c) {
      T* p = out.ptr() + (o * s.len + c) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) p[i] += bv[c];
    }
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape().record("bias_add", std::move(out), {x, b}, [=](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad_out(self);
    if (Tensor<T>* gx = tape.grad_target(ix)) *gx += g;
    if (Tensor<T>* gb = tape.grad_target(ib))
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t c = 0; c < s.len; ++c) {
          const T* p = g.ptr() + (o * s.len + c) * s.inner;
          T acc{0};
          for (std::size_t i = 0; i < s.inner; ++i) acc += p[i];
          (*gb)[c] += acc;
        }
  });
}

template <typename T>
Var<T> node_aggregate(const Var<T>& x, const Tensor<T>& op) {
  need_rank(x, 4, "node_aggregate");
  const Shape& xs = x.shape();
  const std::size_t n = xs[3];
  Tensor<T> out(xs);
  const std::size_t ix = x.id();
  if (op.rank() == 2) {
    require(op.shape() == Shape{n, n}, ErrorCode::kShapeMismatch,
            "node_aggregate: operator " + shape_str(op.shape()) + " for " + shape_str(xs));
    const std::size_t rows = xs[0] * xs[1] * xs[2];
    kernels::node_aggregate(rows, n, x.value().ptr(), op.ptr(), out.ptr(), false, false);
    return x.tape().record("node_aggregate", std::move(out), {x}, [=](Tape<T>& tape, std::size_t self) {
      if (Tensor<T>* gx = tape.grad_target(ix))
        kernels::node_aggregate(rows, n, tape.grad_out(self).ptr(), op.ptr(), gx->ptr(), true, true);
    });
  }
  require(op.shape() == Shape{xs[0], xs[2], n, n}, ErrorCode::kShapeMismatch,
          "node_aggregate: per-frame operators " + shape_str(op.shape()) + " for " + shape_str(xs));
  const kernels::FrameGeom geom{xs[0], xs[1], xs[2], n};
  kernels::frame_aggregate(geom, x.value().ptr(), op.ptr(), out.ptr(), false, false);
  return x.tape().record("node_aggregate", std::move(out), {x}, [=](Tape<T>& tape, std::size_t self) {
    if (Tensor<T>* gx = tape.grad_target(ix))
      kernels::frame_aggregate(geom, tape.grad_out(self).ptr(), op.ptr(), gx->ptr(), true, true);
  });
}

template <typename T>
Var<T> segment_max(const Var<T>& x, const std::vector<std::size_t>& group_sizes) {
  need_rank(x, 2, "segment_max");
  const std::size_t rows = x.shape()[0], c = x.shape()[1];
  std::size_t total = 0;
  for (std::size_t gsz : group_sizes) {
    require(gsz > 0, ErrorCode::kShapeMismatch, "segment_max: empty group");
    total += gsz;
  }
  require(total == rows, ErrorCode::kShapeMismatch,
          "segment_max: groups cover " + std::to_string(total) + " of " + std::to_string(rows) + " rows");
  const std::size_t groups = group_sizes.size();
  const Tensor<T>& xv = x.value();
  Tensor<T> out({groups, c});
  std::vector<std::size_t> winner(groups * c);
  std::size_t start = 0;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = start;
      for (std::size_t r = start + 1; r < start + group_sizes[gi]; ++r)
        if (xv[r * c + j] > xv[best * c + j]) best = r;
      winner[gi * c + j] = best;
      out[gi * c + j] = xv[best * c + j];
    }
    start += group_sizes[gi];
  }
  const std::size_t ix = x.id();
  return x.tape().record("segment_max", std::move(out), {x},
                         [=, winner = std::move(winner)](Tape<T>& tape, std::size_t self) {
                           Tensor<T>* gx = tape.grad_target(ix);
                           if (!gx) return;
                           const Tensor<T>& g = tape.grad_out(self);
                           for (std::size_t i = 0; i < groups * c; ++i) (*gx)[winner[i] * c + i % c] += g[i];
                         });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), ErrorCode::kShapeMismatch, "concat_channels of nothing");
  const Shape& first = parts.front().shape();
  require(first.size() >= 2, ErrorCode::kShapeMismatch, "concat_channels needs [B, C, ...]");
  const std::size_t b = first[0];
  const std::size_t inner = shape_size(first) / (first[0] * first[1]);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    Shape s = p.shape();
    require(s.size() == first.size() && s[0] == b && shape_size(s) / (s[0] * s[1]) == inner,
            ErrorCode::kShapeMismatch, "concat_channels: " + shape_str(s) + " vs " + shape_str(first));
    widths.push_back(s[1]);
    total += s[1];
  }
  Shape out_shape = first;
  out_shape[1] = total;
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& pv = parts[k].value();
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(pv.ptr() + i * widths[k] * inner, widths[k] * inner, out.ptr() + (i * total + offset) * inner);
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var<T>& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(
      "concat_channels", std::move(out), parts, [=](Tape<T>& tape, std::size_t self) {
        const Tensor<T>& g = tape.grad_out(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (Tensor<T>* gp = tape.grad_target(ids[k]))
            for (std::size_t i = 0; i < b; ++i) {
              const T* src = g.ptr() + (i * total + off) * inner;
              T* dst = gp->ptr() + i * widths[k] * inner;
              for (std::size_t j = 0; j < widths[k] * inner; ++j) dst[j] += src[j];
            }
          off += widths[k];
        }
      });
}

#define DHG_INSTANTIATE(T)                                                                                    \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                                  \
  template Var<T> relu<T>(const Var<T>&);                                                                      \
  template Var<T> sum<T>(const Var<T>&);                                                                       \
  template Var<T> softmax<T>(const Var<T>&, std::size_t);                                                      \
  template Var<T> cross_entropy<T>(const Var<T>&, const std::vector<std::size_t>&);                            \
  template Var<T> batchnorm<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, bool, bool);   \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                           \
  template Var<T> conv_temporal<T>(const Var<T>&, const Var<T>&, std::size_t, std::size_t);                    \
  template Var<T> channel_mix<T>(const Var<T>&, const Var<T>&);                                                \
  template Var<T> frame_stride<T>(const Var<T>&, std::size_t);                                                 \
  template Var<T> bias_add<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> node_aggregate<T>(const Var<T>&, const Tensor<T>&);                                          \
  template Var<T> segment_max<T>(const Var<T>&, const std::vector<std::size_t>&);                              \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);

DHG_INSTANTIATE(float)
DHG_INSTANTIATE(double)

#undef DHG_INSTANTIATE

}  // namespace dhg::ops
