#include "dhg/dynamic_weight.hpp"

#include <cmath>

namespace dhg {

DisplacementField displacement(const SkeletonSequence& seq, std::size_t person) {
  require(person < seq.persons(), ErrorCode::kShapeMismatch,
          "person " + std::to_string(person) + " of " + std::to_string(seq.persons()));
  const std::size_t t_len = seq.frames(), n = seq.joints(), c = seq.channels();
  DisplacementField out{Tensor<double>({t_len, n})};
  for (std::size_t t = 1; t < t_len; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = double(seq.coords(person, t, i, k)) - double(seq.coords(person, t - 1, i, k));
        s += d * d;
      }
      out.dis(t, i) = std::sqrt(s);
    }
  return out;
}

template <typename T>
DisplacementField displacement(const T* coords, std::size_t channels, std::size_t frames, std::size_t nodes) {
  DisplacementField out{Tensor<double>({frames, nodes})};
  const std::size_t plane = frames * nodes;
  for (std::size_t t = 1; t < frames; ++t)
    for (std::size_t i = 0; i < nodes; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < channels; ++k) {
        const double d = double(coords[k * plane + t * nodes + i]) - double(coords[k * plane + (t - 1) * nodes + i]);
        s += d * d;
      }
      out.dis(t, i) = std::sqrt(s);
    }
  return out;
}

template DisplacementField displacement<float>(const float*, std::size_t, std::size_t, std::size_t);
template DisplacementField displacement<double>(const double*, std::size_t, std::size_t, std::size_t);

DynamicWeightField joint_weights(const DisplacementField& dis, const Hypergraph& hg, WeightMode mode, double eps) {
  require(dis.nodes() == hg.num_nodes, ErrorCode::kShapeMismatch,
          "displacement over " + std::to_string(dis.nodes()) + " nodes for a hypergraph of " +
              std::to_string(hg.num_nodes));
  const std::size_t t_len = dis.frames(), n = hg.num_nodes, e_len = hg.num_edges();
  DynamicWeightField wf{Tensor<double>({t_len, n, std::max<std::size_t>(e_len, 1)})};
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t e = 0; e < e_len; ++e) {
      const auto& members = hg.edges[e];
      if (mode == WeightMode::kSoftmax) {
        double top = dis.dis(t, members[0]);
        for (std::size_t v : members) top = std::max(top, dis.dis(t, v));
        double z = 0;
        for (std::size_t v : members) z += std::exp(dis.dis(t, v) - top);
        for (std::size_t v : members) wf.w_all(t, v, e) = std::exp(dis.dis(t, v) - top) / z;
        continue;
      }
      double z = 0;
      for (std::size_t v : members) z += dis.dis(t, v);
      for (std::size_t v : members)
        wf.w_all(t, v, e) = z < eps ? 1.0 / double(members.size()) : dis.dis(t, v) / z;
    }
  return wf;
}

Tensor<double> imp_operator(const DynamicWeightField& wf, const IncidenceMatrix& h, std::size_t t) {
  require(wf.nodes() == h.nodes() && wf.edges() == h.edges() && t < wf.frames(), ErrorCode::kShapeMismatch,
          "imp_operator: weights " + shape_str(wf.w_all.shape()) + " incidence " + shape_str(h.h.shape()) +
              " frame " + std::to_string(t));
  const std::size_t n = h.nodes(), e = h.edges();
  Tensor<double> imp({n, e});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < e; ++k) imp(i, k) = wf.w_all(t, i, k) * h.h(i, k);
  return imp;
}

Tensor<double> imp_gram(const Tensor<double>& imp) {
  require(imp.rank() == 2, ErrorCode::kShapeMismatch, "imp_gram needs a matrix");
  const std::size_t n = imp.shape()[0], e = imp.shape()[1];
  Tensor<double> g({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < e; ++k) s += imp(i, k) * imp(j, k);
      g(i, j) = g(j, i) = s;
    }
  return g;
}

Tensor<double> normalize_gram(const Tensor<double>& g) {
  const std::size_t n = g.shape()[0];
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0;
    for (std::size_t j = 0; j < n; ++j) d += g(i, j);
    if (d > 0) inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  Tensor<double> out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = g(i, j) * inv_sqrt[i] * inv_sqrt[j];
  return out;
}

template <typename T>
Var<T> weighted_hconv_forward(const Var<T>& x, const Var<T>& theta, const Tensor<double>& imp) {
  require(x.value().rank() == 2 && imp.rank() == 2 && imp.shape()[0] == x.shape()[0], ErrorCode::kShapeMismatch,
          "weighted_hconv_forward: Imp " + shape_str(imp.shape()) + " for features " + shape_str(x.shape()));
  Tape<T>& tape = x.tape();
  return ops::matmul(ops::matmul(tape.constant(imp_gram(imp).cast<T>()), x), theta);
}

template Var<float> weighted_hconv_forward<float>(const Var<float>&, const Var<float>&, const Tensor<double>&);
template Var<double> weighted_hconv_forward<double>(const Var<double>&, const Var<double>&, const Tensor<double>&);

Tensor<double> frame_gram_operators(const DynamicWeightField& wf, const IncidenceMatrix& h, std::size_t frames_out,
                                    std::size_t step, bool normalized) {
  require(step >= 1 && (frames_out - 1) * step < wf.frames(), ErrorCode::kShapeMismatch,
          "frame_gram_operators: " + std::to_string(frames_out) + " frames at step " + std::to_string(step) +
              " from " + std::to_string(wf.frames()));
  const std::size_t n = h.nodes();
  Tensor<double> out({frames_out, n, n});
  for (std::size_t t = 0; t < frames_out; ++t) {
    Tensor<double> g = imp_gram(imp_operator(wf, h, t * step));
    if (normalized) g = normalize_gram(g);
    std::copy(g.data().begin(), g.data().end(), out.ptr() + t * n * n);
  }
  return out;
}

}  // namespace dhg
