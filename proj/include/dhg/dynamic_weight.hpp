#pragma once

// Motion-driven joint importance: per-frame displacement, per-hyperedge
// normalized weights, the weighted incidence (Imp) and its Gram operator.

#include "dhg/hypergraph.hpp"
#include "dhg/skeleton.hpp"

namespace dhg {

// dis[t, i] = ‖x[t, i] − x[t−1, i]‖₂, dis[0, ·] = 0.  [T×N]
struct DisplacementField {
  Tensor<double> dis;

  std::size_t frames() const { return dis.shape()[0]; }
  std::size_t nodes() const { return dis.shape()[1]; }
};

DisplacementField displacement(const SkeletonSequence& seq, std::size_t person);
// coords [C, T, N] in channel-major layout (one person row of a model batch).
template <typename T>
DisplacementField displacement(const T* coords, std::size_t channels, std::size_t frames, std::size_t nodes);

enum class WeightMode { kRatio, kSoftmax };

// W_all [T×N×E], zero outside the incidence support.
struct DynamicWeightField {
  Tensor<double> w_all;

  std::size_t frames() const { return w_all.shape()[0]; }
  std::size_t nodes() const { return w_all.shape()[1]; }
  std::size_t edges() const { return w_all.shape()[2]; }
};

inline constexpr double kStationaryEps = 1e-8;

// kRatio: dis[t,i] / Σ_{j∈e} dis[t,j], falling back to 1/δ(e) when the sum is
// below eps. kSoftmax: exp(dis) normalized over the members of e.
DynamicWeightField joint_weights(const DisplacementField& dis, const Hypergraph& hg,
                                 WeightMode mode = WeightMode::kRatio, double eps = kStationaryEps);

// W_all[t] ⊙ H  [N×E]
Tensor<double> imp_operator(const DynamicWeightField& wf, const IncidenceMatrix& h, std::size_t t);

// Imp · Impᵀ  [N×N]
Tensor<double> imp_gram(const Tensor<double>& imp);

// D^{-1/2} G D^{-1/2} with D the row sums of G; zero rows stay zero.
Tensor<double> normalize_gram(const Tensor<double>& g);

// Pre-activation (Imp·Impᵀ)·x·theta for node features x [N×C_in].
template <typename T>
Var<T> weighted_hconv_forward(const Var<T>& x, const Var<T>& theta, const Tensor<double>& imp);

// Stacked Gram operators for frames 0, step, 2·step, ... : [frames_out, N, N].
Tensor<double> frame_gram_operators(const DynamicWeightField& wf, const IncidenceMatrix& h, std::size_t frames_out,
                                    std::size_t step, bool normalized);

}  // namespace dhg
