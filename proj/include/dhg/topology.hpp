#pragma once

// Per-frame dynamic hypergraphs: K-NN hyperedges around every joint plus a
// k-medoids partition of the joints, both in a learned embedding space.

#include <cstdint>
#include <vector>

#include "dhg/hypergraph.hpp"

namespace dhg {

enum class TopologySpace { kEmbedded, kRaw };

struct TopologyParams {
  std::size_t k_n = 3;
  std::size_t k_m = 4;
  std::size_t kmeans_max_iter = 32;
  std::uint64_t seed = 0;
  std::size_t frame_stride = 1;  // recompute every s frames, reuse in between
  TopologySpace space = TopologySpace::kEmbedded;

  // 1 <= k_n < N, 1 <= k_m <= N
  void validate(std::size_t num_nodes) const;
};

// ReLU(f_in · W_map): f_in [N×C], W_map [C×d] -> [N×d]
template <typename T>
Var<T> embed_frame(const Var<T>& f_in, const Var<T>& w_map);

// Euclidean distances between the rows of x [N×d].
Tensor<double> pairwise_dist(const Tensor<double>& x);

// Hyperedge i = {i} followed by the k_n nearest other nodes, nearest first,
// ties to the lower index.
std::vector<std::vector<std::size_t>> knn_hyperedges(const Tensor<double>& dist, std::size_t k_n);

struct KMedoidsResult {
  std::vector<std::vector<std::size_t>> clusters;  // ascending members
  std::vector<std::size_t> medoids;
  std::vector<std::size_t> assignment;
  std::vector<double> objective;  // Σ distance to assigned medoid, per iteration
  std::size_t iterations = 0;
};

// k-medoids over the rows of x: D²-weighted seeded initial medoids, nearest
// medoid assignment (ties to the lower cluster), medoid = member with the
// smallest summed distance to its cluster (ties to the lower index). An empty
// cluster takes the point farthest from its medoid.
KMedoidsResult kmedoids(const Tensor<double>& x, std::size_t k_m, std::size_t max_iter, std::uint64_t seed);

std::vector<std::vector<std::size_t>> kmeans_hyperedges(const Tensor<double>& x, std::size_t k_m,
                                                        std::size_t max_iter, std::uint64_t seed);

// K-NN edges (N of size k_n + 1) followed by k_m cluster edges, unit weights.
Hypergraph dynamic_hypergraph(const Tensor<double>& features, const TopologyParams& params, std::uint64_t seed);
Hypergraph dynamic_hypergraph(const Tensor<double>& f_in, const Tensor<double>& w_map, const TopologyParams& params);

}  // namespace dhg
