#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dhg/autograd.hpp"

namespace dhg {

// Hyperedges are sets of node indices; weights default to 1. Coverage (every
// node in some hyperedge) is not required here; operators that divide by node
// degree raise IsolatedNode instead.
struct Hypergraph {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::size_t>> edges;
  std::vector<double> weights;

  std::size_t num_edges() const { return edges.size(); }

  // Non-empty edges with distinct in-range members, one positive weight per edge.
  void validate() const;

  static Hypergraph make(std::size_t num_nodes, std::vector<std::vector<std::size_t>> edges,
                         std::vector<double> weights = {});
};

// Dense N×E membership matrix.
struct IncidenceMatrix {
  Tensor<double> h;

  std::size_t nodes() const { return h.shape()[0]; }
  std::size_t edges() const { return h.shape()[1]; }
};

IncidenceMatrix incidence(const Hypergraph& hg);

struct Degrees {
  std::vector<double> node;  // d(v) = Σ_e W(e) H[v, e]
  std::vector<double> edge;  // δ(e) = Σ_v H[v, e]
};

Degrees degrees(const Hypergraph& hg);

// D_v^{-1/2} H W D_e^{-1} Hᵀ D_v^{-1/2}, N×N, symmetric PSD.
Tensor<double> hconv_operator(const Hypergraph& hg);

// Pairwise skeleton graph: symmetric 0/1 adjacency with zero diagonal.
struct GraphTopology {
  Tensor<double> adjacency;

  void validate() const;
  static GraphTopology from_edges(std::size_t num_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges);
};

// D̃^{-1/2} (A + I) D̃^{-1/2}
Tensor<double> graph_operator(const GraphTopology& g);

// One hyperedge {u, v} per graph edge, unit weights.
Hypergraph two_uniform_hypergraph(const GraphTopology& g);

// Relabels node i as perm[i].
Hypergraph permute_nodes(const Hypergraph& hg, const std::vector<std::size_t>& perm);

// Pre-activation op · x · theta for node features x [N×C_in], theta [C_in×C_out].
template <typename T>
Var<T> hconv_forward(const Var<T>& x, const Var<T>& theta, const Tensor<T>& op);

// Config text: one hyperedge per line as comma-separated joint indices, '#' comments.
Hypergraph parse_hypergraph_config(const std::string& text, std::size_t num_nodes);
std::string format_hypergraph_config(const Hypergraph& hg);
Hypergraph static_skeleton_hypergraph(const std::filesystem::path& config_path, std::size_t num_nodes = 25);

}  // namespace dhg
