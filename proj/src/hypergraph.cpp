#include "dhg/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dhg {

void Hypergraph::validate() const {
  require(num_nodes > 0, ErrorCode::kConfigError, "hypergraph without nodes");
  require(weights.size() == edges.size(), ErrorCode::kConfigError,
          std::to_string(weights.size()) + " weights for " + std::to_string(edges.size()) + " hyperedges");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    require(!edges[e].empty(), ErrorCode::kConfigError, "hyperedge " + std::to_string(e) + " is empty");
    std::vector<std::size_t> sorted = edges[e];
    std::sort(sorted.begin(), sorted.end());
    require(sorted.back() < num_nodes, ErrorCode::kConfigError,
            "hyperedge " + std::to_string(e) + " references node " + std::to_string(sorted.back()) + " of " +
                std::to_string(num_nodes));
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::kConfigError,
            "hyperedge " + std::to_string(e) + " lists a node twice");
    require(weights[e] > 0.0 && std::isfinite(weights[e]), ErrorCode::kConfigError,
            "hyperedge " + std::to_string(e) + " weight must be positive");
  }
}

Hypergraph Hypergraph::make(std::size_t num_nodes, std::vector<std::vector<std::size_t>> edges,
                            std::vector<double> weights) {
  Hypergraph hg;
  hg.num_nodes = num_nodes;
  if (weights.empty()) weights.assign(edges.size(), 1.0);
  hg.edges = std::move(edges);
  hg.weights = std::move(weights);
  hg.validate();
  return hg;
}

IncidenceMatrix incidence(const Hypergraph& hg) {
  IncidenceMatrix m{Tensor<double>({hg.num_nodes, std::max<std::size_t>(hg.num_edges(), 1)})};
  require(hg.num_edges() > 0, ErrorCode::kIsolatedNode, "hypergraph has no hyperedges");
  for (std::size_t e = 0; e < hg.num_edges(); ++e)
    for (std::size_t v : hg.edges[e]) m.h(v, e) = 1.0;
  return m;
}

Degrees degrees(const Hypergraph& hg) {
  Degrees d{std::vector<double>(hg.num_nodes, 0.0), std::vector<double>(hg.num_edges(), 0.0)};
  for (std::size_t e = 0; e < hg.num_edges(); ++e) {
    d.edge[e] = static_cast<double>(hg.edges[e].size());
    for (std::size_t v : hg.edges[e]) d.node[v] += hg.weights[e];
  }
  return d;
}

Tensor<double> hconv_operator(const Hypergraph& hg) {
  const Degrees deg = degrees(hg);
  const std::size_t n = hg.num_nodes;
  std::vector<double> inv_sqrt(n);
  for (std::size_t v = 0; v < n; ++v) {
    require(deg.node[v] > 0.0, ErrorCode::kIsolatedNode, "node " + std::to_string(v) + " belongs to no hyperedge");
    inv_sqrt[v] = 1.0 / std::sqrt(deg.node[v]);
  }
  Tensor<double> op({n, n});
  for (std::size_t e = 0; e < hg.num_edges(); ++e) {
    const double w = hg.weights[e] / deg.edge[e];
    for (std::size_t i : hg.edges[e])
      for (std::size_t j : hg.edges[e]) op(i, j) += w;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) op(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return op;
}

void GraphTopology::validate() const {
  require(adjacency.rank() == 2 && adjacency.shape()[0] == adjacency.shape()[1], ErrorCode::kShapeMismatch,
          "adjacency must be square");
  const std::size_t n = adjacency.shape()[0];
  for (std::size_t i = 0; i < n; ++i) {
    require(adjacency(i, i) == 0.0, ErrorCode::kConfigError, "adjacency diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      require(adjacency(i, j) == adjacency(j, i), ErrorCode::kConfigError, "adjacency must be symmetric");
      require(adjacency(i, j) == 0.0 || adjacency(i, j) == 1.0, ErrorCode::kConfigError, "adjacency must be 0/1");
    }
  }
}

GraphTopology GraphTopology::from_edges(std::size_t num_nodes,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  GraphTopology g{Tensor<double>({num_nodes, num_nodes})};
  for (auto [u, v] : edges) {
    require(u < num_nodes && v < num_nodes && u != v, ErrorCode::kConfigError, "bad graph edge");
    g.adjacency(u, v) = g.adjacency(v, u) = 1.0;
  }
  return g;
}

Tensor<double> graph_operator(const GraphTopology& g) {
  g.validate();
  const std::size_t n = g.adjacency.shape()[0];
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;  // self loop from Ã = A + I
    for (std::size_t j = 0; j < n; ++j) d += g.adjacency(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  Tensor<double> op({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      op(i, j) = (g.adjacency(i, j) + (i == j ? 1.0 : 0.0)) * inv_sqrt[i] * inv_sqrt[j];
  return op;
}

Hypergraph two_uniform_hypergraph(const GraphTopology& g) {
  g.validate();
  const std::size_t n = g.adjacency.shape()[0];
  std::vector<std::vector<std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (g.adjacency(i, j) != 0.0) edges.push_back({i, j});
  return Hypergraph::make(n, std::move(edges));
}

Hypergraph permute_nodes(const Hypergraph& hg, const std::vector<std::size_t>& perm) {
  require(perm.size() == hg.num_nodes, ErrorCode::kShapeMismatch, "permutation length");
  Hypergraph out = hg;
  for (auto& edge : out.edges)
    for (auto& v : edge) v = perm[v];
  out.validate();
  return out;
}

template <typename T>
Var<T> hconv_forward(const Var<T>& x, const Var<T>& theta, const Tensor<T>& op) {
  require(x.value().rank() == 2 && op.rank() == 2 && op.shape()[1] == x.shape()[0], ErrorCode::kShapeMismatch,
          "hconv_forward: operator " + shape_str(op.shape()) + " for features " + shape_str(x.shape()));
  Tape<T>& tape = x.tape();
  return ops::matmul(ops::matmul(tape.constant(op), x), theta);
}

template Var<float> hconv_forward<float>(const Var<float>&, const Var<float>&, const Tensor<float>&);
template Var<double> hconv_forward<double>(const Var<double>&, const Var<double>&, const Tensor<double>&);

Hypergraph parse_hypergraph_config(const std::string& text, std::size_t num_nodes) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::size_t>> edges;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::size_t> edge;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      const std::string tok = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      require(!tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }),
              ErrorCode::kConfigError, "hypergraph config line " + std::to_string(lineno) + ": bad index '" + cell + "'");
      const unsigned long v = std::stoul(tok);
      edge.push_back(v);
    }
    edges.push_back(std::move(edge));
  }
  require(!edges.empty(), ErrorCode::kConfigError, "hypergraph config lists no hyperedges");
  return Hypergraph::make(num_nodes, std::move(edges));
}

std::string format_hypergraph_config(const Hypergraph& hg) {
  std::ostringstream os;
  for (const auto& edge : hg.edges) {
    for (std::size_t i = 0; i < edge.size(); ++i) os << (i ? "," : "") << edge[i];
    os << '\n';
  }
  return os.str();
}

Hypergraph static_skeleton_hypergraph(const std::filesystem::path& config_path, std::size_t num_nodes) {
  std::ifstream in(config_path);
  require(static_cast<bool>(in), ErrorCode::kConfigError, "cannot open hypergraph config " + config_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_hypergraph_config(buf.str(), num_nodes);
}

}  // namespace dhg
