#pragma once

// Independent reference computations used as test oracles. They follow the
// textbook formulas with dense matrices and plain loops and share no code
// with the library paths they check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dhg/hypergraph.hpp"
#include "dhg/rng.hpp"

namespace dhg::oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, std::vector<double>(c, 0.0)); }

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  Matrix c = zeros(a.size(), b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t = zeros(a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Matrix diagonal(const std::vector<double>& d) {
  Matrix m = zeros(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m[i][i] = d[i];
  return m;
}

inline double max_diff(const Matrix& a, const Tensor<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b(i, j)));
  return worst;
}

// Dense incidence from membership lists.
inline Matrix incidence_matrix(std::size_t n, const std::vector<std::vector<std::size_t>>& edges) {
  Matrix h = zeros(n, edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e)
    for (std::size_t v : edges[e]) h[v][e] = 1.0;
  return h;
}

// D_v^{-1/2} H W D_e^{-1} Hᵀ D_v^{-1/2} as a chain of dense products.
inline Matrix hypergraph_conv(std::size_t n, const std::vector<std::vector<std::size_t>>& edges,
                              const std::vector<double>& w) {
  const Matrix h = incidence_matrix(n, edges);
  std::vector<double> dv(n, 0.0), de(edges.size(), 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < edges.size(); ++e) dv[v] += w[e] * h[v][e];
  for (std::size_t e = 0; e < edges.size(); ++e)
    for (std::size_t v = 0; v < n; ++v) de[e] += h[v][e];
  std::vector<double> dv_is(n), de_inv(edges.size());
  for (std::size_t v = 0; v < n; ++v) dv_is[v] = 1.0 / std::sqrt(dv[v]);
  for (std::size_t e = 0; e < edges.size(); ++e) de_inv[e] = 1.0 / de[e];
  Matrix out = multiply(diagonal(dv_is), h);
  out = multiply(out, diagonal(w));
  out = multiply(out, diagonal(de_inv));
  out = multiply(out, transpose(h));
  return multiply(out, diagonal(dv_is));
}

// D̃^{-1/2} (A + I) D̃^{-1/2}
inline Matrix graph_conv(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix at = a;
  for (std::size_t i = 0; i < n; ++i) at[i][i] += 1.0;
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i] += at[i][j];
  for (double& v : d) v = 1.0 / std::sqrt(v);
  return multiply(multiply(diagonal(d), at), diagonal(d));
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  return ev;
}

inline Matrix to_matrix(const Tensor<double>& t) {
  Matrix m = zeros(t.shape()[0], t.shape()[1]);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) m[i][j] = t(i, j);
  return m;
}

// Random hypergraph with every node covered and weights in [0.1, 3].
inline Hypergraph random_hypergraph(std::mt19937_64& rng, std::size_t max_nodes = 25, std::size_t max_edges = 31) {
  std::uniform_int_distribution<std::size_t> nd(1, max_nodes), ed(1, max_edges);
  const std::size_t n = nd(rng), e = ed(rng);
  std::bernoulli_distribution member(0.3);
  std::uniform_int_distribution<std::size_t> pick_node(0, n - 1), pick_edge(0, e - 1);
  std::vector<std::vector<std::size_t>> edges(e);
  for (auto& edge : edges) {
    for (std::size_t v = 0; v < n; ++v)
      if (member(rng)) edge.push_back(v);
    if (edge.empty()) edge.push_back(pick_node(rng));
  }
  for (std::size_t v = 0; v < n; ++v) {
    bool covered = false;
    for (const auto& edge : edges) covered = covered || std::find(edge.begin(), edge.end(), v) != edge.end();
    if (!covered) edges[pick_edge(rng)].push_back(v);
  }
  std::uniform_real_distribution<double> wd(0.1, 3.0);
  std::vector<double> w(e);
  for (double& x : w) x = wd(rng);
  return Hypergraph::make(n, std::move(edges), std::move(w));
}

// Random symmetric 0/1 adjacency with zero diagonal.
inline GraphTopology random_graph(std::mt19937_64& rng, std::size_t n, double p = 0.2) {
  std::bernoulli_distribution link(p);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (link(rng)) edges.emplace_back(i, j);
  return GraphTopology::from_edges(n, edges);
}

// Euclidean distance of every ordered pair, each computed on its own.
inline Matrix pairwise_distances(const Tensor<double>& x) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Matrix out = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
      out[i][j] = std::sqrt(s);
    }
  return out;
}

// Neighbours of i by fully sorting (distance, index) pairs.
inline std::vector<std::size_t> sorted_neighbours(const Tensor<double>& dist, std::size_t i, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t j = 0; j < dist.shape()[0]; ++j)
    if (j != i) all.emplace_back(dist(i, j), j);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k; ++r) out.push_back(all[r].second);
  return out;
}

// Best 2-partition under the k-medoids objective, by enumerating every subset.
inline std::vector<std::vector<std::size_t>> best_two_partition(const Matrix& dist) {
  const std::size_t n = dist.size();
  auto cost = [&](const std::vector<std::size_t>& c) {
    double best = 1e300;
    for (std::size_t m : c) {
      double s = 0;
      for (std::size_t v : c) s += dist[v][m];
      best = std::min(best, s);
    }
    return best;
  };
  double best = 1e300;
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t mask = 1; mask + 1 < (std::size_t(1) << n); ++mask) {
    if (!(mask & 1)) continue;  // node 0 always in the first part
    std::vector<std::size_t> a, b;
    for (std::size_t v = 0; v < n; ++v) ((mask >> v) & 1 ? a : b).push_back(v);
    const double c = cost(a) + cost(b);
    if (c < best) best = c, out = {a, b};
  }
  return out;
}

}  // namespace dhg::oracle
