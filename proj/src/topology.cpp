#include "dhg/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dhg {

void TopologyParams::validate(std::size_t num_nodes) const {
  require(k_n >= 1 && k_n < num_nodes, ErrorCode::kConfigError,
          "k_n = " + std::to_string(k_n) + " must lie in [1, " + std::to_string(num_nodes) + ")");
  require(k_m >= 1 && k_m <= num_nodes, ErrorCode::kConfigError,
          "k_m = " + std::to_string(k_m) + " must lie in [1, " + std::to_string(num_nodes) + "]");
  require(kmeans_max_iter >= 1, ErrorCode::kConfigError, "kmeans_max_iter must be positive");
  require(frame_stride >= 1, ErrorCode::kConfigError, "topology frame stride must be positive");
}

template <typename T>
Var<T> embed_frame(const Var<T>& f_in, const Var<T>& w_map) {
  return ops::relu(ops::matmul(f_in, w_map));
}

template Var<float> embed_frame<float>(const Var<float>&, const Var<float>&);
template Var<double> embed_frame<double>(const Var<double>&, const Var<double>&);

Tensor<double> pairwise_dist(const Tensor<double>& x) {
  require(x.rank() == 2, ErrorCode::kShapeMismatch, "pairwise_dist needs [N×d], got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor<double> out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      out(i, j) = out(j, i) = std::sqrt(s);
    }
  return out;
}

std::vector<std::vector<std::size_t>> knn_hyperedges(const Tensor<double>& dist, std::size_t k_n) {
  const std::size_t n = dist.shape()[0];
  require(k_n >= 1 && k_n < n, ErrorCode::kConfigError, "k_n must lie in [1, N)");
  std::vector<std::vector<std::size_t>> edges(n);
  std::vector<std::size_t> order(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order[c++] = j;
    auto closer = [&](std::size_t a, std::size_t b) {
      return dist(i, a) < dist(i, b) || (dist(i, a) == dist(i, b) && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + k_n, order.end(), closer);
    edges[i].push_back(i);
    edges[i].insert(edges[i].end(), order.begin(), order.begin() + k_n);
  }
  return edges;
}

namespace {

double unit_draw(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

std::vector<std::size_t> seed_medoids(const Tensor<double>& dist, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = dist.shape()[0];
  std::vector<std::size_t> medoids{std::size_t(rng() % n)};
  std::vector<double> nearest(n);
  std::vector<bool> chosen(n, false);
  chosen[medoids[0]] = true;
  for (std::size_t v = 0; v < n; ++v) nearest[v] = dist(v, medoids[0]);
  while (medoids.size() < k) {
    double total = 0;
    for (std::size_t v = 0; v < n; ++v)
      if (!chosen[v]) total += nearest[v] * nearest[v];
    std::size_t pick = n;
    if (total > 0) {
      double r = unit_draw(rng) * total;
      for (std::size_t v = 0; v < n; ++v) {
        if (chosen[v] || nearest[v] == 0.0) continue;
        pick = v;
        r -= nearest[v] * nearest[v];
        if (r < 0) break;
      }
    } else {
      std::size_t r = rng() % (n - medoids.size());
      for (std::size_t v = 0; v < n; ++v)
        if (!chosen[v] && r-- == 0) {
          pick = v;
          break;
        }
    }
    chosen[pick] = true;
    medoids.push_back(pick);
    for (std::size_t v = 0; v < n; ++v) nearest[v] = std::min(nearest[v], dist(v, pick));
  }
  return medoids;
}

}  // namespace

KMedoidsResult kmedoids(const Tensor<double>& x, std::size_t k_m, std::size_t max_iter, std::uint64_t seed) {
  const Tensor<double> dist = pairwise_dist(x);
  const std::size_t n = dist.shape()[0];
  require(k_m >= 1 && k_m <= n, ErrorCode::kConfigError, "k_m must lie in [1, N]");
  std::mt19937_64 rng(seed);
  KMedoidsResult r;
  r.medoids = seed_medoids(dist, k_m, rng);
  r.assignment.assign(n, 0);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    r.iterations = iter + 1;
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k_m; ++c)
        if (dist(v, r.medoids[c]) < dist(v, r.medoids[best])) best = c;
      r.assignment[v] = best;
    }
    // A medoid always sits in its own cluster unless duplicates tie it to a
    // lower cluster, which can leave clusters empty.
    std::vector<std::size_t> sizes(k_m, 0);
    for (std::size_t a : r.assignment) ++sizes[a];
    for (std::size_t c = 0; c < k_m; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t v = 0; v < n; ++v) {
        if (sizes[r.assignment[v]] < 2) continue;
        if (far == n || dist(v, r.medoids[r.assignment[v]]) > dist(far, r.medoids[r.assignment[far]])) far = v;
      }
      --sizes[r.assignment[far]];
      r.assignment[far] = c;
      r.medoids[c] = far;
      sizes[c] = 1;
    }
    double objective = 0;
    for (std::size_t v = 0; v < n; ++v) objective += dist(v, r.medoids[r.assignment[v]]);
    r.objective.push_back(objective);

    std::vector<std::size_t> next(k_m);
    for (std::size_t c = 0; c < k_m; ++c) {
      double best_cost = 0;
      std::size_t best = n;
      for (std::size_t v = 0; v < n; ++v) {
        if (r.assignment[v] != c) continue;
        double cost = 0;
        for (std::size_t u = 0; u < n; ++u)
          if (r.assignment[u] == c) cost += dist(v, u);
        if (best == n || cost < best_cost) best = v, best_cost = cost;
      }
      // Keep the current medoid on exact ties so the loop settles.
      double current = 0;
      for (std::size_t u = 0; u < n; ++u)
        if (r.assignment[u] == c) current += dist(r.medoids[c], u);
      next[c] = current <= best_cost ? r.medoids[c] : best;
    }
    if (next == r.medoids) break;
    r.medoids = std::move(next);
  }

  r.clusters.assign(k_m, {});
  for (std::size_t v = 0; v < n; ++v) r.clusters[r.assignment[v]].push_back(v);
  return r;
}

std::vector<std::vector<std::size_t>> kmeans_hyperedges(const Tensor<double>& x, std::size_t k_m,
                                                        std::size_t max_iter, std::uint64_t seed) {
  return kmedoids(x, k_m, max_iter, seed).clusters;
}

Hypergraph dynamic_hypergraph(const Tensor<double>& features, const TopologyParams& params, std::uint64_t seed) {
  const std::size_t n = features.shape()[0];
  params.validate(n);
  auto edges = knn_hyperedges(pairwise_dist(features), params.k_n);
  for (auto& cluster : kmeans_hyperedges(features, params.k_m, params.kmeans_max_iter, seed))
    edges.push_back(std::move(cluster));
  return Hypergraph::make(n, std::move(edges));
}

Hypergraph dynamic_hypergraph(const Tensor<double>& f_in, const Tensor<double>& w_map, const TopologyParams& params) {
  Tape<double> tape(Tape<double>::Mode::kNoGrad);
  const Tensor<double> x = embed_frame(tape.constant(f_in), tape.constant(w_map)).value();
  return dynamic_hypergraph(x, params, params.seed);
}

}  // namespace dhg
