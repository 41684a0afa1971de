#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "edgemask/graph.hpp"
#include "edgemask/tensor.hpp"

namespace edgemask {

struct EnrichConfig {
  std::size_t k = 10;
  std::size_t clusters = 100;
  double gamma_knn = 0.1;
  double gamma_spec = 0.1;
  std::optional<double> bandwidth;  // RBF width; empty selects the median pairwise distance
  bool add_self_loops = true;
  std::size_t dense_node_cap = 5000;
  std::size_t kmeans_max_iter = 100;

  /// Throws std::invalid_argument on an out-of-range field.
  void validate() const;
};

/// Original edges plus sampled feature-derived edges, coalesced, with one self-loop per node
/// appended at the tail when enabled.
struct EnrichedGraph {
  Graph base;
  std::vector<Edge> edges;
  std::size_t self_loop_begin = 0;  // first self-loop index; equals edges.size() when there are none

  std::size_t num_edges() const { return edges.size(); }
  std::size_t num_scored() const { return self_loop_begin; }
  std::size_t num_nodes() const { return base.num_nodes(); }
};

/// Graph carrying exactly the base edges and self-loops, for the no-augmentation configuration.
EnrichedGraph plain_enriched(const Graph& g, bool add_self_loops = true);

EdgeOriginStats edge_stats(const EnrichedGraph& enriched);

/// Directed edges (i, j) to the k most cosine-similar peers of each node i. Ties go to the lower
/// index; a zero-norm row has similarity 0 to every node.
std::vector<Edge> knn_edges(const Matrix& x, std::size_t k);

/// Cluster assignment from normalized spectral clustering of the feature rows: RBF affinity,
/// L_sym eigenvectors of the `clusters` smallest eigenvalues, row-normalized embedding, seeded
/// k-means++. Identical feature rows always share a cluster.
std::vector<std::size_t> spectral_assignments(const Matrix& x, std::size_t clusters, std::optional<double> bandwidth,
                                              Rng& rng, std::size_t dense_node_cap = 5000,
                                              std::size_t kmeans_max_iter = 100);

/// All directed intra-cluster pairs (i, j), i != j, of spectral_assignments.
std::vector<Edge> spectral_edges(const Matrix& x, std::size_t clusters, std::optional<double> bandwidth, Rng& rng,
                                 std::size_t dense_node_cap = 5000, std::size_t kmeans_max_iter = 100);

/// Uniform sample without replacement of floor(ratio * edges.size()) edges, in input order.
std::vector<Edge> sample_edges(std::span<const Edge> edges, double ratio, Rng& rng);

/// Seeded k-means with k-means++ initialisation. Empty clusters are re-seeded from the point
/// farthest from its centre. Returns per-row assignments.
std::vector<std::size_t> kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t max_iter = 100);

/// Full kNN and spectral edge sets for one graph, computed once and re-sampled per epoch.
class EnrichmentCache {
 public:
  /// Only the sets with a non-zero sampling ratio are computed.
  EnrichmentCache(const Graph& g, const EnrichConfig& cfg, Rng& rng);

  const Graph& graph() const { return graph_; }
  std::span<const Edge> knn() const { return knn_; }
  std::span<const Edge> spectral() const { return spectral_; }

  /// Draws a fresh sample with the configured ratios.
  EnrichedGraph sample(Rng& rng) const;
  /// Uses every precomputed edge (ratio 1 for each non-empty set), without touching an rng.
  EnrichedGraph full() const;

 private:
  EnrichedGraph assemble(std::vector<Edge> extra) const;

  Graph graph_;
  EnrichConfig cfg_;
  std::vector<Edge> knn_;
  std::vector<Edge> spectral_;
};

/// One-shot enrichment: precompute then sample.
EnrichedGraph enrich(const Graph& g, const EnrichConfig& cfg, Rng& rng);

}  // namespace edgemask
