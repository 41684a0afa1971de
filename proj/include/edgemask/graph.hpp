#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "edgemask/tensor.hpp"

namespace edgemask {

/// Where an edge came from. Lower values win when duplicates are coalesced.
enum class EdgeOrigin : std::uint8_t { Original = 0, Knn = 1, Spectral = 2, SelfLoop = 3 };

std::string_view to_string(EdgeOrigin origin);
EdgeOrigin origin_from_string(std::string_view name);

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  EdgeOrigin origin = EdgeOrigin::Original;

  friend bool operator==(const Edge&, const Edge&) = default;
};

inline constexpr int kUnlabeled = -1;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sorts by (src, dst) and drops duplicate pairs, keeping the highest-precedence origin
/// (Original > Knn > Spectral).
std::vector<Edge> coalesce(std::vector<Edge> edges);

/// Immutable attributed graph. Copies share the underlying storage.
///
/// Edges are directed, sorted by (src, dst) and free of duplicates. Self-pairs in the input
/// are dropped; self-loops are managed by enrichment, which appends them explicitly.
class Graph {
 public:
  Graph();
  Graph(Matrix features, std::vector<Edge> edges, std::vector<int> labels, std::size_t num_classes,
        std::string domain_id);

  std::size_t num_nodes() const { return static_cast<std::size_t>(data_->features.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(data_->features.cols()); }
  std::size_t num_classes() const { return data_->num_classes; }
  std::size_t num_edges() const { return data_->edges.size(); }
  std::size_t num_labeled() const;

  const Matrix& features() const { return data_->features; }
  std::span<const Edge> edges() const { return data_->edges; }
  std::span<const int> labels() const { return data_->labels; }
  const std::string& domain_id() const { return data_->domain_id; }

  Graph with_labels(std::vector<int> labels) const;
  Graph with_edges(std::vector<Edge> edges) const;

 private:
  struct Data {
    Matrix features;
    std::vector<Edge> edges;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::string domain_id;
  };
  std::shared_ptr<const Data> data_;
};

struct DomainDataset {
  std::vector<Graph> sources;
  std::optional<Graph> target;

  /// Throws GraphError when graphs disagree on feature dimension or class count.
  void validate() const;
};

struct EdgeOriginStats {
  std::size_t original = 0;
  std::size_t knn = 0;
  std::size_t spectral = 0;
  std::size_t self_loop = 0;
  std::size_t base_edges = 0;
  std::size_t enriched_edges = 0;  // excludes self-loops
  std::optional<double> increase_percent;  // empty when the base graph has no edges
  double avg_degree_delta = 0.0;

  std::size_t total() const { return original + knn + spectral + self_loop; }
};

/// Edge accounting for an edge list derived from `before`. Self-loops are counted per origin
/// but excluded from the increase figures.
EdgeOriginStats edge_stats(const Graph& before, std::span<const Edge> after);

}  // namespace edgemask
