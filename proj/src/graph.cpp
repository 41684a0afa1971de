#include "edgemask/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace edgemask {

std::string_view to_string(EdgeOrigin origin) {
  switch (origin) {
    case EdgeOrigin::Original:
      return "original";
    case EdgeOrigin::Knn:
      return "knn";
    case EdgeOrigin::Spectral:
      return "spectral";
    case EdgeOrigin::SelfLoop:
      return "self_loop";
  }
  return "unknown";
}

EdgeOrigin origin_from_string(std::string_view name) {
  if (name == "original") return EdgeOrigin::Original;
  if (name == "knn") return EdgeOrigin::Knn;
  if (name == "spectral") return EdgeOrigin::Spectral;
  if (name == "self_loop") return EdgeOrigin::SelfLoop;
  throw GraphError("unknown edge origin '" + std::string(name) + "'");
}

std::vector<Edge> coalesce(std::vector<Edge> edges) {
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.src != b.src) return a.src < b.src;
    if (a.dst != b.dst) return a.dst < b.dst;
    return a.origin < b.origin;
  });
  // After the sort the first entry of each (src, dst) run carries the winning origin.
  auto last = std::unique(edges.begin(), edges.end(),
                          [](const Edge& a, const Edge& b) { return a.src == b.src && a.dst == b.dst; });
  edges.erase(last, edges.end());
  return edges;
}

Graph::Graph() : data_(std::make_shared<const Data>()) {}

Graph::Graph(Matrix features, std::vector<Edge> edges, std::vector<int> labels, std::size_t num_classes,
             std::string domain_id) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) {
    throw GraphError("label count " + std::to_string(labels.size()) + " does not match node count " +
                     std::to_string(n));
  }
  if (!features.allFinite()) throw GraphError("feature matrix contains non-finite entries");
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y != kUnlabeled && (y < 0 || static_cast<std::size_t>(y) >= num_classes)) {
      throw GraphError("label " + std::to_string(y) + " of node " + std::to_string(i) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }
  for (const Edge& e : edges) {
    if (e.src >= n || e.dst >= n) {
      throw GraphError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                       ") references a node outside [0, " + std::to_string(n) + ")");
    }
  }
  std::erase_if(edges, [](const Edge& e) { return e.src == e.dst; });

  auto data = std::make_shared<Data>();
  data->features = std::move(features);
  data->edges = coalesce(std::move(edges));
  data->labels = std::move(labels);
  data->num_classes = num_classes;
  data->domain_id = std::move(domain_id);
  data_ = std::move(data);
}

std::size_t Graph::num_labeled() const {
  return static_cast<std::size_t>(
      std::count_if(data_->labels.begin(), data_->labels.end(), [](int y) { return y != kUnlabeled; }));
}

Graph Graph::with_labels(std::vector<int> labels) const {
  return Graph(data_->features, data_->edges, std::move(labels), data_->num_classes, data_->domain_id);
}

Graph Graph::with_edges(std::vector<Edge> edges) const {
  return Graph(data_->features, std::move(edges), data_->labels, data_->num_classes, data_->domain_id);
}

void DomainDataset::validate() const {
  if (sources.empty()) throw GraphError("dataset has no source domains");
  const std::size_t d = sources.front().feature_dim();
  const std::size_t c = sources.front().num_classes();
  auto check = [&](const Graph& g) {
    if (g.feature_dim() != d) {
      throw GraphError("domain '" + g.domain_id() + "' has feature dimension " + std::to_string(g.feature_dim()) +
                       ", expected " + std::to_string(d));
    }
    if (g.num_classes() != c) {
      throw GraphError("domain '" + g.domain_id() + "' has " + std::to_string(g.num_classes()) +
                       " classes, expected " + std::to_string(c));
    }
  };
  for (const Graph& g : sources) check(g);
  if (target) check(*target);
}

EdgeOriginStats edge_stats(const Graph& before, std::span<const Edge> after) {
  EdgeOriginStats stats;
  for (const Edge& e : after) {
    switch (e.origin) {
      case EdgeOrigin::Original:
        ++stats.original;
        break;
      case EdgeOrigin::Knn:
        ++stats.knn;
        break;
      case EdgeOrigin::Spectral:
        ++stats.spectral;
        break;
      case EdgeOrigin::SelfLoop:
        ++stats.self_loop;
        break;
    }
  }
  stats.base_edges = before.num_edges();
  stats.enriched_edges = stats.total() - stats.self_loop;
  const double added = static_cast<double>(stats.enriched_edges) - static_cast<double>(stats.base_edges);
  if (stats.base_edges > 0) stats.increase_percent = 100.0 * added / static_cast<double>(stats.base_edges);
  if (before.num_nodes() > 0) stats.avg_degree_delta = added / static_cast<double>(before.num_nodes());
  return stats;
}

}  // namespace edgemask
