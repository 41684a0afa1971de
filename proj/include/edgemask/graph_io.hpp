#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "edgemask/graph.hpp"

namespace edgemask {

/// Parse failure carrying the offending file and 1-based line (0 when not line-specific).
class ParseError : public GraphError {
 public:
  ParseError(const std::filesystem::path& file, std::size_t line, const std::string& what);

  const std::filesystem::path& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::filesystem::path file_;
  std::size_t line_;
};

/// Loads a graph from three text files:
///   features: one row per node, d decimals separated by commas or whitespace;
///   edges:    one undirected pair "src dst" per line, zero-based;
///   labels:   one integer per line, -1 for unlabeled.
/// Every undirected pair becomes two directed Original edges. When `num_classes` is not given it
/// is one past the largest label.
Graph load_dataset(const std::filesystem::path& feature_file, const std::filesystem::path& edge_file,
                   const std::filesystem::path& label_file, std::string domain_id,
                   std::optional<std::size_t> num_classes = std::nullopt);

/// Writes the three text files read by load_dataset. Each directed pair is written once as an
/// undirected line, so only symmetric graphs round-trip through this format.
void write_dataset(const Graph& g, const std::filesystem::path& feature_file, const std::filesystem::path& edge_file,
                   const std::filesystem::path& label_file);

/// Single-file JSON graph ("edgemask-graph", version 1):
///   { "format", "version", "domain_id", "num_nodes", "feature_dim", "num_classes",
///     "features": [[...], ...], "labels": [...], "edges": [[src, dst, origin], ...] }
/// Doubles are written in shortest round-trip form, so save/load is bit-exact.
void save_graph(const Graph& g, const std::filesystem::path& file);
Graph load_graph(const std::filesystem::path& file);

std::string graph_to_json_text(const Graph& g);
Graph graph_from_json_text(std::string_view text, const std::filesystem::path& origin = "<memory>");

/// Observer notified with "read:<path>" for every graph file opened and with any marker passed
/// to audit_event(). Used by tests to check which files a workflow touches and when.
using AuditObserver = std::function<void(const std::string& event)>;
void set_audit_observer(AuditObserver observer);
void audit_event(const std::string& event);

}  // namespace edgemask
