#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "edgemask/enrichment.hpp"
#include "edgemask/graph.hpp"

namespace edgemask {

/// Multi-domain family: features and labels follow one shared class-conditional Gaussian model;
/// edges are a homophilous backbone shared by every domain plus domain-specific spurious wiring.
struct SynthConfig {
  std::size_t nodes_per_domain = 120;
  std::size_t classes = 3;
  std::size_t feature_dim = 8;
  double separation = 3.0;      // norm of each class centre
  double feature_noise = 1.0;   // per-coordinate standard deviation
  double backbone_degree = 3.0; // mean backbone edges per node
  double homophily = 0.9;       // share of backbone edges inside a class
  double spurious_degree = 4.0; // mean spurious edges per node at strength 1
  // One strength per domain, in [0, 1]. Each domain also draws its own class pairing.
  std::vector<double> spurious_strength{0.3, 0.7, 1.0};
  std::uint64_t seed = 0;

  std::size_t num_domains() const { return spurious_strength.size(); }
  void validate() const;
};

/// One graph per domain, all in `sources`, with ids "domain0", "domain1", ...
DomainDataset generate(const SynthConfig& cfg);

struct ShiftReport {
  std::vector<double> homophily;  // per domain, share of edges joining same-class nodes
  double degree_distance = 0.0;   // max pairwise total-variation distance of degree histograms
  double feature_distance = 0.0;  // max pairwise mean absolute standardized mean difference
};

/// Structural and feature shift between every domain in `ds` (sources, then the target if any).
ShiftReport verify_shift(const DomainDataset& ds);

/// Small random enriched graph for gradient checks: Gaussian features, balanced labels and
/// `edges` distinct directed non-self pairs whose origins cycle through original, kNN and
/// spectral, followed by one self-loop per node.
EnrichedGraph tiny_enriched_graph(std::uint64_t seed, std::size_t nodes, std::size_t edges, std::size_t feature_dim,
                                  std::size_t classes);

}  // namespace edgemask
