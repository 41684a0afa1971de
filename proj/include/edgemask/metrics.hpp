#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgemask/enrichment.hpp"
#include "edgemask/masknet.hpp"
#include "edgemask/tensor.hpp"

namespace edgemask {

struct Metrics {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t evaluated = 0;
};

/// Argmax per row; ties go to the lower class index.
std::vector<int> predict(const Matrix& logits);

/// Scores predictions against labels, skipping unlabeled nodes. Macro-F1 averages over all
/// `num_classes` classes, with F1 = 0 for a class that is neither predicted nor present.
Metrics score(std::span<const int> predictions, std::span<const int> labels, std::size_t num_classes);

struct DomainMetrics {
  std::string domain;
  Metrics metrics;
};

struct AggregateMetrics {
  double worst_micro_f1 = 0.0;
  double mean_micro_f1 = 0.0;
  double worst_macro_f1 = 0.0;
  double mean_macro_f1 = 0.0;
};

AggregateMetrics aggregate(std::span<const DomainMetrics> per_domain);

/// Percentages of scored edges with s below the threshold, split by origin.
struct MaskStats {
  double threshold = 0.5;
  std::optional<double> pruned_original;   // empty when there are no original edges
  std::optional<double> pruned_augmented;  // kNN and spectral edges; empty when none
  std::optional<double> retained_augmented;
  std::size_t original_edges = 0;
  std::size_t augmented_edges = 0;
};

MaskStats mask_statistics(const EnrichedGraph& g, const EdgeMask& mask, double threshold = 0.5);

}  // namespace edgemask
