#include "edgemask/metrics.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "edgemask/graph.hpp"

namespace edgemask {

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Metrics score(std::span<const int> predictions, std::span<const int> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("score: length mismatch");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y == kUnlabeled) continue;
    const int p = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes || p < 0 || static_cast<std::size_t>(p) >= num_classes) {
      throw std::out_of_range("score: class id outside range");
    }
    ++total;
    if (p == y) {
      ++correct;
      ++tp[static_cast<std::size_t>(y)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(y)];
    }
  }
  if (total == 0) throw std::invalid_argument("score: no labeled nodes");

  Metrics m;
  m.evaluated = total;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  // Single-label multi-class: pooled precision = pooled recall = accuracy.
  m.micro_f1 = m.accuracy;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  m.macro_f1 = num_classes > 0 ? f1_sum / static_cast<double>(num_classes) : 0.0;
  return m;
}

AggregateMetrics aggregate(std::span<const DomainMetrics> per_domain) {
  AggregateMetrics a;
  if (per_domain.empty()) return a;
  a.worst_micro_f1 = std::numeric_limits<double>::infinity();
  a.worst_macro_f1 = std::numeric_limits<double>::infinity();
  for (const DomainMetrics& d : per_domain) {
    a.worst_micro_f1 = std::min(a.worst_micro_f1, d.metrics.micro_f1);
    a.worst_macro_f1 = std::min(a.worst_macro_f1, d.metrics.macro_f1);
    a.mean_micro_f1 += d.metrics.micro_f1;
    a.mean_macro_f1 += d.metrics.macro_f1;
  }
  a.mean_micro_f1 /= static_cast<double>(per_domain.size());
  a.mean_macro_f1 /= static_cast<double>(per_domain.size());
  return a;
}

MaskStats mask_statistics(const EnrichedGraph& g, const EdgeMask& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("mask_statistics: threshold outside (0, 1)");
  if (mask.size() != g.num_edges()) throw std::invalid_argument("mask_statistics: mask length mismatch");
  MaskStats st;
  st.threshold = threshold;
  std::size_t pruned_orig = 0, pruned_aug = 0;
  for (std::size_t e = 0; e < g.num_scored(); ++e) {
    const bool pruned = mask.values(static_cast<Index>(e)) < threshold;
    if (g.edges[e].origin == EdgeOrigin::Original) {
      ++st.original_edges;
      pruned_orig += pruned;
    } else {
      ++st.augmented_edges;
      pruned_aug += pruned;
    }
  }
  if (st.original_edges > 0) {
    st.pruned_original = 100.0 * static_cast<double>(pruned_orig) / static_cast<double>(st.original_edges);
  }
  if (st.augmented_edges > 0) {
    st.pruned_augmented = 100.0 * static_cast<double>(pruned_aug) / static_cast<double>(st.augmented_edges);
    st.retained_augmented = 100.0 - *st.pruned_augmented;
  }
  return st;
}

}  // namespace edgemask
