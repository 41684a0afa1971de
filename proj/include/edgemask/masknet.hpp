#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "edgemask/autodiff.hpp"
#include "edgemask/enrichment.hpp"
#include "edgemask/tensor.hpp"

namespace edgemask {

/// Per-edge scores aligned to an enriched edge list. Entries past `num_scored` belong to
/// self-loops and are fixed at 1.
struct EdgeMask {
  Vector values;
  std::size_t num_scored = 0;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  /// Mean over the scored (non-self-loop) entries; 0 when there are none.
  double scored_mean() const;

  static EdgeMask ones(std::size_t num_edges, std::size_t num_scored);
};

/// Adversary parameters: projection d -> d' then a two-layer MLP 2d' -> hidden -> 1.
struct MaskNetParams {
  Matrix proj_weight;    // d' x d
  Matrix proj_bias;      // 1 x d'
  Matrix hidden_weight;  // hidden x 2d'
  Matrix hidden_bias;    // 1 x hidden
  Matrix out_weight;     // 1 x hidden
  Matrix out_bias;       // 1 x 1

  std::size_t input_dim() const { return static_cast<std::size_t>(proj_weight.cols()); }
  std::size_t parameter_count() const;

  template <typename F>
  void for_each_tensor(F&& f) {
    f("mask.proj_weight", proj_weight);
    f("mask.proj_bias", proj_bias);
    f("mask.hidden_weight", hidden_weight);
    f("mask.hidden_bias", hidden_bias);
    f("mask.out_weight", out_weight);
    f("mask.out_bias", out_bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<MaskNetParams*>(this)->for_each_tensor(
        [&](std::string_view name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  /// Same shapes, all zeros.
  MaskNetParams zeros_like() const;
  friend bool operator==(const MaskNetParams&, const MaskNetParams&);
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
MaskNetParams init_masknet(std::size_t d, std::size_t d_prime, std::size_t hidden, Rng& rng);

/// MaskNet parameters bound to a tape.
struct MaskNetVars {
  ad::Var proj_weight, proj_bias, hidden_weight, hidden_bias, out_weight, out_bias;
};
MaskNetVars bind(ad::Tape& tape, const MaskNetParams& p, bool requires_grad);

/// Index arrays for the edge list, in the form the tape ops consume.
struct EdgeIndex {
  std::vector<Index> src;
  std::vector<Index> dst;
  Index num_nodes = 0;
  std::size_t num_scored = 0;

  static EdgeIndex from(const EnrichedGraph& g);
  static EdgeIndex from(std::span<const Edge> edges, std::size_t num_nodes, std::size_t num_scored);
  std::size_t num_edges() const { return src.size(); }
};

/// Scores of the scored edges as an (m' x 1) column on the tape.
ad::Var mask_scores(const MaskNetVars& p, ad::Var x, const EdgeIndex& edges);

/// Full mask column (scored entries followed by ones for self-loops).
ad::Var mask_column(const MaskNetVars& p, ad::Var x, const EdgeIndex& edges);

/// Evaluates the adversary: s_uv = sigmoid(g([relu(p(x_u)), relu(p(x_v))])).
EdgeMask mask_forward(const MaskNetParams& p, const Matrix& x, const EnrichedGraph& g);
EdgeMask mask_forward(const MaskNetParams& p, const Matrix& x, const EdgeIndex& edges);

/// CSV dump with header "src,dst,origin,s", one row per edge including self-loops.
void write_mask_csv(const EnrichedGraph& g, const EdgeMask& mask, const std::filesystem::path& file);

}  // namespace edgemask
