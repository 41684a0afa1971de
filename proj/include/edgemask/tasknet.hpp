#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "edgemask/autodiff.hpp"
#include "edgemask/masknet.hpp"
#include "edgemask/tensor.hpp"

namespace edgemask {

enum class Activation { Elu, Relu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct TaskNetConfig {
  std::size_t layers = 2;
  std::size_t heads = 8;
  std::size_t head_dim = 64;
  Activation activation = Activation::Elu;
  double attn_dropout = 0.6;
  double feat_dropout = 0.5;
  double leaky_slope = 0.2;

  void validate() const;
};

/// One GAT layer. Head k owns rows [k*d_h, (k+1)*d_h) of `weight` and row k of `attention`,
/// whose columns are laid out as [target block (d_h) | neighbour block (d_h) | mask weight slot].
struct GatLayerParams {
  Matrix weight;       // (H*d_h) x d_in
  Matrix attention;    // H x (2*d_h + 1)
  Matrix mask_weight;  // H x 1, the scalar w per head
};

struct TaskNetParams {
  std::vector<GatLayerParams> layers;
  Matrix output;  // C x d_h

  std::size_t heads() const { return static_cast<std::size_t>(layers.front().attention.rows()); }
  std::size_t head_dim() const { return static_cast<std::size_t>((layers.front().attention.cols() - 1) / 2); }
  std::size_t num_classes() const { return static_cast<std::size_t>(output.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t parameter_count() const;

  template <typename F>
  void for_each_tensor(F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "task.layer" + std::to_string(l) + ".";
      f(prefix + "weight", layers[l].weight);
      f(prefix + "attention", layers[l].attention);
      f(prefix + "mask_weight", layers[l].mask_weight);
    }
    f(std::string("task.output"), output);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<TaskNetParams*>(this)->for_each_tensor(
        [&](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  TaskNetParams zeros_like() const;
  friend bool operator==(const TaskNetParams&, const TaskNetParams&);
};

/// Glorot-uniform weights and attention vectors, mask weights 1.
TaskNetParams init_tasknet(std::size_t d, std::size_t num_classes, const TaskNetConfig& cfg, Rng& rng);

struct GatLayerVars {
  ad::Var weight, attention, mask_weight;
};
struct TaskNetVars {
  std::vector<GatLayerVars> layers;
  ad::Var output;
};
TaskNetVars bind(ad::Tape& tape, const TaskNetParams& p, bool requires_grad);

/// Intermediate values of one layer, for inspection.
struct GatLayerTrace {
  Matrix attention;  // m x H, post-softmax and pre-dropout
  Matrix messages;   // m x (H*d_h), s_uv * alpha_uv * z_v per edge
};

/// Mask-aware attention layer. Intermediate layers return concatenated heads (n x H*d_h) after
/// the activation; the final layer returns the head average (n x d_h). A non-null
/// `dropout_rng` enables attention dropout on alpha; the drop masks enter the tape as constants.
ad::Var gat_layer(const GatLayerVars& p, ad::Var h, const EdgeIndex& edges, ad::Var s_col, bool final,
                  const TaskNetConfig& cfg, Rng* dropout_rng = nullptr, GatLayerTrace* trace = nullptr);

/// Logits (n x C). Feature dropout is applied to the input of every layer after the first.
ad::Var tasknet_logits(const TaskNetVars& p, ad::Var x, const EdgeIndex& edges, ad::Var s_col,
                       const TaskNetConfig& cfg, Rng* dropout_rng = nullptr);

/// Evaluation-mode forward passes (no dropout, no gradients).
Matrix gat_layer_forward(const GatLayerParams& p, const Matrix& h, const EdgeIndex& edges, const EdgeMask& mask,
                         bool final, const TaskNetConfig& cfg, GatLayerTrace* trace = nullptr);
Matrix tasknet_forward(const TaskNetParams& p, const Matrix& x, const EdgeIndex& edges, const EdgeMask& mask,
                       const TaskNetConfig& cfg);

/// Mean cross-entropy over labeled nodes.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Throws std::invalid_argument when some node has no incoming edge.
void require_in_edges(const EdgeIndex& edges);

}  // namespace edgemask
