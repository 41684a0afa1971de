#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgemask/masknet.hpp"
#include "edgemask/tasknet.hpp"

namespace edgemask {

/// Gradients shaped like the parameters they belong to.
struct GradientBundle {
  std::optional<TaskNetParams> task;
  std::optional<MaskNetParams> mask;
  std::optional<Vector> mask_grad;  // d loss / d s over the scored edges
  double loss = 0.0;                // classification loss at the evaluated point
  double objective = 0.0;           // value that was differentiated
  double mean_mask = 0.0;           // mean of the scored mask entries
};

/// Everything a loss evaluation needs besides the parameters.
struct GraphBatch {
  const Matrix& x;
  const EdgeIndex& edges;
  std::span<const int> labels;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// d loss / d theta with the mask held constant. No MaskNet gradient is produced.
GradientBundle grad_tasknet(const TaskNetParams& task, const GraphBatch& batch, const EdgeMask& mask,
                            const TaskNetConfig& cfg, Rng* dropout_rng = nullptr);

/// Gradient of -loss + lambda * mean(s) with respect to the MaskNet parameters, theta frozen.
/// Also reports d loss / d s (recovered from the same backward pass).
GradientBundle grad_masknet(const TaskNetParams& task, const MaskNetParams& mask_net, const GraphBatch& batch,
                            double lambda, const TaskNetConfig& cfg, Rng* dropout_rng = nullptr);

/// d loss / d s over the scored edges for a given mask, everything else constant.
GradientBundle grad_wrt_mask(const TaskNetParams& task, const GraphBatch& batch, const EdgeMask& mask,
                             const TaskNetConfig& cfg);

/// Jacobian d s / d p of the scored mask entries (rows) with respect to the flattened MaskNet
/// parameters (columns, in for_each_tensor order), built one reverse pass per edge.
Matrix mask_jacobian(const MaskNetParams& mask_net, const Matrix& x, const EdgeIndex& edges);

Vector flatten(const MaskNetParams& p);
MaskNetParams unflatten(const Vector& flat, const MaskNetParams& shape);

/// Throws NumericError naming the first tensor with a non-finite entry.
void require_finite(const GradientBundle& g);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct FdOptions {
  double step = 1e-4;
  double rel_tol = 1e-4;
  double abs_floor = 1e-8;             // absolute differences below this count as exact
  std::size_t max_coords_per_tensor = 0;  // 0 checks every coordinate
  std::uint64_t sample_seed = 0;
};

struct FdTensorReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct FdReport {
  std::vector<FdTensorReport> tensors;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// A tensor to perturb in place together with its claimed analytic gradient.
struct FdTarget {
  std::string name;
  Matrix* value;
  const Matrix* analytic;
};

/// Central differences (f(x+h) - f(x-h)) / 2h per coordinate. A coordinate's error is
/// |a - n| / max(|a|, |n|), or 0 when |a - n| <= abs_floor.
FdReport finite_diff_check(const std::function<double()>& loss_fn, std::span<const FdTarget> targets,
                           const FdOptions& opt = {});

/// Checks grad_tasknet on every TaskNet tensor (evaluation mode).
FdReport check_tasknet_gradients(const TaskNetParams& task, const GraphBatch& batch, const EdgeMask& mask,
                                 const TaskNetConfig& cfg, const FdOptions& opt = {});

/// Checks grad_masknet on every MaskNet tensor (evaluation mode).
FdReport check_masknet_gradients(const TaskNetParams& task, const MaskNetParams& mask_net, const GraphBatch& batch,
                                 double lambda, const TaskNetConfig& cfg, const FdOptions& opt = {});

}  // namespace edgemask
