#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgemask/diffkernel.hpp"
#include "edgemask/enrichment.hpp"
#include "edgemask/graph.hpp"
#include "edgemask/masknet.hpp"
#include "edgemask/metrics.hpp"
#include "edgemask/optim.hpp"
#include "edgemask/tasknet.hpp"

namespace edgemask {

/// Mask used when classifying a graph after training.
enum class InferenceMask { AllOnes, MaskNet };

std::string_view to_string(InferenceMask mode);
InferenceMask inference_mask_from_string(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 200;
  double lr_task = 1e-3;
  double lr_mask = 1e-3;
  double weight_decay_task = 5e-4;
  double lambda = 1e-3;
  std::size_t n_descent = 5;
  std::size_t n_ascent = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  // Dual ascent on lambda runs only when rho is set.
  std::optional<double> rho;
  double dual_step = 0.1;

  // false trains with s fixed at 1 and MaskNet disabled.
  bool use_mask = true;
  InferenceMask inference_mask = InferenceMask::AllOnes;

  std::size_t mask_proj_dim = 128;
  std::size_t mask_hidden = 64;

  EnrichConfig enrich;
  TaskNetConfig tasknet;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;   // mean over domains of the last descent-step loss
  double mask_loss = 0.0;   // mean over domains of the last ascent objective (-loss + lambda mean(s))
  double mean_mask = 0.0;   // mean over domains of mean(s) seen by the last ascent step
  double lambda = 0.0;
  double train_micro_f1 = 0.0;  // evaluation-mode accuracy on the sampled source graphs
};

struct StepCounters {
  std::size_t descent = 0;
  std::size_t ascent = 0;
  std::size_t blocks = 0;  // (epoch, domain) pairs
};

struct TrainedModel {
  TaskNetParams task;
  MaskNetParams mask;
  double lambda = 0.0;  // final value; differs from the configured one only under dual ascent
  AdamState task_opt;
  AdamState mask_opt;
  std::string rng_state;  // serialized training generators
};

struct TrainResult {
  TrainedModel model;
  std::vector<EpochRecord> history;
  StepCounters counters;
  double final_mean_mask = 0.0;  // final MaskNet on each source's last sampled graph, averaged
};

/// Adam moments and hyper-parameters for the two players.
AdamConfig task_adam(const TrainConfig& cfg);
AdamConfig mask_adam(const TrainConfig& cfg);

/// One TaskNet update against a fixed mask. Returns the loss at the pre-update parameters.
double tasknet_descent_step(TaskNetParams& task, AdamState& state, const Matrix& x, const EdgeIndex& edges,
                            std::span<const int> labels, const EdgeMask& mask, const TrainConfig& cfg,
                            Rng* dropout_rng);

/// One MaskNet update minimizing -loss + lambda mean(s), TaskNet frozen. Returns the bundle
/// evaluated at the pre-update parameters.
GradientBundle masknet_ascent_step(const TaskNetParams& task, MaskNetParams& mask, AdamState& state, const Matrix& x,
                                   const EdgeIndex& edges, std::span<const int> labels, double lambda,
                                   const TrainConfig& cfg, Rng* dropout_rng);

/// Projected update max(lambda + alpha (mean - rho), 0).
double dual_ascent_lambda(double lambda, double mean_mask, double rho, double alpha);

/// Alternating training over the source graphs only.
TrainResult train(std::span<const Graph> sources, const TrainConfig& cfg);
/// Reads `ds.sources` only; the target is left untouched.
TrainResult train(const DomainDataset& ds, const TrainConfig& cfg);

/// Graph prepared for inference: full precomputed enrichment and the mask selected by the config.
struct Inference {
  EnrichedGraph graph;
  EdgeMask mask;
  Matrix logits;
};

Inference infer(const TrainedModel& model, const Graph& g, const TrainConfig& cfg);
Inference infer(const TrainedModel& model, const Graph& g, const TrainConfig& cfg, InferenceMask mode);

/// Evaluation-mode metrics on the labeled nodes of `g`.
Metrics evaluate(const TrainedModel& model, const Graph& g, const TrainConfig& cfg);
Metrics evaluate(const TrainedModel& model, const Graph& g, const TrainConfig& cfg, InferenceMask mode);

// ---------------------------------------------------------------------------
// Experiment runners.

struct HeldOutResult {
  std::string domain;
  std::uint64_t seed = 0;
  Metrics metrics;
  double final_mean_mask = 0.0;
};

/// Trains once per domain with that domain held out and evaluated.
std::vector<HeldOutResult> leave_one_out(std::span<const Graph> domains, const TrainConfig& cfg);

struct LambdaRow {
  double lambda = 0.0;
  std::optional<Metrics> target;  // present when the dataset carries a target
  double final_mean_mask = 0.0;
  TrainResult result;
};

/// One training per lambda value with a shared seed.
std::vector<LambdaRow> ablate_lambda(const DomainDataset& ds, const TrainConfig& cfg, std::span<const double> grid);

struct AblationRow {
  bool augmented = false;  // union graph vs original edges only
  bool masked = false;     // adversarial MaskNet vs s fixed at 1
  std::vector<HeldOutResult> runs;
  double mean_micro_f1 = 0.0;
  double mean_macro_f1 = 0.0;
  double worst_micro_f1 = 0.0;

  std::string label() const;
};

/// The four {original, union} x {no mask, mask} configurations, each run leave-one-out over
/// `domains` for every seed.
std::vector<AblationRow> ablate_2x2(std::span<const Graph> domains, const TrainConfig& cfg,
                                    std::span<const std::uint64_t> seeds);

/// The configuration variant used for one 2x2 cell.
TrainConfig ablation_config(const TrainConfig& cfg, bool augmented, bool masked);

}  // namespace edgemask
