#include "edgemask/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "edgemask/graph_io.hpp"

namespace edgemask {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kEnrichStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::uint64_t kEvalStream = 4;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
}

}  // namespace

std::string_view to_string(InferenceMask mode) {
  return mode == InferenceMask::AllOnes ? "all-ones" : "masknet";
}

InferenceMask inference_mask_from_string(std::string_view name) {
  if (name == "all-ones") return InferenceMask::AllOnes;
  if (name == "masknet") return InferenceMask::MaskNet;
  throw std::invalid_argument("unknown inference mask mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be at least 1");
  require(lr_task > 0.0 && lr_mask > 0.0, "learning rates must be positive");
  require(weight_decay_task >= 0.0, "weight decay must be non-negative");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(n_descent >= 1, "n-descent must be at least 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must lie in [0, 1)");
  require(eps > 0.0, "adam eps must be positive");
  if (rho) {
    require(*rho > 0.0 && *rho <= 1.0, "rho must lie in (0, 1]");
    require(dual_step > 0.0, "dual step must be positive");
  }
  require(mask_proj_dim >= 1 && mask_hidden >= 1, "masknet dimensions must be at least 1");
  enrich.validate();
  tasknet.validate();
}

AdamConfig task_adam(const TrainConfig& cfg) {
  return {cfg.lr_task, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay_task};
}

AdamConfig mask_adam(const TrainConfig& cfg) {
  // No decay on the adversary.
  return {cfg.lr_mask, cfg.beta1, cfg.beta2, cfg.eps, 0.0};
}

double tasknet_descent_step(TaskNetParams& task, AdamState& state, const Matrix& x, const EdgeIndex& edges,
                            std::span<const int> labels, const EdgeMask& mask, const TrainConfig& cfg,
                            Rng* dropout_rng) {
  const GradientBundle g = grad_tasknet(task, GraphBatch{x, edges, labels}, mask, cfg.tasknet, dropout_rng);
  adam_step(state, task, *g.task, task_adam(cfg));
  return g.loss;
}

GradientBundle masknet_ascent_step(const TaskNetParams& task, MaskNetParams& mask, AdamState& state, const Matrix& x,
                                   const EdgeIndex& edges, std::span<const int> labels, double lambda,
                                   const TrainConfig& cfg, Rng* dropout_rng) {
  // grad_masknet differentiates -loss + lambda mean(s); descending it ascends the loss.
  GradientBundle g = grad_masknet(task, mask, GraphBatch{x, edges, labels}, lambda, cfg.tasknet, dropout_rng);
  adam_step(state, mask, *g.mask, mask_adam(cfg));
  return g;
}

double dual_ascent_lambda(double lambda, double mean_mask, double rho, double alpha) {
  return std::max(lambda + alpha * (mean_mask - rho), 0.0);
}

TrainResult train(std::span<const Graph> sources, const TrainConfig& cfg) {
  cfg.validate();
  if (sources.empty()) throw std::invalid_argument("train: no source domains");
  const std::size_t d = sources.front().feature_dim();
  const std::size_t classes = sources.front().num_classes();
  for (const Graph& g : sources) {
    if (g.feature_dim() != d || g.num_classes() != classes) {
      throw GraphError("train: source domains disagree on feature dimension or class count");
    }
    if (g.num_labeled() == 0) throw GraphError("train: source domain '" + g.domain_id() + "' has no labels");
  }
  audit_event("phase:train-begin");

  Rng init_rng = make_stream(cfg.seed, kInitStream);
  Rng enrich_rng = make_stream(cfg.seed, kEnrichStream);
  Rng dropout_rng = make_stream(cfg.seed, kDropoutStream);

  TrainResult out;
  TrainedModel& model = out.model;
  model.task = init_tasknet(d, classes, cfg.tasknet, init_rng);
  model.mask = init_masknet(d, cfg.mask_proj_dim, cfg.mask_hidden, init_rng);
  model.lambda = cfg.lambda;

  std::vector<EnrichmentCache> caches;
  caches.reserve(sources.size());
  for (const Graph& g : sources) caches.emplace_back(g, cfg.enrich, enrich_rng);

  std::vector<EnrichedGraph> last(sources.size());
  const std::size_t ascent_per_block = cfg.use_mask ? cfg.n_ascent : 0;
  const auto domains = static_cast<double>(sources.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t di = 0; di < sources.size(); ++di) {
      const Graph& g = sources[di];
      last[di] = caches[di].sample(enrich_rng);
      const EdgeIndex edges = EdgeIndex::from(last[di]);
      const Matrix& x = g.features();

      // The mask is recomputed once, then held constant through the descent steps.
      const EdgeMask mask = cfg.use_mask ? mask_forward(model.mask, x, edges)
                                         : EdgeMask::ones(edges.num_edges(), edges.num_scored);
      std::size_t descent = 0, ascent = 0;
      double task_loss = 0.0;
      for (std::size_t k = 0; k < cfg.n_descent; ++k, ++descent) {
        task_loss = tasknet_descent_step(model.task, model.task_opt, x, edges, g.labels(), mask, cfg, &dropout_rng);
      }
      double mask_loss = -task_loss;
      double mean_mask = mask.scored_mean();
      for (std::size_t k = 0; k < ascent_per_block; ++k, ++ascent) {
        const GradientBundle b = masknet_ascent_step(model.task, model.mask, model.mask_opt, x, edges, g.labels(),
                                                     model.lambda, cfg, &dropout_rng);
        mask_loss = b.objective;
        mean_mask = b.mean_mask;
      }
      if (descent != cfg.n_descent || ascent != ascent_per_block) throw std::logic_error("train: step count drift");
      out.counters.descent += descent;
      out.counters.ascent += ascent;
      ++out.counters.blocks;

      if (cfg.use_mask && cfg.rho) model.lambda = dual_ascent_lambda(model.lambda, mean_mask, *cfg.rho, cfg.dual_step);

      const Matrix logits = tasknet_forward(model.task, x, edges, mask, cfg.tasknet);
      rec.train_micro_f1 += score(predict(logits), g.labels(), classes).micro_f1 / domains;
      rec.task_loss += task_loss / domains;
      rec.mask_loss += mask_loss / domains;
      rec.mean_mask += mean_mask / domains;
    }
    rec.lambda = model.lambda;
    if (!std::isfinite(rec.task_loss) || !std::isfinite(rec.mask_loss)) {
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    out.history.push_back(rec);
  }

  if (out.counters.descent != cfg.epochs * sources.size() * cfg.n_descent ||
      out.counters.ascent != cfg.epochs * sources.size() * ascent_per_block) {
    throw std::logic_error("train: step totals do not match the schedule");
  }

  for (std::size_t di = 0; di < sources.size(); ++di) {
    const EdgeMask s = mask_forward(model.mask, sources[di].features(), last[di]);
    out.final_mean_mask += s.scored_mean() / domains;
  }

  std::ostringstream state;
  state << enrich_rng << '\n' << dropout_rng;
  model.rng_state = state.str();
  audit_event("phase:train-end");
  return out;
}

TrainResult train(const DomainDataset& ds, const TrainConfig& cfg) {
  return train(std::span<const Graph>(ds.sources), cfg);
}

Inference infer(const TrainedModel& model, const Graph& g, const TrainConfig& cfg) {
  return infer(model, g, cfg, cfg.inference_mask);
}

Inference infer(const TrainedModel& model, const Graph& g, const TrainConfig& cfg, InferenceMask mode) {
  if (g.feature_dim() != model.task.input_dim()) throw GraphError("infer: feature dimension does not match the model");
  Rng rng = make_stream(cfg.seed, kEvalStream);
  // Every precomputed set is used in full; a set with ratio 0 stays absent.
  EnrichmentCache cache(g, cfg.enrich, rng);
  Inference out{cache.full(), {}, {}};
  const EdgeIndex edges = EdgeIndex::from(out.graph);
  // A model trained without the adversary has no meaningful MaskNet.
  out.mask = mode == InferenceMask::MaskNet && cfg.use_mask ? mask_forward(model.mask, g.features(), edges)
                                            : EdgeMask::ones(edges.num_edges(), edges.num_scored);
  out.logits = tasknet_forward(model.task, g.features(), edges, out.mask, cfg.tasknet);
  return out;
}

Metrics evaluate(const TrainedModel& model, const Graph& g, const TrainConfig& cfg) {
  return evaluate(model, g, cfg, cfg.inference_mask);
}

Metrics evaluate(const TrainedModel& model, const Graph& g, const TrainConfig& cfg, InferenceMask mode) {
  if (g.num_labeled() == 0) throw GraphError("evaluate: graph '" + g.domain_id() + "' has no labeled nodes");
  const Inference inf = infer(model, g, cfg, mode);
  return score(predict(inf.logits), g.labels(), g.num_classes());
}

std::vector<HeldOutResult> leave_one_out(std::span<const Graph> domains, const TrainConfig& cfg) {
  if (domains.size() < 2) throw std::invalid_argument("leave_one_out: needs at least two domains");
  std::vector<HeldOutResult> out;
  for (std::size_t held = 0; held < domains.size(); ++held) {
    std::vector<Graph> sources;
    for (std::size_t i = 0; i < domains.size(); ++i) {
      if (i != held) sources.push_back(domains[i]);
    }
    const TrainResult r = train(sources, cfg);
    out.push_back({domains[held].domain_id(), cfg.seed, evaluate(r.model, domains[held], cfg), r.final_mean_mask});
  }
  return out;
}

std::vector<LambdaRow> ablate_lambda(const DomainDataset& ds, const TrainConfig& cfg, std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("ablate_lambda: empty grid");
  std::vector<LambdaRow> rows;
  for (double lambda : grid) {
    TrainConfig c = cfg;
    c.lambda = lambda;
    LambdaRow row;
    row.lambda = lambda;
    row.result = train(ds, c);
    row.final_mean_mask = row.result.final_mean_mask;
    if (ds.target) row.target = evaluate(row.result.model, *ds.target, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string AblationRow::label() const {
  return std::string(augmented ? "union" : "original") + "+" + (masked ? "mask" : "no-mask");
}

TrainConfig ablation_config(const TrainConfig& cfg, bool augmented, bool masked) {
  TrainConfig c = cfg;
  if (!augmented) {
    c.enrich.gamma_knn = 0.0;
    c.enrich.gamma_spec = 0.0;
  }
  c.use_mask = masked;
  return c;
}

std::vector<AblationRow> ablate_2x2(std::span<const Graph> domains, const TrainConfig& cfg,
                                    std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("ablate_2x2: no seeds");
  std::vector<AblationRow> rows;
  for (bool augmented : {false, true}) {
    for (bool masked : {false, true}) {
      AblationRow row;
      row.augmented = augmented;
      row.masked = masked;
      for (std::uint64_t seed : seeds) {
        TrainConfig c = ablation_config(cfg, augmented, masked);
        c.seed = seed;
        for (HeldOutResult& r : leave_one_out(domains, c)) row.runs.push_back(std::move(r));
      }
      row.worst_micro_f1 = std::numeric_limits<double>::infinity();
      for (const HeldOutResult& r : row.runs) {
        row.mean_micro_f1 += r.metrics.micro_f1;
        row.mean_macro_f1 += r.metrics.macro_f1;
        row.worst_micro_f1 = std::min(row.worst_micro_f1, r.metrics.micro_f1);
      }
      row.mean_micro_f1 /= static_cast<double>(row.runs.size());
      row.mean_macro_f1 /= static_cast<double>(row.runs.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace edgemask
