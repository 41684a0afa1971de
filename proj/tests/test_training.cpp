#include <gtest/gtest.h>

#include <cmath>

#include "edgemask/graph_io.hpp"
#include "edgemask/synth.hpp"
#include "edgemask/training.hpp"

using namespace edgemask;

namespace {

DomainDataset small_domains(std::uint64_t seed = 0) {
  SynthConfig s;
  s.nodes_per_domain = 30;
  s.feature_dim = 4;
  s.seed = seed;
  return generate(s);
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 3;
  c.lr_task = 0.01;
  c.lr_mask = 0.01;
  c.n_descent = 2;
  c.n_ascent = 1;
  c.mask_proj_dim = 8;
  c.mask_hidden = 8;
  c.enrich.k = 3;
  c.enrich.clusters = 3;
  c.tasknet.heads = 2;
  c.tasknet.head_dim = 4;
  return c;
}

struct Batch {
  EnrichedGraph g;
  EdgeIndex idx;
  std::vector<int> labels;
  explicit Batch(const Graph& graph) : g(plain_enriched(graph)), idx(EdgeIndex::from(g)) {
    labels.assign(graph.labels().begin(), graph.labels().end());
  }
};

}  // namespace

TEST(DualAscent, ProjectedArithmetic) {
  EXPECT_DOUBLE_EQ(dual_ascent_lambda(1.0, 0.8, 0.5, 0.1), 1.03);
  EXPECT_DOUBLE_EQ(dual_ascent_lambda(1.0, 0.2, 0.5, 0.1), 0.97);
  EXPECT_DOUBLE_EQ(dual_ascent_lambda(0.01, 0.0, 0.5, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(dual_ascent_lambda(0.3, 0.5, 0.5, 0.1), 0.3);
}

TEST(Steps, DescentLowersLossAndLeavesMaskNetAlone) {
  const DomainDataset ds = small_domains();
  const Batch b(ds.sources[0]);
  TrainConfig cfg = small_config();
  cfg.lr_task = 1e-3;
  cfg.weight_decay_task = 0.0;
  Rng rng(1);
  TaskNetParams task = init_tasknet(4, 3, cfg.tasknet, rng);
  const MaskNetParams mask = init_masknet(4, 8, 8, rng);
  const MaskNetParams mask_before = mask;
  const EdgeMask s = mask_forward(mask, b.g.base.features(), b.idx);
  AdamState st;
  const double before = tasknet_descent_step(task, st, b.g.base.features(), b.idx, b.labels, s, cfg, nullptr);
  const double after = cross_entropy(tasknet_forward(task, b.g.base.features(), b.idx, s, cfg.tasknet), b.labels);
  EXPECT_LT(after, before);
  EXPECT_TRUE(mask == mask_before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Steps, AscentRaisesLossAtZeroLambdaAndFreezesTaskNet) {
  const DomainDataset ds = small_domains();
  const Batch b(ds.sources[1]);
  TrainConfig cfg = small_config();
  cfg.lr_mask = 1e-3;
  Rng rng(2);
  const TaskNetParams task = init_tasknet(4, 3, cfg.tasknet, rng);
  const TaskNetParams task_before = task;
  MaskNetParams mask = init_masknet(4, 8, 8, rng);
  AdamState st;
  const GradientBundle g =
      masknet_ascent_step(task, mask, st, b.g.base.features(), b.idx, b.labels, 0.0, cfg, nullptr);
  const EdgeMask s = mask_forward(mask, b.g.base.features(), b.idx);
  const double after = cross_entropy(tasknet_forward(task, b.g.base.features(), b.idx, s, cfg.tasknet), b.labels);
  EXPECT_GT(after, g.loss);
  EXPECT_TRUE(task == task_before);
}

TEST(Steps, LargeLambdaPushesMaskDown) {
  const DomainDataset ds = small_domains();
  const Batch b(ds.sources[0]);
  TrainConfig cfg = small_config();
  cfg.lr_mask = 1e-2;
  Rng rng(3);
  const TaskNetParams task = init_tasknet(4, 3, cfg.tasknet, rng);
  MaskNetParams mask = init_masknet(4, 8, 8, rng);
  AdamState st;
  const double start = mask_forward(mask, b.g.base.features(), b.idx).scored_mean();
  for (int i = 0; i < 20; ++i) {
    masknet_ascent_step(task, mask, st, b.g.base.features(), b.idx, b.labels, 50.0, cfg, nullptr);
  }
  EXPECT_LT(mask_forward(mask, b.g.base.features(), b.idx).scored_mean(), start - 0.1);
}

TEST(Train, SingleEpochSmokeAndCounters) {
  const DomainDataset ds = small_domains();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  const TrainResult r = train(ds, cfg);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.counters.blocks, 3u);
  EXPECT_EQ(r.counters.descent, 3u * 2u);
  EXPECT_EQ(r.counters.ascent, 3u);
  EXPECT_EQ(r.model.task_opt.step, 6u);
  EXPECT_EQ(r.model.mask_opt.step, 3u);
  EXPECT_TRUE(std::isfinite(r.history[0].task_loss));
  EXPECT_GT(r.final_mean_mask, 0.0);
  EXPECT_LT(r.final_mean_mask, 1.0);
}

TEST(Train, NoMaskSkipsAscentAndKeepsInitialMaskNet) {
  const DomainDataset ds = small_domains();
  TrainConfig cfg = small_config();
  cfg.use_mask = false;
  const TrainResult r = train(ds, cfg);
  EXPECT_EQ(r.counters.ascent, 0u);
  EXPECT_EQ(r.model.mask_opt.step, 0u);
  for (const EpochRecord& e : r.history) EXPECT_DOUBLE_EQ(e.mean_mask, 1.0);
}

TEST(Train, DualAscentMovesLambdaOnlyWithRho) {
  const DomainDataset ds = small_domains();
  TrainConfig cfg = small_config();
  const TrainResult fixed = train(ds, cfg);
  for (const EpochRecord& e : fixed.history) EXPECT_DOUBLE_EQ(e.lambda, cfg.lambda);
  cfg.rho = 0.2;
  cfg.dual_step = 0.5;
  const TrainResult dual = train(ds, cfg);
  EXPECT_GT(dual.model.lambda, cfg.lambda);  // mean(s) starts near 0.5, above the budget
}

TEST(Train, DeterministicForASeed) {
  const DomainDataset ds = small_domains();
  const TrainConfig cfg = small_config();
  const TrainResult a = train(ds, cfg);
  const TrainResult b = train(ds, cfg);
  EXPECT_TRUE(a.model.task == b.model.task);
  EXPECT_TRUE(a.model.mask == b.model.mask);
  EXPECT_EQ(a.model.rng_state, b.model.rng_state);
  TrainConfig other = cfg;
  other.seed = 1;
  EXPECT_FALSE(train(ds, other).model.task == a.model.task);
}

TEST(Train, TargetLabelsAreNeverRead) {
  DomainDataset ds = small_domains();
  ds.target = ds.sources.back();
  ds.sources.pop_back();
  const TrainConfig cfg = small_config();
  const TrainResult a = train(ds, cfg);
  std::vector<int> flipped(ds.target->labels().begin(), ds.target->labels().end());
  for (int& y : flipped) y = (y + 1) % 3;
  ds.target = ds.target->with_labels(flipped);
  const TrainResult b = train(ds, cfg);
  EXPECT_TRUE(a.model.task == b.model.task);
  EXPECT_TRUE(a.model.mask == b.model.mask);
}

TEST(Train, AuditPhasesBracketTraining) {
  const DomainDataset ds = small_domains();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  std::vector<std::string> events;
  set_audit_observer([&](const std::string& e) { events.push_back(e); });
  train(ds, cfg);
  set_audit_observer(nullptr);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events.front(), "phase:train-begin");
  EXPECT_EQ(events.back(), "phase:train-end");
}

TEST(Train, RejectsBadInput) {
  TrainConfig cfg = small_config();
  EXPECT_THROW(train(std::span<const Graph>{}, cfg), std::invalid_argument);
  cfg.epochs = 0;
  EXPECT_THROW(train(small_domains(), cfg), std::invalid_argument);
  cfg = small_config();
  cfg.rho = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(inference_mask_from_string("half"), std::invalid_argument);
}

TEST(Inference, ModesDifferOnlyWhenMaskTrained) {
  const DomainDataset ds = small_domains();
  const TrainConfig cfg = small_config();
  const TrainResult r = train(ds, cfg);
  const Inference ones = infer(r.model, ds.sources[0], cfg, InferenceMask::AllOnes);
  const Inference learned = infer(r.model, ds.sources[0], cfg, InferenceMask::MaskNet);
  EXPECT_TRUE(ones.mask.values.isOnes());
  EXPECT_FALSE(learned.mask.values.isOnes());
  EXPECT_NE(ones.logits, learned.logits);
  EXPECT_EQ(ones.graph.edges, learned.graph.edges);

  TrainConfig nomask = cfg;
  nomask.use_mask = false;
  const TrainResult n = train(ds, nomask);
  EXPECT_TRUE(infer(n.model, ds.sources[0], nomask, InferenceMask::MaskNet).mask.values.isOnes());
}

TEST(Inference, UsesFullEnrichmentAndIsRepeatable) {
  const DomainDataset ds = small_domains();
  const TrainConfig cfg = small_config();
  const TrainResult r = train(ds, cfg);
  const Inference a = infer(r.model, ds.sources[2], cfg);
  const Inference b = infer(r.model, ds.sources[2], cfg);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_GT(a.graph.num_scored(), ds.sources[2].num_edges());
  const Metrics m = evaluate(r.model, ds.sources[2], cfg);
  EXPECT_EQ(m.evaluated, 30u);
}

TEST(Experiments, LeaveOneOutAndLambdaAblation) {
  const DomainDataset ds = small_domains();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  const auto loo = leave_one_out(ds.sources, cfg);
  ASSERT_EQ(loo.size(), 3u);
  EXPECT_EQ(loo[1].domain, "domain1");

  DomainDataset split = ds;
  split.target = split.sources.back();
  split.sources.pop_back();
  const std::vector<double> grid{0.0, 0.5};
  const auto rows = ablate_lambda(split, cfg, grid);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[1].lambda, 0.5);
  EXPECT_TRUE(rows[0].target.has_value());
}

TEST(Experiments, TwoByTwoLayout) {
  const DomainDataset ds = small_domains();
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto rows = ablate_2x2(ds.sources, cfg, seeds);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].label(), "original+no-mask");
  EXPECT_EQ(rows[3].label(), "union+mask");
  for (const AblationRow& r : rows) {
    EXPECT_EQ(r.runs.size(), 6u);
    EXPECT_LE(r.worst_micro_f1, r.mean_micro_f1);
  }
  const TrainConfig orig = ablation_config(cfg, false, true);
  EXPECT_DOUBLE_EQ(orig.enrich.gamma_knn, 0.0);
  EXPECT_DOUBLE_EQ(orig.enrich.gamma_spec, 0.0);
  EXPECT_TRUE(orig.use_mask);
  EXPECT_FALSE(ablation_config(cfg, true, false).use_mask);
}
