#include <gtest/gtest.h>

#include <cmath>

#include "edgemask/diffkernel.hpp"
#include "edgemask/synth.hpp"

using namespace edgemask;

namespace {

struct Fixture {
  EnrichedGraph g;
  EdgeIndex idx;
  std::vector<int> labels;
  TaskNetConfig cfg;
  TaskNetParams task;
  MaskNetParams mask;

  explicit Fixture(std::uint64_t seed) : g(tiny_enriched_graph(seed, 8, 16, 5, 3)) {
    idx = EdgeIndex::from(g);
    labels.assign(g.base.labels().begin(), g.base.labels().end());
    cfg.heads = 2;
    cfg.head_dim = 4;
    Rng rng(seed + 100);
    task = init_tasknet(5, 3, cfg, rng);
    mask = init_masknet(5, 4, 4, rng);
  }
  GraphBatch batch() const { return {g.base.features(), idx, labels}; }
};

}  // namespace

TEST(DiffKernel, TaskNetGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Fixture f(seed);
    EdgeMask s = mask_forward(f.mask, f.g.base.features(), f.idx);
    const FdReport r = check_tasknet_gradients(f.task, f.batch(), s, f.cfg);
    EXPECT_TRUE(r.passed) << "seed " << seed << " max rel " << r.max_rel_error;
    EXPECT_EQ(r.tensors.size(), 7u);
  }
}

TEST(DiffKernel, MaskNetGradientMatchesFiniteDifferences) {
  for (double lambda : {0.0, 0.5, 3.0}) {
    Fixture f(4);
    const FdReport r = check_masknet_gradients(f.task, f.mask, f.batch(), lambda, f.cfg);
    EXPECT_TRUE(r.passed) << "lambda " << lambda << " max rel " << r.max_rel_error;
    EXPECT_EQ(r.tensors.size(), 6u);
  }
}

TEST(DiffKernel, MaskGradientMatchesFiniteDifferences) {
  Fixture f(5);
  EdgeMask s = mask_forward(f.mask, f.g.base.features(), f.idx);
  const GradientBundle b = grad_wrt_mask(f.task, f.batch(), s, f.cfg);
  ASSERT_TRUE(b.mask_grad.has_value());
  ASSERT_EQ(static_cast<std::size_t>(b.mask_grad->size()), f.idx.num_scored);
  const double h = 1e-6;
  for (Index e = 0; e < b.mask_grad->size(); ++e) {
    EdgeMask plus = s, minus = s;
    plus.values[e] += h;
    minus.values[e] -= h;
    const double num = (cross_entropy(tasknet_forward(f.task, f.g.base.features(), f.idx, plus, f.cfg), f.labels) -
                        cross_entropy(tasknet_forward(f.task, f.g.base.features(), f.idx, minus, f.cfg), f.labels)) /
                       (2 * h);
    EXPECT_NEAR((*b.mask_grad)[e], num, 1e-7);
  }
}

TEST(DiffKernel, DescentBundleCarriesNoMaskGradient) {
  Fixture f(6);
  const GradientBundle b = grad_tasknet(f.task, f.batch(), EdgeMask::ones(f.idx.num_edges(), f.idx.num_scored), f.cfg);
  EXPECT_TRUE(b.task.has_value());
  EXPECT_FALSE(b.mask.has_value());
  EXPECT_DOUBLE_EQ(b.objective, b.loss);
  EXPECT_DOUBLE_EQ(b.mean_mask, 1.0);
}

TEST(DiffKernel, AscentObjectiveAndReportedMaskGradient) {
  Fixture f(7);
  const double lambda = 0.7;
  const GradientBundle b = grad_masknet(f.task, f.mask, f.batch(), lambda, f.cfg);
  ASSERT_TRUE(b.mask.has_value());
  EXPECT_FALSE(b.task.has_value());
  EXPECT_NEAR(b.objective, -b.loss + lambda * b.mean_mask, 1e-15);
  const EdgeMask s = mask_forward(f.mask, f.g.base.features(), f.idx);
  EXPECT_NEAR(b.mean_mask, s.scored_mean(), 1e-15);
  const GradientBundle direct = grad_wrt_mask(f.task, f.batch(), s, f.cfg);
  EXPECT_LT((*b.mask_grad - *direct.mask_grad).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(DiffKernel, JacobianMatchesFiniteDifferences) {
  Fixture f(8);
  const Matrix jac = mask_jacobian(f.mask, f.g.base.features(), f.idx);
  const Vector p = flatten(f.mask);
  ASSERT_EQ(jac.rows(), static_cast<Index>(f.idx.num_scored));
  ASSERT_EQ(jac.cols(), p.size());
  const double h = 1e-6;
  double worst = 0.0;
  for (Index j = 0; j < p.size(); ++j) {
    Vector plus = p, minus = p;
    plus[j] += h;
    minus[j] -= h;
    const Vector sp = mask_forward(unflatten(plus, f.mask), f.g.base.features(), f.idx).values;
    const Vector sm = mask_forward(unflatten(minus, f.mask), f.g.base.features(), f.idx).values;
    const Vector col = (sp - sm).head(jac.rows()) / (2 * h);
    worst = std::max(worst, (col - jac.col(j)).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(DiffKernel, FlattenRoundTrip) {
  Fixture f(9);
  const Vector flat = flatten(f.mask);
  EXPECT_EQ(static_cast<std::size_t>(flat.size()), f.mask.parameter_count());
  EXPECT_TRUE(unflatten(flat, f.mask) == f.mask);
  EXPECT_THROW(unflatten(Vector::Zero(3), f.mask), std::invalid_argument);
}

TEST(DiffKernel, FiniteDifferenceCheckerCatchesWrongGradient) {
  Fixture f(10);
  const EdgeMask s = EdgeMask::ones(f.idx.num_edges(), f.idx.num_scored);
  GradientBundle b = grad_tasknet(f.task, f.batch(), s, f.cfg);
  TaskNetParams wrong = *b.task;
  wrong.output(0, 0) += 0.01;
  TaskNetParams probe = f.task;
  std::vector<FdTarget> targets{{"task.output", &probe.output, &wrong.output}};
  auto loss = [&] { return cross_entropy(tasknet_forward(probe, f.g.base.features(), f.idx, s, f.cfg), f.labels); };
  const FdReport bad = finite_diff_check(loss, targets);
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.max_rel_error, 1e-3);
  EXPECT_EQ(probe.output, f.task.output);  // perturbations restored

  targets[0].analytic = &b.task->output;
  EXPECT_TRUE(finite_diff_check(loss, targets).passed);
}

TEST(DiffKernel, CoordinateSubsampling) {
  Fixture f(11);
  FdOptions opt;
  opt.max_coords_per_tensor = 3;
  const FdReport r = check_tasknet_gradients(f.task, f.batch(), EdgeMask::ones(f.idx.num_edges(), f.idx.num_scored),
                                             f.cfg, opt);
  for (const FdTensorReport& t : r.tensors) EXPECT_LE(t.checked, 3u);
}

TEST(DiffKernel, NonFiniteGradientIsReported) {
  GradientBundle b;
  Fixture f(12);
  b.task = f.task.zeros_like();
  b.task->layers[1].attention(0, 0) = std::numeric_limits<double>::infinity();
  try {
    require_finite(b);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("task.layer1.attention"), std::string::npos);
  }
}
