#include <gtest/gtest.h>

#include <cmath>

#include "edgemask/diffkernel.hpp"
#include "edgemask/synth.hpp"
#include "edgemask/theory.hpp"

using namespace edgemask;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

SurrogateProblem random_problem(Rng& rng, std::size_t m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SurrogateProblem p;
  p.c = Vector(static_cast<Index>(m));
  for (Index e = 0; e < p.c.size(); ++e) p.c(e) = u(rng);
  p.base_loss = u(rng);
  p.tau = 0.5 * (u(rng) + 1.0) * 0.6;
  std::uniform_real_distribution<double> r(0.05, 1.0);
  p.rho = r(rng);
  return p;
}

struct TinyModel {
  EnrichedGraph g;
  EdgeIndex idx;
  std::vector<int> labels;
  TaskNetConfig cfg;
  TaskNetParams task;
  MaskNetParams mask;
  TinyModel(std::uint64_t seed, std::size_t nodes, std::size_t edges)
      : g(tiny_enriched_graph(seed, nodes, edges, 3, 2)) {
    idx = EdgeIndex::from(g);
    labels.assign(g.base.labels().begin(), g.base.labels().end());
    cfg.heads = 2;
    cfg.head_dim = 3;
    Rng rng(seed + 7);
    task = init_tasknet(3, 2, cfg, rng);
    mask = init_masknet(3, 4, 4, rng);
  }
};

}  // namespace

TEST(Surrogate, IndicatorExamples) {
  SurrogateProblem p{vec({0.5, 0.1, -0.2}), 1.0, 0.3, 1.0};
  const SurrogateSolution s = surrogate_optimal_mask(p);
  EXPECT_EQ(s.mask, vec({1, 0, 0}));
  EXPECT_DOUBLE_EQ(s.objective, 1.2);

  SurrogateProblem tie{vec({0.3, 0.31}), 0.0, 0.3, 1.0};
  EXPECT_EQ(surrogate_optimal_mask(tie).mask, vec({0, 1}));

  SurrogateProblem bad = p;
  bad.rho = 0.0;
  EXPECT_THROW(surrogate_optimal_mask(bad), std::invalid_argument);
}

TEST(Surrogate, IndicatorAttainsGridMaximum) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const SurrogateProblem p = random_problem(rng, 1 + static_cast<std::size_t>(trial % 4));
    const SurrogateSolution s = surrogate_optimal_mask(p);
    double best = -INFINITY;
    for_each_grid_point(p.m(), 0.05, [&](const Vector& x) { best = std::max(best, surrogate_objective(p, x)); });
    EXPECT_GE(s.objective, best) << "trial " << trial;
  }
}

TEST(Grid, EnumeratesEveryPointWithExactEnds) {
  std::size_t count = 0;
  Vector last;
  for_each_grid_point(3, 0.05, [&](const Vector& s) {
    if (count == 0) {
      EXPECT_TRUE(s.isZero());
    }
    ++count;
    last = s;
  });
  EXPECT_EQ(count, 21u * 21u * 21u);
  EXPECT_TRUE((last.array() == 1.0).all());

  std::vector<double> seen;
  for_each_grid_point(1, 0.25, [&](const Vector& s) { seen.push_back(s(0)); });
  EXPECT_EQ(seen, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_THROW(for_each_grid_point(7, 0.5, [](const Vector&) {}), std::invalid_argument);
  EXPECT_THROW(for_each_grid_point(2, 0.3, [](const Vector&) {}), std::invalid_argument);
}

TEST(Surrogate, StrongDualityOnTheBudgetProblem) {
  Rng rng(12);
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i) grid.push_back(0.025 * i);
  for (int trial = 0; trial < 50; ++trial) {
    const SurrogateProblem p = random_problem(rng, 1 + static_cast<std::size_t>(trial % 5));
    const SurrogateDuality d = surrogate_duality(p, grid);
    EXPECT_NEAR(d.gap, 0.0, 1e-12);
    EXPECT_GE(d.dual_grid_min, d.dual_min - 1e-12);
  }
  SurrogateProblem p{vec({0.5, 0.1, 0.3, -0.4}), 0.0, 0.0, 0.5};
  EXPECT_DOUBLE_EQ(surrogate_primal(p), 0.8);
  p.rho = 0.375;  // budget 1.5: full 0.5 plus half of 0.3
  EXPECT_DOUBLE_EQ(surrogate_primal(p), 0.65);
}

TEST(DualBound, AffineExample) {
  const MaskLoss loss = [](const Vector& s) { return 0.5 * s(0) + 0.1 * s(1); };
  const std::vector<double> lambdas{0.0, 0.5, 1.0, 5.0};
  const DualBoundReport r = dual_upper_bound(loss, 2, lambdas, 0.5);
  EXPECT_DOUBLE_EQ(r.primal, 0.5);
  EXPECT_EQ(r.primal_argmax, vec({1, 0}));
  EXPECT_TRUE(r.holds);
  EXPECT_DOUBLE_EQ(r.entries[0].dual, 0.6);  // lambda 0: unconstrained maximum
  for (const DualBoundEntry& e : r.entries) EXPECT_GE(e.dual, r.primal);
  EXPECT_THROW(dual_upper_bound(loss, 2, std::vector<double>{-1.0}, 0.5), std::invalid_argument);
}

TEST(DualBound, RealTaskNetLoss) {
  const std::vector<double> lambdas{0.0, 0.5, 1.0, 5.0};
  for (std::uint64_t seed : {1u, 2u}) {
    TinyModel t(seed, 4, 3);
    ASSERT_EQ(t.idx.num_scored, 3u);
    const DualBoundReport r = dual_upper_bound(tasknet_mask_loss(t.task, t.g.base.features(), t.idx, t.labels, t.cfg),
                                               3, lambdas, 0.5);
    EXPECT_TRUE(r.holds);
    EXPECT_LE(r.primal_argmax.mean(), 0.5 + 1e-12);
  }
  // Six edges on a coarser grid.
  TinyModel six(3, 5, 6);
  const DualBoundReport r = dual_upper_bound(
      tasknet_mask_loss(six.task, six.g.base.features(), six.idx, six.labels, six.cfg), 6, lambdas, 0.5, 0.25);
  EXPECT_TRUE(r.holds);
}

TEST(Kkt, SurrogateConstructionPasses) {
  Rng rng(13);
  int built = 0;
  for (int trial = 0; trial < 40 && built < 20; ++trial) {
    const SurrogateProblem p = random_problem(rng, 2 + static_cast<std::size_t>(trial % 4));
    if ((p.c.array() <= p.tau).all()) {
      EXPECT_THROW(surrogate_certificate(p), std::invalid_argument);
      continue;
    }
    const SurrogateCertificateInput in = surrogate_certificate(p);
    const KKTCertificate cert = kkt_check(p.c, in.mask, in.lambda, in.rho, 1e-9);
    EXPECT_TRUE(cert.passed);
    EXPECT_DOUBLE_EQ(in.lambda, static_cast<double>(p.m()) * p.tau);
    EXPECT_TRUE((cert.mu.array() >= 0.0).all());
    EXPECT_TRUE((cert.nu.array() >= 0.0).all());
    ++built;
  }
  EXPECT_EQ(built, 20);
}

TEST(Kkt, MultipliersFromResiduals) {
  const KKTCertificate c = kkt_check(vec({0.9, 0.1, 0.25}), vec({1, 0, 0.4}), 0.75, 1.4 / 3.0, 1e-9);
  // lambda / m = 0.25.
  EXPECT_EQ(c.cases, (std::vector<KktCase>{KktCase::One, KktCase::Zero, KktCase::Interior}));
  EXPECT_NEAR(c.mu(0), 0.65, 1e-15);
  EXPECT_NEAR(c.nu(1), 0.15, 1e-15);
  EXPECT_DOUBLE_EQ(c.mu(2) + c.nu(2), 0.0);
  EXPECT_TRUE(c.passed);
  EXPECT_EQ(to_string(KktCase::Interior), "interior");
}

TEST(Kkt, NegativeControls) {
  // Interior everywhere with unequal gradients.
  const KKTCertificate interior = kkt_check(vec({0.1, 0.2, 0.3}), Vector::Constant(3, 0.5), 0.3, 0.5, 1e-9);
  EXPECT_FALSE(interior.passed);
  EXPECT_GT(interior.stationarity_residual(0), 0.0);
  EXPECT_GT(interior.stationarity_residual(2), 0.0);

  // Budget slack with a positive multiplier.
  const KKTCertificate slack = kkt_check(vec({0.0, 1.0, 0.0}), vec({0, 1, 0}), 0.9, 0.9, 1e-9);
  EXPECT_FALSE(slack.passed);
  EXPECT_GT(slack.slackness_residual, 0.5);

  // Infeasible budget.
  const KKTCertificate over = kkt_check(vec({1.0, 1.0}), vec({1, 1}), 0.0, 0.5, 1e-9);
  EXPECT_FALSE(over.passed);
  EXPECT_DOUBLE_EQ(over.feasibility_residual, 0.5);

  // Corrupting one gradient of a valid construction.
  SurrogateProblem p{vec({0.5, 0.1, -0.2}), 0.0, 0.3, 1.0};
  const SurrogateCertificateInput in = surrogate_certificate(p);
  Vector g = p.c;
  g(1) = 0.4;
  EXPECT_FALSE(kkt_check(g, in.mask, in.lambda, in.rho, 1e-9).passed);
}

TEST(Kkt, GradientFunctionOverload) {
  SurrogateProblem p{vec({0.5, 0.1, 0.7}), 0.0, 0.3, 1.0};
  const SurrogateCertificateInput in = surrogate_certificate(p);
  const auto grad_fn = [&](const Vector&) { return p.c; };
  EXPECT_TRUE(kkt_check(grad_fn, in.mask, in.lambda, in.rho, 1e-9).passed);
}

TEST(GradientIdentity, TwoPathsAgree) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (double lambda : {0.0, 0.8}) {
      TinyModel t(seed, 8, 16);
      const GradientIdentity id =
          masknet_gradient_identity(t.task, t.mask, t.g.base.features(), t.idx, t.labels, lambda, t.cfg);
      EXPECT_LE(id.max_deviation, 1e-10);
      EXPECT_EQ(static_cast<std::size_t>(id.direct.size()), t.mask.parameter_count());
    }
  }
}

TEST(GradientIdentity, ZeroLambdaIsMinusLossGradientThroughJacobian) {
  TinyModel t(4, 8, 16);
  const GradientIdentity id = masknet_gradient_identity(t.task, t.mask, t.g.base.features(), t.idx, t.labels, 0.0, t.cfg);
  const EdgeMask s = mask_forward(t.mask, t.g.base.features(), t.idx);
  const Vector g = *grad_wrt_mask(t.task, GraphBatch{t.g.base.features(), t.idx, t.labels}, s, t.cfg).mask_grad;
  const Vector expected = -(mask_jacobian(t.mask, t.g.base.features(), t.idx).transpose() * g);
  EXPECT_LT((id.direct - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GradientIdentity, SingleEdgeSignAnalysis) {
  TinyModel t(5, 2, 1);
  ASSERT_EQ(t.idx.num_scored, 1u);
  const Matrix jac = mask_jacobian(t.mask, t.g.base.features(), t.idx);
  // Columns of the output layer come last: out_weight (hidden entries), then out_bias.
  const Index hidden = t.mask.out_weight.cols();
  const Index first_out = jac.cols() - hidden - 1;
  EXPECT_TRUE((jac.rightCols(hidden + 1).array() >= 0.0).all());
  const double s = mask_forward(t.mask, t.g.base.features(), t.idx).values(0);
  EXPECT_NEAR(jac(0, jac.cols() - 1), s * (1.0 - s), 1e-15);
  EXPECT_GE(first_out, 0);

  // The bias component of the combined gradient has the sign of lambda/m - dl/ds.
  const Vector g = *grad_wrt_mask(t.task, GraphBatch{t.g.base.features(), t.idx, t.labels},
                                  mask_forward(t.mask, t.g.base.features(), t.idx), t.cfg)
                        .mask_grad;
  for (double lambda : {0.0, std::abs(g(0)) * 2.0 + 0.1}) {
    const GradientIdentity id =
        masknet_gradient_identity(t.task, t.mask, t.g.base.features(), t.idx, t.labels, lambda, t.cfg);
    const double bias_grad = id.direct(id.direct.size() - 1);
    EXPECT_EQ(std::signbit(bias_grad), std::signbit(lambda - g(0)));
  }
}
