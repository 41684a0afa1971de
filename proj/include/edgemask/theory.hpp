#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "edgemask/masknet.hpp"
#include "edgemask/tasknet.hpp"
#include "edgemask/tensor.hpp"

namespace edgemask {

/// Loss linearized at s = 0: l(s) ~ base_loss + c^T s, penalized with threshold tau = lambda / m.
struct SurrogateProblem {
  Vector c;
  double base_loss = 0.0;
  double tau = 0.0;
  double rho = 1.0;

  std::size_t m() const { return static_cast<std::size_t>(c.size()); }
  void validate() const;
};

struct SurrogateSolution {
  Vector mask;
  double objective = 0.0;  // base_loss + sum max(c_e - tau, 0)
};

/// s_e = 1 when c_e > tau, else 0 (a tie gives 0).
SurrogateSolution surrogate_optimal_mask(const SurrogateProblem& prob);

/// base_loss + sum (c_e - tau) s_e.
double surrogate_objective(const SurrogateProblem& prob, const Vector& s);

/// Calls f on every point of {0, res, 2 res, ..., 1}^m in lexicographic order. The point vector
/// is reused between calls. Throws when m exceeds `max_dim`.
void for_each_grid_point(std::size_t m, double resolution, const std::function<void(const Vector&)>& f,
                         std::size_t max_dim = 6);

/// Budget-constrained surrogate max_{s in [0,1]^m, mean(s) <= rho} base + c^T s, solved exactly by
/// filling the largest positive c_e first.
double surrogate_primal(const SurrogateProblem& prob);
/// D(lambda) = base + lambda rho + sum max(c_e - lambda / m, 0).
double surrogate_dual(const SurrogateProblem& prob, double lambda);

struct SurrogateDuality {
  double primal = 0.0;
  double dual_min = 0.0;       // exact minimum over lambda >= 0, taken at a breakpoint
  double dual_grid_min = 0.0;  // minimum over the supplied grid
  double gap = 0.0;            // dual_min - primal
};
SurrogateDuality surrogate_duality(const SurrogateProblem& prob, std::span<const double> lambda_grid);

// ---------------------------------------------------------------------------
// Lagrangian bound on a general loss over masks.

using MaskLoss = std::function<double(const Vector& s)>;

struct DualBoundEntry {
  double lambda = 0.0;
  double dual = 0.0;
  bool holds = false;
};

struct DualBoundReport {
  double primal = 0.0;  // grid max over mean(s) <= rho
  Vector primal_argmax;
  std::vector<DualBoundEntry> entries;
  bool holds = true;
};

/// Grid estimate of P = max_{mean(s) <= rho} l(s) and of D(lambda) = max_s l(s) - lambda (mean(s) - rho)
/// for each lambda, with the check P <= D + tol. Each grid point is evaluated once.
DualBoundReport dual_upper_bound(const MaskLoss& loss, std::size_t m, std::span<const double> lambdas, double rho,
                                 double resolution = 0.05, double tol = 1e-9);

/// Classification loss of a fixed TaskNet as a function of the scored mask entries.
MaskLoss tasknet_mask_loss(const TaskNetParams& task, const Matrix& x, const EdgeIndex& edges,
                           std::span<const int> labels, const TaskNetConfig& cfg);

// ---------------------------------------------------------------------------
// Optimality conditions of the budgeted mask problem.

enum class KktCase { Interior, Zero, One };
std::string_view to_string(KktCase c);

struct KKTCertificate {
  Vector mask;
  double lambda = 0.0;
  double rho = 1.0;
  Vector mu;  // upper-bound multipliers, non-zero only at s = 1
  Vector nu;  // lower-bound multipliers, non-zero only at s = 0
  std::vector<KktCase> cases;
  Vector stationarity_residual;  // per edge, how far the case condition is violated (0 when met)
  double slackness_residual = 0.0;  // |lambda (mean(s) - rho)|
  double feasibility_residual = 0.0;  // max(mean(s) - rho, 0)
  bool passed = false;
};

/// Checks the case conditions against the gradient g = d l / d s at the mask:
/// interior |g_e - lambda/m| <= tol, zero g_e <= lambda/m + tol, one g_e >= lambda/m - tol,
/// plus complementary slackness, budget feasibility and lambda >= 0.
KKTCertificate kkt_check(const Vector& grad, const Vector& mask, double lambda, double rho, double tol);
KKTCertificate kkt_check(const std::function<Vector(const Vector&)>& grad_fn, const Vector& mask, double lambda,
                         double rho, double tol);

/// Analytic certificate for a surrogate instance: the indicator mask, lambda = m tau and
/// rho = mean(mask). Needs at least one c_e > tau so that rho is positive.
struct SurrogateCertificateInput {
  Vector mask;
  double lambda = 0.0;
  double rho = 0.0;
};
SurrogateCertificateInput surrogate_certificate(const SurrogateProblem& prob);

// ---------------------------------------------------------------------------

struct GradientIdentity {
  Vector direct;    // reverse accumulation through the whole objective
  Vector explicit_;  // (-d l / d s + lambda/m 1)^T (d s / d p)
  double max_deviation = 0.0;
};

/// Two-path MaskNet gradient of -loss + lambda mean(s).
GradientIdentity masknet_gradient_identity(const TaskNetParams& task, const MaskNetParams& mask_net, const Matrix& x,
                                           const EdgeIndex& edges, std::span<const int> labels, double lambda,
                                           const TaskNetConfig& cfg);

}  // namespace edgemask
