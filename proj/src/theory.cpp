#include "edgemask/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "edgemask/diffkernel.hpp"

namespace edgemask {

void SurrogateProblem::validate() const {
  if (!c.allFinite() || !std::isfinite(base_loss) || !std::isfinite(tau)) {
    throw std::invalid_argument("surrogate: non-finite entry");
  }
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("surrogate: rho must lie in (0, 1]");
}

double surrogate_objective(const SurrogateProblem& prob, const Vector& s) {
  double v = prob.base_loss;
  for (Index e = 0; e < prob.c.size(); ++e) v += (prob.c(e) - prob.tau) * s(e);
  return v;
}

SurrogateSolution surrogate_optimal_mask(const SurrogateProblem& prob) {
  prob.validate();
  SurrogateSolution out;
  out.mask = Vector::Zero(prob.c.size());
  for (Index e = 0; e < prob.c.size(); ++e) {
    if (prob.c(e) > prob.tau) out.mask(e) = 1.0;
  }
  out.objective = surrogate_objective(prob, out.mask);
  return out;
}

void for_each_grid_point(std::size_t m, double resolution, const std::function<void(const Vector&)>& f,
                         std::size_t max_dim) {
  if (m > max_dim) throw std::invalid_argument("grid too large: " + std::to_string(m) + " coordinates");
  if (!(resolution > 0.0 && resolution <= 1.0)) throw std::invalid_argument("grid resolution outside (0, 1]");
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
  if (std::abs(static_cast<double>(steps) * resolution - 1.0) > 1e-9) {
    throw std::invalid_argument("grid resolution must divide 1");
  }
  std::vector<std::size_t> k(m, 0);
  Vector s = Vector::Zero(static_cast<Index>(m));
  while (true) {
    f(s);
    std::size_t i = m;
    while (i > 0) {
      --i;
      if (k[i] < steps) {
        ++k[i];
        s(static_cast<Index>(i)) = k[i] == steps ? 1.0 : static_cast<double>(k[i]) * resolution;
        break;
      }
      k[i] = 0;
      s(static_cast<Index>(i)) = 0.0;
      if (i == 0) return;
    }
    if (m == 0) return;
  }
}

double surrogate_primal(const SurrogateProblem& prob) {
  prob.validate();
  std::vector<double> pos;
  for (Index e = 0; e < prob.c.size(); ++e) {
    if (prob.c(e) > 0.0) pos.push_back(prob.c(e));
  }
  std::sort(pos.begin(), pos.end(), std::greater<>());
  double budget = prob.rho * static_cast<double>(prob.m());
  double v = prob.base_loss;
  for (double c : pos) {
    if (budget <= 0.0) break;
    const double take = std::min(1.0, budget);
    v += c * take;
    budget -= take;
  }
  return v;
}

double surrogate_dual(const SurrogateProblem& prob, double lambda) {
  const double m = static_cast<double>(prob.m());
  double v = prob.base_loss + lambda * prob.rho;
  for (Index e = 0; e < prob.c.size(); ++e) v += std::max(prob.c(e) - lambda / m, 0.0);
  return v;
}

SurrogateDuality surrogate_duality(const SurrogateProblem& prob, std::span<const double> lambda_grid) {
  SurrogateDuality out;
  out.primal = surrogate_primal(prob);
  // D is convex and piecewise linear in lambda with kinks at m c_e.
  out.dual_min = surrogate_dual(prob, 0.0);
  for (Index e = 0; e < prob.c.size(); ++e) {
    if (prob.c(e) > 0.0) out.dual_min = std::min(out.dual_min, surrogate_dual(prob, static_cast<double>(prob.m()) * prob.c(e)));
  }
  out.dual_grid_min = std::numeric_limits<double>::infinity();
  for (double l : lambda_grid) {
    if (l < 0.0) throw std::invalid_argument("surrogate_duality: negative lambda");
    out.dual_grid_min = std::min(out.dual_grid_min, surrogate_dual(prob, l));
  }
  out.gap = out.dual_min - out.primal;
  return out;
}

DualBoundReport dual_upper_bound(const MaskLoss& loss, std::size_t m, std::span<const double> lambdas, double rho,
                                 double resolution, double tol) {
  if (m == 0) throw std::invalid_argument("dual_upper_bound: no mask coordinates");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("dual_upper_bound: rho must lie in (0, 1]");
  for (double l : lambdas) {
    if (l < 0.0) throw std::invalid_argument("dual_upper_bound: negative lambda");
  }
  DualBoundReport out;
  out.primal = -std::numeric_limits<double>::infinity();
  std::vector<double> duals(lambdas.size(), -std::numeric_limits<double>::infinity());
  const double md = static_cast<double>(m);
  for_each_grid_point(m, resolution, [&](const Vector& s) {
    const double l = loss(s);
    const double mean = s.sum() / md;
    // Compare in grid units so the boundary mean(s) = rho is not lost to rounding.
    if (s.sum() / resolution <= rho * md / resolution + 1e-9 && l > out.primal) {
      out.primal = l;
      out.primal_argmax = s;
    }
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      duals[i] = std::max(duals[i], l - lambdas[i] * (mean - rho));
    }
  });
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const bool ok = out.primal <= duals[i] + tol;
    out.entries.push_back({lambdas[i], duals[i], ok});
    out.holds = out.holds && ok;
  }
  return out;
}

MaskLoss tasknet_mask_loss(const TaskNetParams& task, const Matrix& x, const EdgeIndex& edges,
                           std::span<const int> labels, const TaskNetConfig& cfg) {
  return [&task, &x, &edges, labels, cfg](const Vector& s) {
    if (static_cast<std::size_t>(s.size()) != edges.num_scored) throw std::invalid_argument("mask loss: length mismatch");
    EdgeMask mask = EdgeMask::ones(edges.num_edges(), edges.num_scored);
    mask.values.head(s.size()) = s;
    return cross_entropy(tasknet_forward(task, x, edges, mask, cfg), labels);
  };
}

std::string_view to_string(KktCase c) {
  switch (c) {
    case KktCase::Interior: return "interior";
    case KktCase::Zero: return "zero";
    case KktCase::One: return "one";
  }
  return "?";
}

KKTCertificate kkt_check(const Vector& grad, const Vector& mask, double lambda, double rho, double tol) {
  if (grad.size() != mask.size() || mask.size() == 0) throw std::invalid_argument("kkt_check: length mismatch");
  const auto m = static_cast<double>(mask.size());
  const double t = lambda / m;
  KKTCertificate cert;
  cert.mask = mask;
  cert.lambda = lambda;
  cert.rho = rho;
  cert.mu = Vector::Zero(mask.size());
  cert.nu = Vector::Zero(mask.size());
  cert.stationarity_residual = Vector::Zero(mask.size());
  bool ok = lambda >= 0.0;
  for (Index e = 0; e < mask.size(); ++e) {
    const double s = mask(e);
    const double g = grad(e);
    if (s <= tol) {
      cert.cases.push_back(KktCase::Zero);
      cert.nu(e) = std::max(t - g, 0.0);
      cert.stationarity_residual(e) = std::max(g - t, 0.0);
    } else if (s >= 1.0 - tol) {
      cert.cases.push_back(KktCase::One);
      cert.mu(e) = std::max(g - t, 0.0);
      cert.stationarity_residual(e) = std::max(t - g, 0.0);
    } else {
      cert.cases.push_back(KktCase::Interior);
      cert.stationarity_residual(e) = std::abs(g - t);
    }
    ok = ok && cert.stationarity_residual(e) <= tol;
  }
  const double mean = mask.mean();
  cert.slackness_residual = std::abs(lambda * (mean - rho));
  cert.feasibility_residual = std::max(mean - rho, 0.0);
  cert.passed = ok && cert.slackness_residual <= tol && cert.feasibility_residual <= tol;
  return cert;
}

KKTCertificate kkt_check(const std::function<Vector(const Vector&)>& grad_fn, const Vector& mask, double lambda,
                         double rho, double tol) {
  return kkt_check(grad_fn(mask), mask, lambda, rho, tol);
}

SurrogateCertificateInput surrogate_certificate(const SurrogateProblem& prob) {
  const SurrogateSolution sol = surrogate_optimal_mask(prob);
  SurrogateCertificateInput out{sol.mask, static_cast<double>(prob.m()) * prob.tau, sol.mask.mean()};
  if (!(out.rho > 0.0)) throw std::invalid_argument("surrogate_certificate: no c_e exceeds tau");
  return out;
}

GradientIdentity masknet_gradient_identity(const TaskNetParams& task, const MaskNetParams& mask_net, const Matrix& x,
                                           const EdgeIndex& edges, std::span<const int> labels, double lambda,
                                           const TaskNetConfig& cfg) {
  if (edges.num_scored == 0) throw std::invalid_argument("gradient identity: no scored edges");
  const GraphBatch batch{x, edges, labels};
  GradientIdentity out;
  out.direct = flatten(*grad_masknet(task, mask_net, batch, lambda, cfg, nullptr).mask);

  const EdgeMask s = mask_forward(mask_net, x, edges);
  const Vector g = *grad_wrt_mask(task, batch, s, cfg).mask_grad;
  const Matrix jac = mask_jacobian(mask_net, x, edges);
  const Vector outer = (-g).array() + lambda / static_cast<double>(edges.num_scored);
  out.explicit_ = jac.transpose() * outer;
  out.max_deviation = (out.direct - out.explicit_).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace edgemask
