#include "edgemask/diffkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edgemask {
namespace {

std::vector<ad::Var> var_list(const TaskNetVars& v) {
  std::vector<ad::Var> out;
  for (const GatLayerVars& l : v.layers) {
    out.push_back(l.weight);
    out.push_back(l.attention);
    out.push_back(l.mask_weight);
  }
  out.push_back(v.output);
  return out;
}

std::vector<ad::Var> var_list(const MaskNetVars& v) {
  return {v.proj_weight, v.proj_bias, v.hidden_weight, v.hidden_bias, v.out_weight, v.out_bias};
}

template <typename Params, typename Vars>
Params collect(const Params& shape, const Vars& vars) {
  Params out = shape;
  const std::vector<ad::Var> list = var_list(vars);
  std::size_t i = 0;
  out.for_each_tensor([&](const auto&, Matrix& m) { m = list[i++].grad(); });
  return out;
}

}  // namespace

GradientBundle grad_tasknet(const TaskNetParams& task, const GraphBatch& batch, const EdgeMask& mask,
                            const TaskNetConfig& cfg, Rng* dropout_rng) {
  if (mask.size() != batch.edges.num_edges()) throw std::invalid_argument("grad_tasknet: mask length mismatch");
  ad::Tape tape;
  TaskNetVars vars = bind(tape, task, true);
  ad::Var logits =
      tasknet_logits(vars, tape.constant(batch.x), batch.edges, tape.constant(mask.values), cfg, dropout_rng);
  ad::Var loss = ad::cross_entropy(logits, batch.labels);
  tape.backward(loss);

  GradientBundle out;
  out.task = collect(task, vars);
  out.loss = loss.value()(0, 0);
  out.objective = out.loss;
  out.mean_mask = mask.scored_mean();
  require_finite(out);
  return out;
}

GradientBundle grad_masknet(const TaskNetParams& task, const MaskNetParams& mask_net, const GraphBatch& batch,
                            double lambda, const TaskNetConfig& cfg, Rng* dropout_rng) {
  ad::Tape tape;
  TaskNetVars frozen = bind(tape, task, false);
  MaskNetVars mvars = bind(tape, mask_net, true);
  ad::Var x = tape.constant(batch.x);
  const std::size_t m = batch.edges.num_scored;

  GradientBundle out;
  if (m == 0) {
    // Nothing to score: the mask is all self-loop ones and carries no gradient.
    Matrix ones = Matrix::Ones(static_cast<Index>(batch.edges.num_edges()), 1);
    ad::Var logits = tasknet_logits(frozen, x, batch.edges, tape.constant(ones), cfg, dropout_rng);
    out.loss = ad::cross_entropy(logits, batch.labels).value()(0, 0);
    out.objective = -out.loss;
    out.mask = mask_net.zeros_like();
    out.mask_grad = Vector();
    return out;
  }

  ad::Var scores = mask_scores(mvars, x, batch.edges);
  ad::Var s_col = scores;
  const auto loops = static_cast<Index>(batch.edges.num_edges() - m);
  if (loops > 0) s_col = ad::concat_rows(scores, tape.constant(Matrix::Ones(loops, 1)));
  ad::Var logits = tasknet_logits(frozen, x, batch.edges, s_col, cfg, dropout_rng);
  ad::Var loss = ad::cross_entropy(logits, batch.labels);
  ad::Var mean = ad::mean_all(scores);
  ad::Var objective = ad::add(ad::scale(loss, -1.0), ad::scale(mean, lambda));
  tape.backward(objective);

  out.mask = collect(mask_net, mvars);
  out.loss = loss.value()(0, 0);
  out.objective = objective.value()(0, 0);
  out.mean_mask = mean.value()(0, 0);
  // The score node received -dL/ds + (lambda/m) 1; undo the regulariser part.
  const Vector g_scores = scores.grad().col(0);
  out.mask_grad = -(g_scores.array() - lambda / static_cast<double>(m)).matrix();
  require_finite(out);
  return out;
}

GradientBundle grad_wrt_mask(const TaskNetParams& task, const GraphBatch& batch, const EdgeMask& mask,
                             const TaskNetConfig& cfg) {
  if (mask.size() != batch.edges.num_edges()) throw std::invalid_argument("grad_wrt_mask: mask length mismatch");
  const auto m = static_cast<Index>(mask.num_scored);
  ad::Tape tape;
  TaskNetVars frozen = bind(tape, task, false);
  ad::Var scored = tape.leaf(mask.values.head(m), true);
  ad::Var s_col = scored;
  const auto loops = static_cast<Index>(mask.size()) - m;
  if (loops > 0) s_col = ad::concat_rows(scored, tape.constant(mask.values.tail(loops)));
  ad::Var logits = tasknet_logits(frozen, tape.constant(batch.x), batch.edges, s_col, cfg, nullptr);
  ad::Var loss = ad::cross_entropy(logits, batch.labels);
  tape.backward(loss);

  GradientBundle out;
  out.loss = loss.value()(0, 0);
  out.objective = out.loss;
  out.mean_mask = mask.scored_mean();
  out.mask_grad = scored.grad().col(0);
  require_finite(out);
  return out;
}

Vector flatten(const MaskNetParams& p) {
  Vector flat(static_cast<Index>(p.parameter_count()));
  Index pos = 0;
  p.for_each_tensor([&](std::string_view, const Matrix& m) {
    flat.segment(pos, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    pos += m.size();
  });
  return flat;
}

MaskNetParams unflatten(const Vector& flat, const MaskNetParams& shape) {
  if (flat.size() != static_cast<Index>(shape.parameter_count())) throw std::invalid_argument("unflatten: size mismatch");
  MaskNetParams out = shape;
  Index pos = 0;
  out.for_each_tensor([&](std::string_view, Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = flat(pos++);
    }
  });
  return out;
}

Matrix mask_jacobian(const MaskNetParams& mask_net, const Matrix& x, const EdgeIndex& edges) {
  const auto m = static_cast<Index>(edges.num_scored);
  Matrix jac(m, static_cast<Index>(mask_net.parameter_count()));
  if (m == 0) return jac;
  ad::Tape tape;
  MaskNetVars vars = bind(tape, mask_net, true);
  ad::Var s = mask_scores(vars, tape.constant(x), edges);
  for (Index e = 0; e < m; ++e) {
    tape.zero_grad();
    Matrix seed = Matrix::Zero(m, 1);
    seed(e, 0) = 1.0;
    tape.backward(s, seed);
    jac.row(e) = flatten(collect(mask_net, vars)).transpose();
  }
  return jac;
}

void require_finite(const GradientBundle& g) {
  auto check = [](const std::string& name, const Matrix& m) {
    if (!m.allFinite()) throw NumericError("non-finite gradient in " + name);
  };
  if (!std::isfinite(g.loss)) throw NumericError("non-finite loss");
  if (g.task) g.task->for_each_tensor([&](const std::string& name, const Matrix& m) { check(name, m); });
  if (g.mask) g.mask->for_each_tensor([&](std::string_view name, const Matrix& m) { check(std::string(name), m); });
  if (g.mask_grad && !g.mask_grad->allFinite()) throw NumericError("non-finite gradient with respect to the mask");
}

FdReport finite_diff_check(const std::function<double()>& loss_fn, std::span<const FdTarget> targets,
                           const FdOptions& opt) {
  if (!(opt.step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  FdReport report;
  Rng rng(opt.sample_seed);
  for (const FdTarget& t : targets) {
    if (t.value->rows() != t.analytic->rows() || t.value->cols() != t.analytic->cols()) {
      throw std::invalid_argument("finite_diff_check: gradient shape mismatch for " + t.name);
    }
    const auto size = static_cast<std::size_t>(t.value->size());
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords_per_tensor > 0 && size > opt.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    FdTensorReport tr{t.name, coords.size(), 0.0, 0.0};
    double* data = t.value->data();
    const double* analytic = t.analytic->data();
    for (std::size_t c : coords) {
      const double saved = data[c];
      data[c] = saved + opt.step;
      const double up = loss_fn();
      data[c] = saved - opt.step;
      const double down = loss_fn();
      data[c] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double abs_err = std::abs(analytic[c] - numeric);
      const double rel_err = abs_err <= opt.abs_floor ? 0.0 : abs_err / std::max(std::abs(analytic[c]), std::abs(numeric));
      tr.max_abs_error = std::max(tr.max_abs_error, abs_err);
      tr.max_rel_error = std::max(tr.max_rel_error, rel_err);
    }
    report.max_rel_error = std::max(report.max_rel_error, tr.max_rel_error);
    report.tensors.push_back(std::move(tr));
  }
  report.passed = report.max_rel_error <= opt.rel_tol;
  return report;
}

FdReport check_tasknet_gradients(const TaskNetParams& task, const GraphBatch& batch, const EdgeMask& mask,
                                 const TaskNetConfig& cfg, const FdOptions& opt) {
  const GradientBundle g = grad_tasknet(task, batch, mask, cfg, nullptr);
  TaskNetParams probe = task;
  auto loss_fn = [&] { return cross_entropy(tasknet_forward(probe, batch.x, batch.edges, mask, cfg), batch.labels); };

  std::vector<FdTarget> targets;
  std::vector<const Matrix*> analytic;
  g.task->for_each_tensor([&](const std::string&, const Matrix& m) { analytic.push_back(&m); });
  std::size_t i = 0;
  probe.for_each_tensor([&](const std::string& name, Matrix& m) { targets.push_back({name, &m, analytic[i++]}); });
  return finite_diff_check(loss_fn, targets, opt);
}

FdReport check_masknet_gradients(const TaskNetParams& task, const MaskNetParams& mask_net, const GraphBatch& batch,
                                 double lambda, const TaskNetConfig& cfg, const FdOptions& opt) {
  const GradientBundle g = grad_masknet(task, mask_net, batch, lambda, cfg, nullptr);
  MaskNetParams probe = mask_net;
  auto objective = [&] {
    const EdgeMask s = mask_forward(probe, batch.x, batch.edges);
    const double loss = cross_entropy(tasknet_forward(task, batch.x, batch.edges, s, cfg), batch.labels);
    return -loss + lambda * s.scored_mean();
  };

  std::vector<FdTarget> targets;
  std::vector<const Matrix*> analytic;
  g.mask->for_each_tensor([&](std::string_view, const Matrix& m) { analytic.push_back(&m); });
  std::size_t i = 0;
  probe.for_each_tensor(
      [&](std::string_view name, Matrix& m) { targets.push_back({std::string(name), &m, analytic[i++]}); });
  return finite_diff_check(objective, targets, opt);
}

}  // namespace edgemask
