#include "edgemask/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace edgemask {

void adam_update(Matrix& param, const Matrix& grad, Matrix& first, Matrix& second, std::uint64_t step,
                 const AdamConfig& cfg) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) throw std::invalid_argument("adam: shape mismatch");
  if (step == 0) throw std::invalid_argument("adam: step counter starts at 1");
  Matrix g = grad;
  if (cfg.weight_decay != 0.0) g += cfg.weight_decay * param;
  first = cfg.beta1 * first + (1.0 - cfg.beta1) * g;
  second = cfg.beta2 * second + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  param.array() -= cfg.lr * (first.array() / c1) / ((second.array() / c2).sqrt() + cfg.eps);
}

}  // namespace edgemask
