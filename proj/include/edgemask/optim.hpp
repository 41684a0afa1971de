#pragma once

#include <cstdint>
#include <vector>

#include "edgemask/tensor.hpp"

namespace edgemask {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // added to the gradient as an L2 term
};

/// Adam moments for a parameter set, one entry per tensor in visiting order.
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t step = 0;
};

/// One Adam update with bias correction applied to every tensor of `params`, using the
/// matching tensors of `grads`. Params are any type exposing for_each_tensor.
template <typename Params>
void adam_step(AdamState& state, Params& params, const Params& grads, const AdamConfig& cfg);

/// Single-tensor form used by the template above and by tests.
void adam_update(Matrix& param, const Matrix& grad, Matrix& first, Matrix& second, std::uint64_t step,
                 const AdamConfig& cfg);

template <typename Params>
void adam_step(AdamState& state, Params& params, const Params& grads, const AdamConfig& cfg) {
  std::vector<const Matrix*> g;
  grads.for_each_tensor([&](const auto&, const Matrix& m) { g.push_back(&m); });
  if (state.first.empty()) {
    params.for_each_tensor([&](const auto&, Matrix& m) {
      state.first.push_back(Matrix::Zero(m.rows(), m.cols()));
      state.second.push_back(Matrix::Zero(m.rows(), m.cols()));
    });
  }
  ++state.step;
  std::size_t i = 0;
  params.for_each_tensor([&](const auto&, Matrix& m) {
    adam_update(m, *g[i], state.first[i], state.second[i], state.step, cfg);
    ++i;
  });
}

}  // namespace edgemask
