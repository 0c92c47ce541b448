#include "har/optim.hpp"

#include <cmath>
#include <string>

namespace har {

AdamState AdamState::for_params(std::span<Tensor* const> params) {
  AdamState state;
  for (const Tensor* p : params) {
    state.m.emplace_back(p->shape());
    state.v.emplace_back(p->shape());
  }
  return state;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) +
                         " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k]->shape() || params[k]->shape() != state.m[k].shape() ||
        params[k]->shape() != state.v[k].shape()) {
      throw DimensionError("adam_step: parameter " + std::to_string(k) + " has shape " +
                           to_string(params[k]->shape()) + " but gradient " + to_string(grads[k]->shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
    }
  }
}

double annealed_lr(double start, double end, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return start;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(total_steps);
}

double clip_global_norm(std::span<Tensor* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads) sq += g->squared_norm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (Tensor* g : grads) *g *= factor;
  }
  return norm;
}

}  // namespace har
