#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "har/tensor.hpp"

namespace har {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static AdamState for_params(std::span<Tensor* const> params);
};

/// One bias-corrected Adam update applied in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               const AdamHyper& hyper);

/// Learning rate after `step` of `total_steps`, interpolated linearly from
/// `start` to `end`.
double annealed_lr(double start, double end, std::size_t step, std::size_t total_steps);

/// Scales every gradient so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Tensor* const> grads, double max_norm);

}  // namespace har
