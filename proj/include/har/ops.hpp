#pragma once

#include <cstddef>
#include <utility>

#include "har/tape.hpp"

// Differentiable operations recorded on a Tape. Every op validates shapes and
// throws DimensionError naming the offending shapes.
namespace har::ops {

/// [m x k] * [k x n] -> [m x n]
Var matmul(Tape& tape, Var a, Var b);

/// weight [out x in] applied to x [in], plus bias [out] when valid.
Var linear(Tape& tape, Var weight, Var x, Var bias);

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
/// Sum of all elements, shape [1].
Var sum(Tape& tape, Var a);

/// max(x, 0); the subgradient at exactly zero is zero.
Var relu(Tape& tape, Var x);
Var tanh(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);

/// Numerically stable softmax over a rank-1 tensor.
Var softmax(Tape& tape, Var x);

/// Floor applied to probabilities before taking the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// -log(max(probs[label], 1e-12)), shape [1].
Var cross_entropy(Tape& tape, Var probs, std::size_t label);

/// Cross-correlation of [C_in x H x W] with [C_out x C_in x kh x kw].
Var conv2d(Tape& tape, Var input, Var kernels, std::size_t stride, std::size_t padding);
/// As above, adding one bias per output channel.
Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding);

/// Per-channel window maxima of [C x H x W]. Ties go to the first cell in
/// row-major scan order, which is also the only cell that receives gradient.
Var maxpool2d(Tape& tape, Var input, std::size_t window, std::size_t stride);

Var reshape(Tape& tape, Var x, Shape shape);

/// Copies the value into a constant node; no gradient flows back.
Var detach(Tape& tape, Var x);

/// Log-density of an isotropic Gaussian with the given mean and standard
/// deviation, evaluated at `sample`. Shape [1]; differentiable in the mean.
Var gaussian_log_prob(Tape& tape, Var mean, const Tensor& sample, double stddev);

/// (prediction - target)^2 for a single-element prediction.
Var squared_error(Tape& tape, Var prediction, double target);

struct LstmState {
  Var h;
  Var c;
};

/// Standard LSTM cell without peepholes.
///
/// weight is [4d x (d_in + d)], bias [4d]; gate blocks are ordered
/// input, forget, candidate, output.
LstmState lstm_cell(Tape& tape, Var x, LstmState state, Var weight, Var bias);

}  // namespace har::ops
