#pragma once

#include <random>
#include <vector>

#include "har/gradcheck.hpp"
#include "har/model.hpp"
#include "har/training.hpp"

namespace har::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// A small network over 5-channel activity frames (11 x 9).
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.frame_height = 11;
  c.frame_width = 9;
  c.n_classes = 3;
  c.frames_per_sample = 2;
  c.conv1_filters = 2;
  c.conv2_filters = 3;
  c.glimpse.window_h = 3;
  c.glimpse.window_w = 3;
  c.glimpse.glimpses = 3;
  c.rho_dim = 6;
  c.loc_dim = 6;
  c.glimpse_dim = 7;
  c.hidden_a = 5;
  c.hidden_f = 6;
  return c;
}

inline Sample random_sample(const ModelConfig& c, std::mt19937_64& rng, std::size_t label = 1) {
  Sample s;
  s.label = label;
  s.subject = "s";
  for (std::size_t f = 0; f < c.frames_per_sample; ++f) s.frames.push_back(random_tensor({c.frame_height, c.frame_width}, rng));
  return s;
}

/// Locations drawn once and reused, so the loss is a smooth function of the
/// parameters.
inline std::vector<std::vector<Location>> random_locations(const ModelConfig& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.9, 0.9);
  std::vector<std::vector<Location>> locs(c.frames_per_sample);
  for (auto& f : locs) {
    f.push_back({0.0, 0.0});
    for (std::size_t t = 1; t < c.glimpse.glimpses; ++t) f.push_back({dist(rng), dist(rng)});
  }
  return locs;
}

/// CE of the final prediction plus the mean frame-action CE, with every
/// glimpse location fixed.
inline Var supervised_loss(Tape& tape, std::span<const Var> params, const ModelConfig& c, const Sample& sample,
                           const std::vector<std::vector<Location>>& locations) {
  Network net(tape, BoundParams::from(params), c);
  std::vector<Var> conv;
  for (const auto& frame : sample.frames) conv.push_back(net.frontend(frame));
  Rng rng(0);
  const Episode ep = net.run(conv, sample.label, rng, {LocationMode::replay, &locations});
  Var loss = ops::cross_entropy(tape, ep.graph.prediction, sample.label);
  for (Var a : ep.graph.frame_actions) {
    loss = ops::add(tape, loss,
                    ops::scale(tape, ops::cross_entropy(tape, a, sample.label),
                               1.0 / static_cast<double>(ep.graph.frame_actions.size())));
  }
  return loss;
}

/// Grad check of the supervised loss over `count` random parameter
/// coordinates drawn uniformly over all parameters.
inline GradCheckReport check_supervised_loss(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  const ModelConfig c = tiny_config();
  ModelParams params = ModelParams::init(c, seed);
  // Non-zero biases so every bias path carries gradient.
  for (std::size_t i = 1; i < kParamCount; i += 2)
    for (auto& v : params.tensors[i].data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  const Sample sample = random_sample(c, rng, seed % c.n_classes);
  const auto locations = random_locations(c, rng);

  std::vector<Tensor> inputs(params.tensors.begin(), params.tensors.end());
  GradCheckOptions opts;
  std::vector<std::size_t> offsets{0};
  for (const auto& t : inputs) offsets.push_back(offsets.back() + t.size());
  std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t flat = pick(rng);
    std::size_t p = 0;
    while (offsets[p + 1] <= flat) ++p;
    opts.coordinates.push_back({p, flat - offsets[p]});
  }
  const TapeFunction fn = [&](Tape& tape, std::span<const Var> vars) {
    return supervised_loss(tape, vars, c, sample, locations);
  };
  return grad_check(fn, inputs, opts);
}

}  // namespace har::testing
