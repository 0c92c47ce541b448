#include "har/diagnostics.hpp"

#include <cmath>
#include <initializer_list>
#include <random>

namespace har {

namespace {

Tensor uniform(Shape shape, Rng& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Fixed pseudo-random projection so every output coordinate matters.
Var project(Tape& tape, Var v, double k) {
  Tensor w(tape.value(v).shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(k * static_cast<double>(i + 1));
  return ops::sum(tape, ops::mul(tape, v, tape.constant(w)));
}

/// Probes `ids` (plus `extra` free inputs) while every other block stays
/// constant.
GradCheckReport check_blocks(const ModelParams& params, const ModelConfig& config, std::initializer_list<ParamId> ids,
                             const std::vector<Tensor>& extra,
                             const std::function<Var(Network&, Tape&, std::span<const Var>)>& body) {
  std::vector<Tensor> inputs;
  for (ParamId id : ids) inputs.push_back(params[id]);
  inputs.insert(inputs.end(), extra.begin(), extra.end());
  const std::vector<ParamId> order(ids);
  const TapeFunction fn = [&](Tape& tape, std::span<const Var> vars) {
    BoundParams bound = BoundParams::bind(tape, params, nullptr);
    for (std::size_t k = 0; k < order.size(); ++k) bound.vars[static_cast<std::size_t>(order[k])] = vars[k];
    Network net(tape, bound, config);
    return body(net, tape, vars.subspan(order.size()));
  };
  return grad_check(fn, inputs);
}

}  // namespace

ModelConfig diagnostic_config() {
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

std::vector<LayerCheck> layer_gradient_checks(std::uint64_t seed, std::size_t loss_coordinates) {
  const ModelConfig c = diagnostic_config();
  Rng rng(derive_seed(seed, 0));
  ModelParams p = ModelParams::init(c, seed);
  // Non-zero biases so every bias path carries gradient.
  for (std::size_t i = 1; i < kParamCount; i += 2)
    for (auto& v : p.tensors[i].data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  const std::size_t label = seed % c.n_classes;
  Sample sample{{}, label, "diag"};
  for (std::size_t f = 0; f < c.frames_per_sample; ++f) sample.frames.push_back(uniform({c.frame_height, c.frame_width}, rng, 1.0));
  std::uniform_real_distribution<double> coord(-0.9, 0.9);
  const Location at{coord(rng), coord(rng)};
  const Tensor glimpse_in = uniform({c.glimpse_dim}, rng, 1.0);
  const Tensor hidden_in = uniform({c.hidden_a}, rng, 1.0);
  const Tensor retina_in = uniform({c.retina_size()}, rng, 1.0);

  std::vector<LayerCheck> out;
  using P = ParamId;
  out.push_back({"frontend", check_blocks(p, c,
                                          {P::conv1_weight, P::conv1_bias, P::conv2_weight, P::conv2_bias,
                                           P::reshape_weight, P::reshape_bias},
                                          {}, [&](Network& n, Tape& t, std::span<const Var>) {
                                            return project(t, n.frontend(sample.frames[0]), 0.7);
                                          })});
  out.push_back({"retina", check_blocks(p, c, {}, {sample.frames[1]}, [&](Network& n, Tape& t, std::span<const Var> x) {
                   return project(t, n.retina(x[0], at), 1.3);
                 })});
  out.push_back({"glimpse", check_blocks(p, c,
                                         {P::glimpse_rho_weight, P::glimpse_rho_bias, P::glimpse_loc_weight,
                                          P::glimpse_loc_bias, P::glimpse_out_weight, P::glimpse_out_bias},
                                         {retina_in}, [&](Network& n, Tape& t, std::span<const Var> x) {
                                           return project(t, n.glimpse(x[0], at), 1.1);
                                         })});
  out.push_back({"lstm_a+action",
                 check_blocks(p, c, {P::lstm_a_weight, P::lstm_a_bias, P::action_weight, P::action_bias}, {glimpse_in},
                              [&](Network& n, Tape& t, std::span<const Var> x) {
                                auto st = n.attention_step(x[0], n.zero_state(c.hidden_a));
                                st = n.attention_step(x[0], st);
                                return ops::cross_entropy(t, n.action(st.h), label);
                              })});
  // Both heads read a detached state, so it enters as a constant.
  out.push_back({"location", check_blocks(p, c, {P::location_weight, P::location_bias}, {},
                                          [&](Network& n, Tape& t, std::span<const Var>) {
                                            return project(t, n.location_mean(t.constant(hidden_in)), 0.4);
                                          })});
  out.push_back({"baseline", check_blocks(p, c, {P::baseline_weight, P::baseline_bias}, {},
                                          [&](Network& n, Tape& t, std::span<const Var>) {
                                            return ops::squared_error(t, n.baseline(t.constant(hidden_in)), 1.0);
                                          })});
  out.push_back({"lstm_f+classifier",
                 check_blocks(p, c, {P::lstm_f_weight, P::lstm_f_bias, P::classifier_weight, P::classifier_bias},
                              {hidden_in}, [&](Network& n, Tape& t, std::span<const Var> x) {
                                auto st = n.frame_step(x[0], n.zero_state(c.hidden_f));
                                st = n.frame_step(x[0], st);
                                return ops::cross_entropy(t, n.classify(st.h), label);
                              })});

  // Composed supervised loss with the sampler frozen: the policy means at the
  // unperturbed parameters are replayed for every evaluation.
  std::vector<std::vector<Location>> locations;
  {
    Tape tape;
    Network net(tape, BoundParams::bind(tape, p, nullptr), c);
    std::vector<Var> conv;
    for (const auto& frame : sample.frames) conv.push_back(net.frontend(frame));
    Rng unused(0);
    for (const auto& f : net.run(conv, label, unused, {LocationMode::mean}).trace.frames) locations.push_back(f.locations);
  }
  std::vector<Tensor> all(p.tensors.begin(), p.tensors.end());
  GradCheckOptions opts;
  std::vector<std::size_t> offsets{0};
  for (const auto& t : all) offsets.push_back(offsets.back() + t.size());
  std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);
  for (std::size_t k = 0; k < loss_coordinates; ++k) {
    const std::size_t flat = pick(rng);
    std::size_t b = 0;
    while (offsets[b + 1] <= flat) ++b;
    opts.coordinates.push_back({b, flat - offsets[b]});
  }
  const TapeFunction loss = [&](Tape& tape, std::span<const Var> vars) {
    Network net(tape, BoundParams::from(vars), c);
    std::vector<Var> conv;
    for (const auto& frame : sample.frames) conv.push_back(net.frontend(frame));
    Rng unused(0);
    const Episode ep = net.run(conv, label, unused, {LocationMode::replay, &locations});
    Var total = ops::cross_entropy(tape, ep.graph.prediction, label);
    for (Var a : ep.graph.frame_actions) {
      total = ops::add(tape, total,
                       ops::scale(tape, ops::cross_entropy(tape, a, label),
                                  1.0 / static_cast<double>(ep.graph.frame_actions.size())));
    }
    return total;
  };
  out.push_back({"supervised_loss", grad_check(loss, all, opts)});
  return out;
}

}  // namespace har
