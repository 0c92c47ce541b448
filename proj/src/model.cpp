#include "har/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace har {

namespace {

constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "conv1.weight",       "conv1.bias",      "conv2.weight",       "conv2.bias",
    "reshape.weight",     "reshape.bias",    "glimpse_rho.weight", "glimpse_rho.bias",
    "glimpse_loc.weight", "glimpse_loc.bias", "glimpse_out.weight", "glimpse_out.bias",
    "lstm_a.weight",      "lstm_a.bias",     "location.weight",    "location.bias",
    "action.weight",      "action.bias",     "baseline.weight",    "baseline.bias",
    "lstm_f.weight",      "lstm_f.bias",     "classifier.weight",  "classifier.bias",
};

std::array<Shape, kParamCount> param_shapes(const ModelConfig& c) {
  const std::size_t k = c.kernel;
  const std::size_t frame = c.frame_height * c.frame_width;
  const std::size_t conv_out = c.conv2_filters * c.pooled_height() * c.pooled_width();
  return {
      Shape{c.conv1_filters, 1, k, k},
      Shape{c.conv1_filters},
      Shape{c.conv2_filters, c.conv1_filters, k, k},
      Shape{c.conv2_filters},
      Shape{frame, conv_out},
      Shape{frame},
      Shape{c.rho_dim, c.retina_size()},
      Shape{c.rho_dim},
      Shape{c.loc_dim, 2},
      Shape{c.loc_dim},
      Shape{c.glimpse_dim, c.rho_dim},
      Shape{c.glimpse_dim},
      Shape{4 * c.hidden_a, c.glimpse_dim + c.hidden_a},
      Shape{4 * c.hidden_a},
      Shape{2, c.hidden_a},
      Shape{2},
      Shape{c.n_classes, c.hidden_a},
      Shape{c.n_classes},
      Shape{1, c.hidden_a},
      Shape{1},
      Shape{4 * c.hidden_f, c.frame_feature_dim() + c.hidden_f},
      Shape{4 * c.hidden_f},
      Shape{c.n_classes, c.hidden_f},
      Shape{c.n_classes},
  };
}

}  // namespace

void GlimpseConfig::validate() const {
  if (window_h < 1 || window_w < 1) throw std::invalid_argument("glimpse window must be at least 1x1");
  if (n_scales < 1) throw std::invalid_argument("retina needs at least one scale");
  if (scale_factor < 1) throw std::invalid_argument("retina scale factor must be at least 1");
  if (glimpses < 1) throw std::invalid_argument("at least one glimpse per frame is required");
  if (!(loc_std > 0.0)) throw std::invalid_argument("location standard deviation must be positive");
}

void ModelConfig::validate() const {
  glimpse.validate();
  if (frame_height < 2 || frame_width < 2) {
    throw std::invalid_argument("frames must be at least 2x2, got " + std::to_string(frame_height) + "x" +
                                std::to_string(frame_width));
  }
  if (n_classes < 2) throw std::invalid_argument("at least 2 classes are required");
  if (frames_per_sample < 1) throw std::invalid_argument("at least one frame per sample is required");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("convolution kernel size must be odd");
  if (conv1_filters < 1 || conv2_filters < 1) throw std::invalid_argument("convolution filter counts must be positive");
  if (rho_dim != loc_dim) {
    throw std::invalid_argument("retina and location branches must share a width to be summed");
  }
  if (rho_dim < 1 || glimpse_dim < 1 || hidden_a < 1 || hidden_f < 1) {
    throw std::invalid_argument("layer widths must be positive");
  }
}

std::string_view param_name(std::size_t index) { return kParamNames.at(index); }

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const auto shapes = param_shapes(config);
  ModelParams p;
  for (std::size_t i = 0; i < kParamCount; ++i) p.tensors[i] = Tensor(shapes[i]);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  for (std::size_t i = 0; i < kParamCount; ++i) p.tensors[i] = Tensor::zeros_like(other.tensors[i]);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  Rng rng(seed);
  for (std::size_t i = 0; i < kParamCount; i += 2) {
    Tensor& w = p.tensors[i];
    const Shape& s = w.shape();
    double fan_in = 0.0, fan_out = 0.0;
    if (s.size() == 4) {
      const double receptive = static_cast<double>(s[2] * s[3]);
      fan_in = static_cast<double>(s[1]) * receptive;
      fan_out = static_cast<double>(s[0]) * receptive;
    } else {
      fan_in = static_cast<double>(s[1]);
      fan_out = static_cast<double>(s[0]);
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.data()) v = dist(rng);
  }
  for (ParamId lstm : {ParamId::lstm_a_bias, ParamId::lstm_f_bias}) {
    Tensor& b = p[lstm];
    const std::size_t d = b.size() / 4;
    for (std::size_t j = d; j < 2 * d; ++j) b[j] = 1.0;
  }
  return p;
}

std::vector<Tensor*> ModelParams::pointers() {
  std::vector<Tensor*> out;
  for (auto& t : tensors) out.push_back(&t);
  return out;
}

std::vector<const Tensor*> ModelParams::pointers() const {
  std::vector<const Tensor*> out;
  for (const auto& t : tensors) out.push_back(&t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

void ModelParams::set_zero() {
  for (auto& t : tensors) t.fill(0.0);
}

void ModelParams::check_shapes(const ModelConfig& config) const {
  const auto shapes = param_shapes(config);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (tensors[i].shape() != shapes[i]) {
      throw DimensionError("parameter " + std::string(kParamNames[i]) + " has shape " +
                           to_string(tensors[i].shape()) + ", configuration expects " + to_string(shapes[i]));
    }
  }
}

Location Location::clamped() const { return {std::clamp(y, -1.0, 1.0), std::clamp(x, -1.0, 1.0)}; }

std::pair<std::size_t, std::size_t> location_cell(const Location& loc, std::size_t height, std::size_t width) {
  const Location c = loc.clamped();
  const auto row = std::lround((c.y + 1.0) / 2.0 * static_cast<double>(height - 1));
  const auto col = std::lround((c.x + 1.0) / 2.0 * static_cast<double>(width - 1));
  return {static_cast<std::size_t>(row), static_cast<std::size_t>(col)};
}

double location_log_prob(const Location& point, const Location& mean, double stddev) {
  const double dy = point.y - mean.y, dx = point.x - mean.x;
  return -(dy * dy + dx * dx) / (2.0 * stddev * stddev) - 2.0 * std::log(stddev) -
         std::log(2.0 * std::numbers::pi);
}

LocationSample sample_location(const Location& mean, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LocationSample s;
  s.raw.y = mean.y + stddev * normal(rng);
  s.raw.x = mean.x + stddev * normal(rng);
  s.clamped = s.raw.clamped();
  s.log_prob = location_log_prob(s.raw, mean, stddev);
  return s;
}

namespace {

// Calls fn(out_index, in_index, weight) for every in-bounds contribution to
// the retina output.
template <class Fn>
void for_each_retina_tap(std::size_t height, std::size_t width, const Location& loc, const GlimpseConfig& cfg,
                         Fn&& fn) {
  const auto [cy, cx] = location_cell(loc, height, width);
  std::size_t block = 1;
  for (std::size_t s = 0; s < cfg.n_scales; ++s, block *= cfg.scale_factor) {
    const auto ph = static_cast<std::ptrdiff_t>(cfg.window_h * block);
    const auto pw = static_cast<std::ptrdiff_t>(cfg.window_w * block);
    const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(cy) - ph / 2;
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>(cx) - pw / 2;
    const double weight = 1.0 / static_cast<double>(block * block);
    for (std::size_t i = 0; i < cfg.window_h; ++i)
      for (std::size_t j = 0; j < cfg.window_w; ++j) {
        const std::size_t out = (s * cfg.window_h + i) * cfg.window_w + j;
        for (std::size_t di = 0; di < block; ++di) {
          const std::ptrdiff_t r = top + static_cast<std::ptrdiff_t>(i * block + di);
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t dj = 0; dj < block; ++dj) {
            const std::ptrdiff_t c = left + static_cast<std::ptrdiff_t>(j * block + dj);
            if (c < 0 || c >= static_cast<std::ptrdiff_t>(width)) continue;
            fn(out, static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c), weight);
          }
        }
      }
  }
}

}  // namespace

Tensor extract_retina(const Tensor& matrix, const Location& loc, const GlimpseConfig& config) {
  if (matrix.rank() != 2) throw DimensionError("retina input must be a matrix, got " + to_string(matrix.shape()));
  config.validate();
  Tensor out(Shape{config.n_scales, config.window_h, config.window_w});
  for_each_retina_tap(matrix.dim(0), matrix.dim(1), loc, config,
                      [&](std::size_t o, std::size_t i, double w) { out[o] += w * matrix[i]; });
  return out;
}

std::size_t EpisodeTrace::location_count() const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.locations.size();
  return n;
}

BoundParams BoundParams::bind(Tape& tape, const ModelParams& params, ModelParams* grads) {
  BoundParams b;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    b.vars[i] = tape.parameter(params.tensors[i], grads ? &grads->tensors[i] : nullptr);
  }
  return b;
}

BoundParams BoundParams::from(std::span<const Var> vars) {
  if (vars.size() != kParamCount) {
    throw DimensionError("expected " + std::to_string(kParamCount) + " parameter handles, got " +
                         std::to_string(vars.size()));
  }
  BoundParams b;
  std::copy(vars.begin(), vars.end(), b.vars.begin());
  return b;
}

Network::Network(Tape& tape, BoundParams params, const ModelConfig& config)
    : tape_(tape), params_(params), config_(config) {
  config_.validate();
}

Var Network::frontend(const Tensor& frame) {
  const std::size_t h = config_.frame_height, w = config_.frame_width;
  if (frame.rank() != 2 || frame.dim(0) != h || frame.dim(1) != w) {
    throw DimensionError("frame " + to_string(frame.shape()) + " does not match configured " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  const std::size_t pad = config_.kernel / 2;
  Var x = tape_.constant(frame.reshaped(Shape{1, h, w}));
  x = ops::conv2d(tape_, x, params_[ParamId::conv1_weight], params_[ParamId::conv1_bias], 1, pad);
  x = ops::relu(tape_, x);
  x = ops::maxpool2d(tape_, x, 2, 2);
  x = ops::conv2d(tape_, x, params_[ParamId::conv2_weight], params_[ParamId::conv2_bias], 1, pad);
  x = ops::relu(tape_, x);
  x = ops::reshape(tape_, x, Shape{tape_.value(x).size()});
  x = ops::linear(tape_, params_[ParamId::reshape_weight], x, params_[ParamId::reshape_bias]);
  return ops::reshape(tape_, x, Shape{h, w});
}

Var Network::retina(Var conv_frame, const Location& loc) {
  const Tensor& matrix = tape_.value(conv_frame);
  const GlimpseConfig& cfg = config_.glimpse;
  Tensor out = extract_retina(matrix, loc, cfg);
  out = out.reshaped(Shape{out.size()});
  const std::size_t height = matrix.dim(0), width = matrix.dim(1);
  return tape_.record(std::move(out), tape_.needs_grad(conv_frame),
                      [conv_frame, loc, cfg, height, width](Tape& t, const Tensor&, const Tensor& g) {
                        Tensor& gm = t.grad_buffer(conv_frame);
                        for_each_retina_tap(height, width, loc, cfg,
                                            [&](std::size_t o, std::size_t i, double w) { gm[i] += w * g[o]; });
                      });
}

Var Network::glimpse(Var retina, const Location& loc) {
  const Var rho = ops::linear(tape_, params_[ParamId::glimpse_rho_weight], retina, params_[ParamId::glimpse_rho_bias]);
  const Var l = tape_.constant(Tensor::vector({loc.y, loc.x}));
  const Var where = ops::linear(tape_, params_[ParamId::glimpse_loc_weight], l, params_[ParamId::glimpse_loc_bias]);
  const Var fused = ops::add(tape_, rho, where);
  return ops::relu(tape_, ops::linear(tape_, params_[ParamId::glimpse_out_weight], fused,
                                      params_[ParamId::glimpse_out_bias]));
}

ops::LstmState Network::attention_step(Var glimpse, ops::LstmState state) {
  return ops::lstm_cell(tape_, glimpse, state, params_[ParamId::lstm_a_weight], params_[ParamId::lstm_a_bias]);
}

Var Network::location_mean(Var hidden) {
  const Var h = ops::detach(tape_, hidden);
  return ops::tanh(tape_, ops::linear(tape_, params_[ParamId::location_weight], h, params_[ParamId::location_bias]));
}

Var Network::action(Var hidden) {
  return ops::softmax(tape_, ops::linear(tape_, params_[ParamId::action_weight], hidden, params_[ParamId::action_bias]));
}

Var Network::baseline(Var hidden) {
  const Var h = ops::detach(tape_, hidden);
  return ops::linear(tape_, params_[ParamId::baseline_weight], h, params_[ParamId::baseline_bias]);
}

ops::LstmState Network::frame_step(Var frame_input, ops::LstmState state) {
  return ops::lstm_cell(tape_, frame_input, state, params_[ParamId::lstm_f_weight], params_[ParamId::lstm_f_bias]);
}

Var Network::classify(Var frame_state) {
  return ops::softmax(tape_, ops::linear(tape_, params_[ParamId::classifier_weight], frame_state,
                                         params_[ParamId::classifier_bias]));
}

ops::LstmState Network::zero_state(std::size_t dim) {
  return {tape_.constant(Tensor(Shape{dim})), tape_.constant(Tensor(Shape{dim}))};
}

Episode Network::run(std::span<const Var> conv_frames, std::size_t label, Rng& rng, const EpisodeOptions& options) {
  const std::size_t steps = config_.glimpse.glimpses;
  const double sigma = config_.glimpse.loc_std;
  if (conv_frames.size() != config_.frames_per_sample) {
    throw DimensionError("episode expects " + std::to_string(config_.frames_per_sample) + " frames, got " +
                         std::to_string(conv_frames.size()));
  }
  if (options.mode == LocationMode::replay) {
    if (!options.replay || options.replay->size() != conv_frames.size()) {
      throw std::invalid_argument("replay mode needs one location list per frame");
    }
    for (const auto& f : *options.replay) {
      if (f.size() != steps) throw std::invalid_argument("replay locations must hold one entry per glimpse");
    }
  }
  Episode ep;
  ep.trace.label = label;
  ops::LstmState frame_state = zero_state(config_.hidden_f);
  for (std::size_t f = 0; f < conv_frames.size(); ++f) {
    FrameTrace ft;
    ops::LstmState state = zero_state(config_.hidden_a);
    Location loc{0.0, 0.0};
    ft.locations.push_back(loc);
    ft.log_probs.push_back(0.0);
    ft.means.push_back(loc);
    Var act;
    for (std::size_t t = 0; t < steps; ++t) {
      const Var rho = retina(conv_frames[f], loc);
      const Var g = glimpse(rho, loc);
      state = attention_step(g, state);
      act = action(state.h);
      ft.hidden.push_back(tape_.value(state.h));
      ft.actions.push_back(tape_.value(act));
      if (t + 1 == steps) break;

      const Var mean = location_mean(state.h);
      const Tensor& mu = tape_.value(mean);
      const Location mean_loc{mu[0], mu[1]};
      Location raw = mean_loc;
      if (options.mode == LocationMode::sample) {
        raw = sample_location(mean_loc, sigma, rng).raw;
      } else if (options.mode == LocationMode::replay) {
        raw = (*options.replay)[f][t + 1];
      }
      const Var lp = ops::gaussian_log_prob(tape_, mean, Tensor::vector({raw.y, raw.x}), sigma);
      ep.graph.log_probs.push_back(lp);
      ep.graph.baselines.push_back(baseline(state.h));
      ep.graph.log_prob_frame.push_back(f);
      loc = raw.clamped();
      ft.locations.push_back(loc);
      ft.log_probs.push_back(tape_.value(lp)[0]);
      ft.means.push_back(mean_loc);
    }
    ep.graph.frame_actions.push_back(act);
    const Var feature = config_.frame_input == FrameInput::hidden ? state.h : act;
    frame_state = frame_step(feature, frame_state);
    ep.trace.frame_states.push_back(tape_.value(frame_state.h));
    ep.trace.frames.push_back(std::move(ft));
  }
  ep.graph.prediction = classify(frame_state.h);
  ep.trace.prediction = tape_.value(ep.graph.prediction);
  ep.trace.reward = argmax(ep.trace.prediction.data()) == label ? 1 : 0;
  return ep;
}

Episode forward_episode(const Sample& sample, const ModelParams& params, const ModelConfig& config, Rng& rng,
                        const EpisodeOptions& options) {
  Tape tape;
  Network net(tape, BoundParams::bind(tape, params, nullptr), config);
  std::vector<Var> conv;
  for (const auto& frame : sample.frames) conv.push_back(net.frontend(frame));
  return net.run(conv, sample.label, rng, options);
}

Tensor predict_mc(const Sample& sample, const ModelParams& params, const ModelConfig& config, std::size_t copies,
                  Rng& rng, std::vector<EpisodeTrace>* traces) {
  if (copies < 1) throw std::invalid_argument("Monte Carlo prediction needs at least one copy");
  Tape tape;
  Network net(tape, BoundParams::bind(tape, params, nullptr), config);
  std::vector<Var> conv;
  for (const auto& frame : sample.frames) conv.push_back(net.frontend(frame));
  Tensor mean(Shape{config.n_classes});
  for (std::size_t m = 0; m < copies; ++m) {
    Episode ep = net.run(conv, sample.label, rng);
    mean += ep.trace.prediction;
    if (traces) traces->push_back(std::move(ep.trace));
  }
  mean *= 1.0 / static_cast<double>(copies);
  return mean;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace har
