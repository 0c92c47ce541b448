#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "har/frames.hpp"
#include "har/ops.hpp"
#include "har/tape.hpp"

namespace har {

using Rng = std::mt19937_64;

struct GlimpseConfig {
  std::size_t window_h = 5;
  std::size_t window_w = 5;
  std::size_t n_scales = 2;
  std::size_t scale_factor = 2;
  /// Glimpses per frame.
  std::size_t glimpses = 40;
  /// Per-coordinate standard deviation of the location policy.
  double loc_std = 0.469041575982343;  // sqrt(0.22)

  void validate() const;
};

/// What LSTM-f consumes from each frame.
enum class FrameInput { hidden, action };

struct ModelConfig {
  std::size_t frame_height = 0;
  std::size_t frame_width = 0;
  std::size_t n_classes = 0;
  std::size_t frames_per_sample = 5;

  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  std::size_t kernel = 3;

  GlimpseConfig glimpse;
  std::size_t rho_dim = 128;
  std::size_t loc_dim = 128;
  std::size_t glimpse_dim = 220;
  std::size_t hidden_a = 100;
  std::size_t hidden_f = 1000;
  FrameInput frame_input = FrameInput::hidden;

  std::size_t retina_size() const { return glimpse.n_scales * glimpse.window_h * glimpse.window_w; }
  std::size_t pooled_height() const { return frame_height / 2; }
  std::size_t pooled_width() const { return frame_width / 2; }
  std::size_t frame_feature_dim() const { return frame_input == FrameInput::hidden ? hidden_a : n_classes; }
  void validate() const;
};

enum class ParamId : std::size_t {
  conv1_weight,
  conv1_bias,
  conv2_weight,
  conv2_bias,
  reshape_weight,
  reshape_bias,
  glimpse_rho_weight,
  glimpse_rho_bias,
  glimpse_loc_weight,
  glimpse_loc_bias,
  glimpse_out_weight,
  glimpse_out_bias,
  lstm_a_weight,
  lstm_a_bias,
  location_weight,
  location_bias,
  action_weight,
  action_bias,
  baseline_weight,
  baseline_bias,
  lstm_f_weight,
  lstm_f_bias,
  classifier_weight,
  classifier_bias,
};

inline constexpr std::size_t kParamCount = 24;

std::string_view param_name(std::size_t index);

/// Every trainable tensor of the network, in ParamId order.
struct ModelParams {
  std::array<Tensor, kParamCount> tensors;

  Tensor& operator[](ParamId id) { return tensors[static_cast<std::size_t>(id)]; }
  const Tensor& operator[](ParamId id) const { return tensors[static_cast<std::size_t>(id)]; }

  /// Xavier-uniform weights, zero biases, LSTM forget-gate bias 1.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);
  static ModelParams zeros_like(const ModelParams& other);

  std::vector<Tensor*> pointers();
  std::vector<const Tensor*> pointers() const;
  std::size_t parameter_count() const;
  void set_zero();
  /// Throws DimensionError naming the first tensor whose shape differs.
  void check_shapes(const ModelConfig& config) const;
};

/// Attention location in [-1, 1]^2; -1 is the first row/column, +1 the last.
struct Location {
  double y = 0.0;
  double x = 0.0;

  Location clamped() const;
  friend bool operator==(const Location&, const Location&) = default;
};

/// Frame cell (row, col) a location points at.
std::pair<std::size_t, std::size_t> location_cell(const Location& loc, std::size_t height, std::size_t width);

/// Multi-resolution patches around `loc` from a 2-D matrix, [n_scales x h x w].
/// Scale s crops (h * f^s) x (w * f^s) cells centered on the location (zero
/// outside the matrix) and averages f^s x f^s blocks down to h x w.
Tensor extract_retina(const Tensor& matrix, const Location& loc, const GlimpseConfig& config);

struct LocationSample {
  Location raw;      ///< the Gaussian draw
  Location clamped;  ///< where the glimpse goes
  /// Log-density of `raw` under the policy.
  double log_prob = 0.0;
};

/// Draws from an isotropic 2-D Gaussian around `mean`.
LocationSample sample_location(const Location& mean, double stddev, Rng& rng);

/// Log-density of `point` under an isotropic 2-D Gaussian.
double location_log_prob(const Location& point, const Location& mean, double stddev);

enum class LocationMode {
  sample,  ///< draw from the Gaussian policy
  mean,    ///< use the policy mean
  replay,  ///< reuse locations supplied by the caller
};

struct FrameTrace {
  std::vector<Location> locations;   ///< T entries; the first is the frame center
  std::vector<double> log_probs;     ///< 0 for the initial location
  std::vector<Location> means;       ///< policy mean behind each location
  std::vector<Tensor> hidden;        ///< h_1..h_T
  std::vector<Tensor> actions;       ///< a_1..a_T
};

struct EpisodeTrace {
  std::vector<FrameTrace> frames;
  std::vector<Tensor> frame_states;  ///< r^1..r^F
  Tensor prediction;
  std::size_t label = 0;
  int reward = 0;

  std::size_t location_count() const;
};

/// Tape handles of one episode, for building losses.
struct EpisodeGraph {
  Var prediction;
  std::vector<Var> frame_actions;  ///< a^f_T per frame
  /// Per sampled location (frame-major): log-density and baseline estimate.
  std::vector<Var> log_probs;
  std::vector<Var> baselines;
  std::vector<std::size_t> log_prob_frame;  ///< frame owning each entry
};

struct Episode {
  EpisodeGraph graph;
  EpisodeTrace trace;
};

struct EpisodeOptions {
  LocationMode mode = LocationMode::sample;
  /// Per frame, T locations; required for LocationMode::replay.
  const std::vector<std::vector<Location>>* replay = nullptr;
};

/// Parameter handles on a tape, in ParamId order.
struct BoundParams {
  std::array<Var, kParamCount> vars;
  Var operator[](ParamId id) const { return vars[static_cast<std::size_t>(id)]; }

  /// Registers every tensor; gradients land in `grads` when given.
  static BoundParams bind(Tape& tape, const ModelParams& params, ModelParams* grads);
  static BoundParams from(std::span<const Var> vars);
};

/// The recurrent attention network bound to one tape.
class Network {
 public:
  Network(Tape& tape, BoundParams params, const ModelConfig& config);

  /// conv -> relu -> maxpool -> conv -> relu -> linear, reshaped to the frame.
  Var frontend(const Tensor& frame);
  Var retina(Var conv_frame, const Location& loc);
  /// relu(W_s (W_rho rho + W_l l) + b)
  Var glimpse(Var retina, const Location& loc);
  ops::LstmState attention_step(Var glimpse, ops::LstmState state);
  /// tanh-squashed mean of the location policy; reads a detached h.
  Var location_mean(Var hidden);
  Var action(Var hidden);
  /// Scalar reward baseline; reads a detached h.
  Var baseline(Var hidden);
  ops::LstmState frame_step(Var frame_input, ops::LstmState state);
  Var classify(Var frame_state);

  /// Runs all frames of a sample given their conv front-end outputs.
  Episode run(std::span<const Var> conv_frames, std::size_t label, Rng& rng, const EpisodeOptions& options = {});

  ops::LstmState zero_state(std::size_t dim);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  BoundParams params_;
  const ModelConfig& config_;
};

/// One stochastic pass over a sample without gradient tracking.
Episode forward_episode(const Sample& sample, const ModelParams& params, const ModelConfig& config, Rng& rng,
                        const EpisodeOptions& options = {});

/// Mean of M independent episode predictions; the front-end runs once.
Tensor predict_mc(const Sample& sample, const ModelParams& params, const ModelConfig& config, std::size_t copies,
                  Rng& rng, std::vector<EpisodeTrace>* traces = nullptr);

std::size_t argmax(std::span<const double> values);

/// Seed of RNG stream `index` derived from `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace har
