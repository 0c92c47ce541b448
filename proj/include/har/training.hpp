#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "har/model.hpp"
#include "har/optim.hpp"

namespace har {

/// Which prediction decides the REINFORCE reward of a location.
enum class RewardMode {
  final,      ///< the sample's final prediction, for every location
  per_frame,  ///< the owning frame's last action
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  /// Monte Carlo copies per sample during training.
  std::size_t mc_copies = 20;
  /// Monte Carlo copies per sample at evaluation.
  std::size_t eval_copies = 20;
  double lr_start = 0.01;
  double lr_end = 1e-5;
  /// Linear per-step annealing; lr_start throughout when off.
  bool anneal = true;
  bool baseline_enabled = true;
  double frame_ce_weight = 1.0;
  RewardMode reward_mode = RewardMode::final;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  /// Return the epoch with the best validation accuracy instead of the last.
  bool select_best = false;
  std::size_t threads = 1;

  /// Every violated constraint, in field order; empty when valid.
  std::vector<std::string> validation_errors() const;
  /// Throws std::invalid_argument listing all violations.
  void validate() const;
};

/// 1 when argmax(prediction) == label (ties to the lowest index), else 0.
int reward(const Tensor& prediction, std::size_t label);

struct EpisodeLoss {
  Var total;
  /// CE of the final prediction plus the weighted frame-action CE.
  double supervised = 0.0;
  double policy = 0.0;
  double baseline = 0.0;
  /// R - b per sampled location; these multiply -log_prob in the loss.
  std::vector<double> advantages;
};

/// Builds the hybrid objective of one episode on its tape. Advantages are
/// constants, so the policy term only reaches the location head and the
/// baseline is fit by squared error against the reward.
EpisodeLoss episode_loss(Tape& tape, const EpisodeGraph& graph, const EpisodeTrace& trace, const TrainConfig& config);

struct EstimatorCheck {
  double empirical = 0.0;
  double analytic = 0.0;
  /// Standard error of the empirical mean.
  double stderr_ = 0.0;
};

/// Score-function estimate of d/dmu E[f(x)], x ~ N(mu, sigma^2), from
/// `samples` draws, against the supplied analytic value.
EstimatorCheck reinforce_estimator_check(double mu, double sigma, const std::function<double(double)>& f,
                                         double analytic, std::size_t samples, std::uint64_t seed);

struct SampleStats {
  double loss = 0.0;     ///< supervised loss averaged over copies
  double correct = 0.0;  ///< fraction of copies whose prediction was right
};

/// Runs one episode per seed on a single tape, averaging the copies'
/// objectives, and accumulates the gradient into `grads`.
SampleStats accumulate_sample_gradient(const Sample& sample, const ModelParams& params, const ModelConfig& model,
                                       const TrainConfig& config, std::span<const std::uint64_t> copy_seeds,
                                       ModelParams& grads);

/// Throws NumericError naming the first block holding a NaN or infinity.
void check_finite(const ModelParams& tensors, std::string_view what, std::size_t step);

struct StepMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

/// One optimizer step over a batch: per-sample gradients summed in batch
/// order, NaN check, global-norm clipping, Adam at the annealed rate.
/// Throws NumericError naming the parameter block on a non-finite gradient.
StepMetrics train_step(std::span<const Sample* const> batch, ModelParams& params, AdamState& state,
                       const ModelConfig& model, const TrainConfig& config, std::size_t step,
                       std::size_t total_steps, std::uint64_t step_seed);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;  ///< "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochMetrics> log;
  /// Epoch of the returned parameters; 0 means the initialization.
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains from `initial` with seeded shuffling, logging a "train" row per
/// epoch and a "test" row when a validation split is given. With select_best
/// the parameters with the best validation accuracy are returned (earliest on
/// ties), otherwise the final ones.
FitResult fit(std::span<const Sample> train, std::span<const Sample> validation, const ModelParams& initial,
              const ModelConfig& model, const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace har
