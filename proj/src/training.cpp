#include "har/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

#include "har/eval.hpp"
#include "har/parallel.hpp"

namespace har {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kStepStream = 0x53544550ULL;
constexpr std::uint64_t kEvalStream = 0x4556414cULL;

}  // namespace

std::vector<std::string> TrainConfig::validation_errors() const {
  std::vector<std::string> errors;
  if (batch_size < 1) errors.push_back("batch_size must be at least 1");
  if (mc_copies < 1) errors.push_back("mc_copies (M) must be at least 1");
  if (eval_copies < 1) errors.push_back("eval_copies must be at least 1");
  if (!(lr_end > 0.0)) errors.push_back("lr_end must be positive");
  if (!(lr_start >= lr_end)) errors.push_back("lr_start must be at least lr_end");
  if (!(frame_ce_weight >= 0.0)) errors.push_back("frame_ce_weight must be non-negative");
  if (!(clip_norm > 0.0)) errors.push_back("clip_norm must be positive");
  if (threads < 1) errors.push_back("threads must be at least 1");
  return errors;
}

void TrainConfig::validate() const {
  const auto errors = validation_errors();
  if (errors.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

int reward(const Tensor& prediction, std::size_t label) { return argmax(prediction.data()) == label ? 1 : 0; }

EpisodeLoss episode_loss(Tape& tape, const EpisodeGraph& graph, const EpisodeTrace& trace, const TrainConfig& config) {
  const std::size_t frames = graph.frame_actions.size();
  if (!graph.prediction.valid() || frames == 0 || trace.frames.size() != frames ||
      graph.log_probs.size() != graph.baselines.size() || graph.log_probs.size() != graph.log_prob_frame.size()) {
    throw std::invalid_argument("episode_loss: incomplete episode trace");
  }
  const std::size_t label = trace.label;
  EpisodeLoss out;
  Var total = ops::cross_entropy(tape, graph.prediction, label);
  if (config.frame_ce_weight > 0.0) {
    Var frame_sum = ops::cross_entropy(tape, graph.frame_actions[0], label);
    for (std::size_t f = 1; f < frames; ++f) {
      frame_sum = ops::add(tape, frame_sum, ops::cross_entropy(tape, graph.frame_actions[f], label));
    }
    total = ops::add(tape, total, ops::scale(tape, frame_sum, config.frame_ce_weight / static_cast<double>(frames)));
  }
  out.supervised = tape.value(total)[0];

  std::vector<int> frame_rewards(frames, reward(tape.value(graph.prediction), label));
  if (config.reward_mode == RewardMode::per_frame) {
    for (std::size_t f = 0; f < frames; ++f) frame_rewards[f] = reward(tape.value(graph.frame_actions[f]), label);
  }
  for (std::size_t i = 0; i < graph.log_probs.size(); ++i) {
    const double r = frame_rewards.at(graph.log_prob_frame[i]);
    const double b = config.baseline_enabled ? tape.value(graph.baselines[i])[0] : 0.0;
    const double advantage = r - b;
    out.advantages.push_back(advantage);
    out.policy -= advantage * tape.value(graph.log_probs[i])[0];
    if (advantage != 0.0) total = ops::add(tape, total, ops::scale(tape, graph.log_probs[i], -advantage));
    if (config.baseline_enabled) {
      const Var se = ops::squared_error(tape, graph.baselines[i], r);
      out.baseline += tape.value(se)[0];
      total = ops::add(tape, total, se);
    }
  }
  out.total = total;
  return out;
}

EstimatorCheck reinforce_estimator_check(double mu, double sigma, const std::function<double(double)>& f,
                                         double analytic, std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("the estimator check needs at least 2 samples");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(mu, sigma);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = normal(rng);
    const double term = f(x) * (x - mu) / (sigma * sigma);
    const double delta = term - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (term - mean);
  }
  const double variance = m2 / static_cast<double>(samples - 1);
  return {mean, analytic, std::sqrt(variance / static_cast<double>(samples))};
}

SampleStats accumulate_sample_gradient(const Sample& sample, const ModelParams& params, const ModelConfig& model,
                                       const TrainConfig& config, std::span<const std::uint64_t> copy_seeds,
                                       ModelParams& grads) {
  if (copy_seeds.empty()) throw std::invalid_argument("at least one Monte Carlo copy is required");
  Tape tape;
  Network net(tape, BoundParams::bind(tape, params, &grads), model);
  std::vector<Var> conv;
  for (const auto& frame : sample.frames) conv.push_back(net.frontend(frame));

  SampleStats stats;
  Var total;
  for (const std::uint64_t seed : copy_seeds) {
    Rng rng(seed);
    Episode ep = net.run(conv, sample.label, rng);
    const EpisodeLoss loss = episode_loss(tape, ep.graph, ep.trace, config);
    total = total.valid() ? ops::add(tape, total, loss.total) : loss.total;
    stats.loss += loss.supervised;
    stats.correct += ep.trace.reward;
  }
  const double inv = 1.0 / static_cast<double>(copy_seeds.size());
  tape.backward(ops::scale(tape, total, inv));
  stats.loss *= inv;
  stats.correct *= inv;
  return stats;
}

void check_finite(const ModelParams& tensors, std::string_view what, std::size_t step) {
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!tensors.tensors[i].all_finite()) {
      throw NumericError("non-finite " + std::string(what) + " in parameter block '" + std::string(param_name(i)) +
                         "' at training step " + std::to_string(step));
    }
  }
}

StepMetrics train_step(std::span<const Sample* const> batch, ModelParams& params, AdamState& state,
                       const ModelConfig& model, const TrainConfig& config, std::size_t step,
                       std::size_t total_steps, std::uint64_t step_seed) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  check_finite(params, "parameter", step);
  const std::size_t chunks = chunk_count(batch.size(), config.threads);
  std::vector<ModelParams> chunk_grads;
  for (std::size_t c = 0; c < chunks; ++c) chunk_grads.push_back(ModelParams::zeros_like(params));
  std::vector<SampleStats> stats(batch.size());

  parallel_chunks(batch.size(), config.threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::uint64_t sample_seed = derive_seed(step_seed, b);
      std::vector<std::uint64_t> seeds(config.mc_copies);
      for (std::size_t m = 0; m < seeds.size(); ++m) seeds[m] = derive_seed(sample_seed, m);
      stats[b] = accumulate_sample_gradient(*batch[b], params, model, config, seeds, chunk_grads[c]);
    }
  });

  ModelParams& grads = chunk_grads[0];
  for (std::size_t c = 1; c < chunks; ++c)
    for (std::size_t i = 0; i < kParamCount; ++i) grads.tensors[i] += chunk_grads[c].tensors[i];
  check_finite(grads, "gradient", step);

  StepMetrics metrics;
  for (const auto& s : stats) {
    metrics.loss += s.loss;
    metrics.accuracy += s.correct;
  }
  metrics.loss /= static_cast<double>(batch.size());
  metrics.accuracy /= static_cast<double>(batch.size());

  auto grad_ptrs = grads.pointers();
  metrics.grad_norm = clip_global_norm(grad_ptrs, config.clip_norm);
  metrics.lr = config.anneal ? annealed_lr(config.lr_start, config.lr_end, step, total_steps) : config.lr_start;
  auto param_ptrs = params.pointers();
  const auto const_grads = std::as_const(grads).pointers();
  adam_step(param_ptrs, const_grads, state, AdamHyper{.lr = metrics.lr});
  return metrics;
}

FitResult fit(std::span<const Sample> train, std::span<const Sample> validation, const ModelParams& initial,
              const ModelConfig& model, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  initial.check_shapes(model);
  FitResult result{initial, {}, 0};
  if (config.epochs == 0) return result;
  if (train.empty()) throw std::invalid_argument("fit: training split is empty");

  ModelParams params = initial;
  auto ptrs = params.pointers();
  AdamState state = AdamState::for_params(ptrs);
  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * steps_per_epoch;
  double best_accuracy = -1.0;

  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed ^ kShuffleStream, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, acc_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const Sample*> batch;
      for (std::size_t k = begin; k < end; ++k) batch.push_back(&train[order[k]]);
      const StepMetrics m =
          train_step(batch, params, state, model, config, step, total_steps, derive_seed(config.seed ^ kStepStream, step));
      loss_sum += m.loss * static_cast<double>(batch.size());
      acc_sum += m.accuracy * static_cast<double>(batch.size());
    }
    EpochMetrics train_row{epoch, "train", loss_sum / static_cast<double>(train.size()),
                           acc_sum / static_cast<double>(train.size())};
    result.log.push_back(train_row);
    if (on_epoch) on_epoch(train_row);

    if (!validation.empty()) {
      const EvalResult ev =
          evaluate(validation, params, model, config.eval_copies, config.seed ^ kEvalStream, false, config.threads);
      EpochMetrics test_row{epoch, "test", ev.loss, ev.accuracy};
      result.log.push_back(test_row);
      if (on_epoch) on_epoch(test_row);
      if (config.select_best && ev.accuracy > best_accuracy) {
        best_accuracy = ev.accuracy;
        result.params = params;
        result.best_epoch = epoch;
      }
    }
  }
  if (!config.select_best || validation.empty()) {
    result.params = std::move(params);
    result.best_epoch = config.epochs;
  }
  return result;
}

}  // namespace har
