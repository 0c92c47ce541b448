#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "fixtures.hpp"
#include "har/training.hpp"

using namespace har;
using namespace har::testing;

namespace {

/// Makes every prediction a confident, correct `label`, so each episode
/// earns reward 1 regardless of where it looks.
void force_label(ModelParams& p, std::size_t label) {
  p[ParamId::classifier_weight].fill(0.0);
  p[ParamId::classifier_bias].fill(0.0);
  p[ParamId::classifier_bias][label] = 40.0;
}

TrainConfig quick_config() {
  TrainConfig t;
  t.mc_copies = 2;
  t.eval_copies = 2;
  t.batch_size = 4;
  t.anneal = false;
  return t;
}

/// Class k lights up rows 3k..3k+2 of every frame on top of noise.
std::vector<Sample> banded_samples(const ModelConfig& c, std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t k = 0; k < c.n_classes; ++k) {
      Sample s;
      s.label = k;
      s.subject = "s";
      for (std::size_t f = 0; f < c.frames_per_sample; ++f) {
        Tensor m = random_tensor({c.frame_height, c.frame_width}, rng, 0.3);
        for (std::size_t r = 3 * k; r < 3 * k + 3; ++r)
          for (std::size_t col = 0; col < c.frame_width; ++col) m.at(r, col) += 1.5;
        s.frames.push_back(std::move(m));
      }
      out.push_back(std::move(s));
    }
  return out;
}

std::vector<double> location_grad(const Sample& s, const ModelParams& p, const ModelConfig& c, const TrainConfig& t,
                                  std::uint64_t seed) {
  ModelParams g = ModelParams::zeros_like(p);
  const std::uint64_t seeds[] = {seed};
  accumulate_sample_gradient(s, p, c, t, seeds, g);
  std::vector<double> out(g[ParamId::location_weight].data().begin(), g[ParamId::location_weight].data().end());
  out.insert(out.end(), g[ParamId::location_bias].data().begin(), g[ParamId::location_bias].data().end());
  return out;
}

}  // namespace

TEST_CASE("reward uses the lowest index on ties") {
  const Tensor p = Tensor::vector({0.4, 0.4, 0.2});
  CHECK(reward(p, 0) == 1);
  CHECK(reward(p, 1) == 0);
  CHECK(reward(Tensor::vector({0.1, 0.2, 0.7}), 2) == 1);
}

TEST_CASE("configuration errors are all reported") {
  TrainConfig t;
  CHECK(t.validation_errors().empty());
  t.batch_size = 0;
  t.mc_copies = 0;
  t.clip_norm = -1.0;
  t.lr_start = 1e-6;
  const auto errors = t.validation_errors();
  CHECK(errors.size() == 4);
  try {
    t.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    for (const auto& msg : errors) CHECK(std::string(e.what()).find(msg) != std::string::npos);
  }
}

TEST_CASE("score function estimator on small samples") {
  const auto lin = reinforce_estimator_check(1.0, 1.0, [](double x) { return x; }, 1.0, 100000, 3);
  CHECK(std::abs(lin.empirical - 1.0) < 0.05);
  const auto sq = reinforce_estimator_check(1.0, 1.0, [](double x) { return x * x; }, 2.0, 100000, 4);
  CHECK(std::abs(sq.empirical - 2.0) < 0.1);
  const auto flat = reinforce_estimator_check(1.0, 1.0, [](double) { return 3.0; }, 0.0, 100000, 5);
  CHECK(std::abs(flat.empirical) < 3.0 * flat.stderr_);
}

TEST_CASE("episode loss pieces") {
  const ModelConfig c = tiny_config();
  std::mt19937_64 gen(1);
  ModelParams p = ModelParams::init(c, 1);
  const Sample s = random_sample(c, gen, 2);
  Tape tape;
  Network net(tape, BoundParams::bind(tape, p, nullptr), c);
  std::vector<Var> conv;
  for (const auto& f : s.frames) conv.push_back(net.frontend(f));
  Rng rng(4);
  const Episode ep = net.run(conv, s.label, rng);
  TrainConfig t;
  const EpisodeLoss loss = episode_loss(tape, ep.graph, ep.trace, t);
  CHECK(loss.advantages.size() == c.frames_per_sample * (c.glimpse.glimpses - 1));

  double ce = -std::log(ep.trace.prediction[2]);
  for (const auto& f : ep.trace.frames) ce += -std::log(f.actions.back()[2]) / static_cast<double>(c.frames_per_sample);
  CHECK(loss.supervised == doctest::Approx(ce).epsilon(1e-12));
  double policy = 0.0, base = 0.0;
  std::size_t i = 0;
  for (const auto& f : ep.trace.frames)
    for (std::size_t k = 1; k < f.log_probs.size(); ++k, ++i) {
      const double b = ep.trace.reward - loss.advantages[i];
      policy -= loss.advantages[i] * f.log_probs[k];
      base += (ep.trace.reward - b) * (ep.trace.reward - b);
    }
  CHECK(loss.policy == doctest::Approx(policy).epsilon(1e-12));
  CHECK(loss.baseline == doctest::Approx(base).epsilon(1e-12));
  CHECK(tape.value(loss.total)[0] == doctest::Approx(ce + policy + base).epsilon(1e-12));

  t.frame_ce_weight = 0.0;
  t.baseline_enabled = false;
  const EpisodeLoss bare = episode_loss(tape, ep.graph, ep.trace, t);
  CHECK(bare.supervised == doctest::Approx(-std::log(ep.trace.prediction[2])).epsilon(1e-12));
  CHECK(bare.baseline == 0.0);
  for (double a : bare.advantages) CHECK(a == ep.trace.reward);
}

TEST_CASE("single sampled location: gradient equals the Gaussian score") {
  ModelConfig c = tiny_config();
  c.frames_per_sample = 1;
  c.glimpse.glimpses = 2;
  ModelParams p = ModelParams::init(c, 2);
  force_label(p, 0);
  std::mt19937_64 gen(2);
  const Sample s = random_sample(c, gen, 0);
  TrainConfig t;
  t.baseline_enabled = false;

  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const EpisodeTrace trace = forward_episode(s, p, c, rng).trace;
    const Location l = trace.frames[0].locations[1], mu = trace.frames[0].means[1];
    if (std::abs(l.y) >= 1.0 || std::abs(l.x) >= 1.0) continue;  // clamped draws hide the raw sample
    REQUIRE(trace.reward == 1);
    const double var = c.glimpse.loc_std * c.glimpse.loc_std;
    const auto g = location_grad(s, p, c, t, seed);
    const std::size_t bias = g.size() - 2;
    CHECK(g[bias] == doctest::Approx(-(l.y - mu.y) / var * (1.0 - mu.y * mu.y)).epsilon(1e-9));
    CHECK(g[bias + 1] == doctest::Approx(-(l.x - mu.x) / var * (1.0 - mu.x * mu.x)).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("zero advantage leaves the location head untouched") {
  const ModelConfig c = tiny_config();
  ModelParams p = ModelParams::init(c, 3);
  force_label(p, 1);
  p[ParamId::baseline_weight].fill(0.0);
  p[ParamId::baseline_bias].fill(1.0);
  std::mt19937_64 gen(3);
  const Sample s = random_sample(c, gen, 1);
  for (double v : location_grad(s, p, c, TrainConfig{}, 9)) CHECK(v == 0.0);
}

TEST_CASE("identical copy seeds average to the single-copy gradient") {
  const ModelConfig c = tiny_config();
  const ModelParams p = ModelParams::init(c, 4);
  std::mt19937_64 gen(4);
  const Sample s = random_sample(c, gen, 0);
  const TrainConfig t;
  ModelParams one = ModelParams::zeros_like(p), three = ModelParams::zeros_like(p);
  const std::uint64_t single[] = {77}, triple[] = {77, 77, 77};
  const auto a = accumulate_sample_gradient(s, p, c, t, single, one);
  const auto b = accumulate_sample_gradient(s, p, c, t, triple, three);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  for (std::size_t i = 0; i < kParamCount; ++i)
    for (std::size_t j = 0; j < one.tensors[i].size(); ++j)
      CHECK(three.tensors[i][j] == doctest::Approx(one.tensors[i][j]).epsilon(1e-12).scale(1e-12));
}

TEST_CASE("train_step") {
  const ModelConfig c = tiny_config();
  const ModelParams init = ModelParams::init(c, 5);
  const auto data = banded_samples(c, 2, 5);
  std::vector<const Sample*> batch;
  for (const auto& s : data) batch.push_back(&s);

  SUBCASE("zero learning rate keeps the parameters") {
    TrainConfig t = quick_config();
    t.lr_start = t.lr_end = 0.0;
    ModelParams p = init;
    auto ptrs = p.pointers();
    AdamState st = AdamState::for_params(ptrs);
    train_step(batch, p, st, c, t, 0, 1, 1);
    for (std::size_t i = 0; i < kParamCount; ++i) CHECK(p.tensors[i] == init.tensors[i]);
  }
  SUBCASE("two steps replay bit-identically") {
    for (std::size_t threads : {1, 3}) {
      TrainConfig t = quick_config();
      t.threads = threads;
      auto run = [&] {
        ModelParams p = init;
        auto ptrs = p.pointers();
        AdamState st = AdamState::for_params(ptrs);
        train_step(batch, p, st, c, t, 0, 2, 11);
        train_step(batch, p, st, c, t, 1, 2, 12);
        return p;
      };
      const ModelParams a = run(), b = run();
      for (std::size_t i = 0; i < kParamCount; ++i) CHECK(a.tensors[i] == b.tensors[i]);
      CHECK_FALSE(a.tensors[0] == init.tensors[0]);
    }
  }
  SUBCASE("annealed rate is reported") {
    TrainConfig t = quick_config();
    t.anneal = true;
    t.lr_start = 0.01;
    t.lr_end = 0.001;
    ModelParams p = init;
    auto ptrs = p.pointers();
    AdamState st = AdamState::for_params(ptrs);
    CHECK(train_step(batch, p, st, c, t, 5, 10, 1).lr == doctest::Approx(0.0055).epsilon(1e-14));
  }
  SUBCASE("non-finite values name the parameter block") {
    TrainConfig t = quick_config();
    ModelParams p = init;
    p[ParamId::glimpse_loc_weight][3] = std::numeric_limits<double>::quiet_NaN();
    auto ptrs = p.pointers();
    AdamState st = AdamState::for_params(ptrs);
    CHECK_THROWS_WITH_AS(train_step(batch, p, st, c, t, 0, 1, 1), doctest::Contains("glimpse_loc.weight"),
                         NumericError);
    ModelParams g = ModelParams::zeros_like(init);
    g[ParamId::baseline_bias][0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(check_finite(g, "gradient", 3), doctest::Contains("baseline.bias"), NumericError);
    CHECK_NOTHROW(check_finite(init, "parameter", 0));
  }
  SUBCASE("empty batch") {
    ModelParams p = init;
    auto ptrs = p.pointers();
    AdamState st = AdamState::for_params(ptrs);
    CHECK_THROWS_AS(train_step({}, p, st, c, quick_config(), 0, 1, 1), std::invalid_argument);
  }
}

TEST_CASE("fit") {
  const ModelConfig c = tiny_config();
  const ModelParams init = ModelParams::init(c, 6);
  const auto train = banded_samples(c, 3, 6);
  const auto val = banded_samples(c, 1, 7);

  SUBCASE("zero epochs returns the initialization") {
    TrainConfig t = quick_config();
    t.epochs = 0;
    const auto r = fit(train, val, init, c, t);
    for (std::size_t i = 0; i < kParamCount; ++i) CHECK(r.params.tensors[i] == init.tensors[i]);
    CHECK(r.log.empty());
    CHECK(r.best_epoch == 0);
  }
  SUBCASE("log rows and reproducibility") {
    TrainConfig t = quick_config();
    t.epochs = 2;
    std::vector<EpochMetrics> seen;
    const auto a = fit(train, val, init, c, t, [&](const EpochMetrics& m) { seen.push_back(m); });
    const auto b = fit(train, val, init, c, t);
    REQUIRE(a.log.size() == 4);
    CHECK(seen.size() == 4);
    CHECK(a.log[0].split == "train");
    CHECK(a.log[1].split == "test");
    CHECK(a.log[3].epoch == 2);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].loss == b.log[i].loss);
      CHECK(a.log[i].accuracy == b.log[i].accuracy);
    }
    for (std::size_t i = 0; i < kParamCount; ++i) CHECK(a.params.tensors[i] == b.params.tensors[i]);
    CHECK(a.best_epoch == 2);
  }
  SUBCASE("best validation epoch is returned when asked") {
    TrainConfig t = quick_config();
    t.epochs = 3;
    t.select_best = true;
    const auto r = fit(train, val, init, c, t);
    double best = -1.0;
    std::size_t best_epoch = 0;
    for (const auto& m : r.log)
      if (m.split == "test" && m.accuracy > best) best = m.accuracy, best_epoch = m.epoch;
    CHECK(r.best_epoch == best_epoch);
  }
  SUBCASE("empty training split") {
    CHECK_THROWS_AS(fit({}, val, init, c, quick_config()), std::invalid_argument);
  }
}

TEST_CASE("overfitting one repeated batch lowers the loss") {
  const ModelConfig c = tiny_config();
  std::size_t lowered = 0;
  const std::size_t seeds = 10;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 gen(seed);
    std::vector<Sample> data;
    for (std::size_t k = 0; k < 4; ++k) data.push_back(random_sample(c, gen, k % c.n_classes));
    std::vector<const Sample*> batch;
    for (const auto& s : data) batch.push_back(&s);
    ModelParams p = ModelParams::init(c, seed);
    auto ptrs = p.pointers();
    AdamState st = AdamState::for_params(ptrs);
    TrainConfig t = quick_config();
    double first = 0.0, last = 0.0;
    for (std::size_t step = 0; step <= 50; ++step) {
      const auto m = train_step(batch, p, st, c, t, step, 51, derive_seed(seed, step));
      if (step == 0) first = m.loss;
      last = m.loss;
    }
    INFO("seed " << seed << " loss " << first << " -> " << last);
    lowered += last <= first;
  }
  CHECK(static_cast<double>(lowered) >= 0.9 * static_cast<double>(seeds));
}

TEST_CASE("score function has zero mean under constant reward") {
  const ModelConfig c = tiny_config();
  ModelParams p = ModelParams::init(c, 8);
  force_label(p, 0);
  std::mt19937_64 gen(8);
  const Sample s = random_sample(c, gen, 0);
  TrainConfig t;
  t.baseline_enabled = false;
  const std::size_t n = 10000;
  std::vector<double> mean, m2;
  for (std::size_t e = 0; e < n; ++e) {
    const auto g = location_grad(s, p, c, t, derive_seed(1, e));
    if (mean.empty()) mean.assign(g.size(), 0.0), m2.assign(g.size(), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double d = g[j] - mean[j];
      mean[j] += d / static_cast<double>(e + 1);
      m2[j] += d * (g[j] - mean[j]);
    }
  }
  // Clamping at the border is applied after the density is evaluated, so the
  // score is exactly zero-mean; test the bias coordinates and a few weights.
  for (std::size_t j : {mean.size() - 2, mean.size() - 1, std::size_t{0}, std::size_t{3}}) {
    const double se = std::sqrt(m2[j] / static_cast<double>(n - 1) / static_cast<double>(n));
    INFO("coordinate " << j << " mean " << mean[j] << " se " << se);
    CHECK(std::abs(mean[j]) < 3.0 * se);
  }
}

TEST_CASE("baseline reduces the variance of the location gradient") {
  const ModelConfig c = tiny_config();
  const auto train = banded_samples(c, 4, 10);
  TrainConfig t = quick_config();
  t.epochs = 4;
  const ModelParams snapshot = fit(train, {}, ModelParams::init(c, 10), c, t).params;

  auto total_variance = [&](bool baseline) {
    TrainConfig v = t;
    v.baseline_enabled = baseline;
    std::vector<double> mean, m2;
    const std::size_t n = 500;
    for (std::size_t e = 0; e < n; ++e) {
      const auto g = location_grad(train[e % train.size()], snapshot, c, v, derive_seed(5, e));
      if (mean.empty()) mean.assign(g.size(), 0.0), m2.assign(g.size(), 0.0);
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double d = g[j] - mean[j];
        mean[j] += d / static_cast<double>(e + 1);
        m2[j] += d * (g[j] - mean[j]);
      }
    }
    return std::accumulate(m2.begin(), m2.end(), 0.0) / static_cast<double>(n - 1);
  };
  const double with = total_variance(true), without = total_variance(false);
  INFO("with " << with << " without " << without);
  CHECK(with <= without);
}
