#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fixtures.hpp"
#include "har/eval.hpp"
#include "har/frames.hpp"

using namespace har;
using namespace har::testing;

namespace {

EpisodeTrace trace_at(std::vector<std::vector<Location>> frames, std::size_t label = 0) {
  EpisodeTrace t;
  t.label = label;
  for (auto& locs : frames) {
    FrameTrace f;
    f.locations = std::move(locs);
    t.frames.push_back(std::move(f));
  }
  return t;
}

SensorSchema three_groups() {
  SensorSchema s;
  s.channels = {{"a", "hand", "acc", 3}, {"b", "chest", "acc", 3}, {"c", "ankle", "gyro", 3}};
  return s;
}

/// y coordinate whose cell row is `row` in a frame of `height` rows.
double row_y(std::size_t row, std::size_t height) {
  return 2.0 * static_cast<double>(row) / static_cast<double>(height - 1) - 1.0;
}

}  // namespace

TEST_CASE("confusion matrix identities") {
  ConfusionMatrix cm(3);
  const std::size_t truth[] = {0, 0, 1, 2, 2, 2};
  const std::size_t pred[] = {0, 1, 1, 2, 0, 2};
  for (std::size_t i = 0; i < 6; ++i) cm.add(truth[i], pred[i]);
  CHECK(cm.total() == 6);
  CHECK(cm.correct() == 4);
  CHECK(cm.accuracy() == doctest::Approx(4.0 / 6.0));
  CHECK(cm.row_sum(0) == 2);
  CHECK(cm.row_sum(2) == 3);
  CHECK(cm.at(2, 0) == 1);
  CHECK_THROWS_AS(cm.add(3, 0), std::out_of_range);
  CHECK(ConfusionMatrix(2).accuracy() == 0.0);

  ConfusionMatrix perfect(4);
  for (std::size_t k = 0; k < 4; ++k) perfect.add(k, k);
  CHECK(perfect.accuracy() == 1.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(perfect.at(i, j) == (i == j ? 1u : 0u));
}

TEST_CASE("evaluate") {
  ModelConfig c = tiny_config();
  c.n_classes = 6;
  ModelParams p = ModelParams::init(c, 1);
  std::mt19937_64 gen(1);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 6; ++k) samples.push_back(random_sample(c, gen, k));

  SUBCASE("constant predictor on balanced data scores chance") {
    p[ParamId::classifier_weight].fill(0.0);
    p[ParamId::classifier_bias].fill(0.0);
    p[ParamId::classifier_bias][4] = 30.0;
    const auto r = evaluate(samples, p, c, 3, 1);
    CHECK(r.accuracy == doctest::Approx(1.0 / 6.0));
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(r.confusion.row_sum(k) == 4);
      CHECK(r.confusion.at(k, 4) == 4);
    }
  }
  SUBCASE("results do not depend on thread count") {
    const auto a = evaluate(samples, p, c, 3, 9, true, 1);
    const auto b = evaluate(samples, p, c, 3, 9, true, 4);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
    REQUIRE(a.traces.size() == samples.size() * 3);
    for (std::size_t i = 0; i < a.traces.size(); ++i) CHECK(a.traces[i].prediction == b.traces[i].prediction);
    CHECK(a.confusion.total() == samples.size());
  }
  SUBCASE("loss is the cross-entropy of the averaged prediction") {
    const std::span<const Sample> one(samples.data(), 1);
    const auto r = evaluate(one, p, c, 4, 2, true);
    Tensor mean(Shape{6});
    for (const auto& t : r.traces) mean += t.prediction;
    mean *= 0.25;
    CHECK(r.loss == doctest::Approx(-std::log(mean[samples[0].label])).epsilon(1e-12));
  }
  CHECK_THROWS_AS(evaluate({}, p, c, 1, 1), std::invalid_argument);
}

TEST_CASE("loso aggregation") {
  const double two[] = {0.8, 1.0};
  CHECK(loso_aggregate(two).mean == doctest::Approx(0.9));
  CHECK(loso_aggregate(two).stddev == doctest::Approx(0.1));
  const double one[] = {0.75};
  CHECK(loso_aggregate(one).mean == 0.75);
  CHECK(loso_aggregate(one).stddev == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> folds(1 + trial % 7);
    for (auto& f : folds) f = u(rng);
    const auto s = loso_aggregate(folds);
    CHECK(s.mean >= *std::min_element(folds.begin(), folds.end()));
    CHECK(s.mean <= *std::max_element(folds.begin(), folds.end()));
    CHECK(s.folds == folds);
  }
  CHECK_THROWS_AS(loso_aggregate(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("glimpse heatmap") {
  GlimpseConfig g;
  g.window_h = 5;
  g.window_w = 5;
  SUBCASE("a centered glimpse covers 25 cells") {
    const EpisodeTrace t = trace_at({{{0.0, 0.0}}});
    const auto map = glimpse_heatmap(std::span(&t, 1), 11, 9, g);
    CHECK(map.counts.sum() == 25.0);
    CHECK(map.glimpses == 1);
    for (std::size_t r = 0; r < 11; ++r)
      for (std::size_t c = 0; c < 9; ++c) {
        const bool inside = r >= 3 && r <= 7 && c >= 2 && c <= 6;
        CHECK(map.counts.at(r, c) == (inside ? 1.0 : 0.0));
      }
  }
  SUBCASE("corner glimpses count only in-bounds cells") {
    const EpisodeTrace t = trace_at({{{-1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}});
    const auto map = glimpse_heatmap(std::span(&t, 1), 11, 9, g);
    CHECK(map.counts.sum() == 27.0);
    CHECK(map.counts.at(0, 0) == 1.0);
    CHECK(map.counts.at(2, 2) == 1.0);
    CHECK(map.counts.at(3, 3) == 0.0);
    CHECK(map.counts.at(10, 8) == 1.0);
    CHECK(map.counts.at(0, 8) == 1.0);
  }
  SUBCASE("conservation and normalization over random traces") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<EpisodeTrace> traces;
    double expected = 0.0;
    const std::size_t F = 3, T = 4, H = 13, W = 9;
    for (int e = 0; e < 20; ++e) {
      std::vector<std::vector<Location>> frames(F);
      for (auto& f : frames)
        for (std::size_t t = 0; t < T; ++t) {
          const Location l{u(rng), u(rng)};
          f.push_back(l);
          // Independent in-bounds count from the cell under the center.
          const long cy = std::lround((l.y + 1.0) / 2.0 * (H - 1)), cx = std::lround((l.x + 1.0) / 2.0 * (W - 1));
          const long rows = std::min<long>(cy + 2, H - 1) - std::max<long>(cy - 2, 0) + 1;
          const long cols = std::min<long>(cx + 2, W - 1) - std::max<long>(cx - 2, 0) + 1;
          expected += static_cast<double>(rows * cols);
        }
      traces.push_back(trace_at(frames));
    }
    const auto map = glimpse_heatmap(traces, H, W, g);
    CHECK(map.glimpses == 20 * F * T);
    CHECK(map.counts.sum() == expected);
    double peak = 0.0;
    for (double h : map.heat.data()) {
      CHECK(h >= 0.0);
      CHECK(h <= 1.0);
      peak = std::max(peak, h);
    }
    CHECK(peak == 1.0);
  }
  CHECK_THROWS_AS(glimpse_heatmap({}, 11, 9, g), std::invalid_argument);
}

TEST_CASE("modality involvement") {
  const SensorSchema schema = three_groups();
  const FrameLayout layout = build_layout(schema);  // rows: channels 1,2,3,1
  REQUIRE(layout.frame_height == 4);
  GlimpseConfig g;
  g.window_h = 1;
  g.window_w = 3;
  const double y_b = row_y(1, 4), y_c = row_y(2, 4), y_a = row_y(3, 4);

  SUBCASE("all late glimpses on one channel") {
    const EpisodeTrace t = trace_at({{{y_a, 0.0}, {y_b, 0.0}, {y_b, 0.5}, {y_b, -0.2}, {y_b, 0.9}}});
    const auto inv = modality_involvement(std::span(&t, 1), layout, schema, g);
    CHECK(inv.groups == std::vector<std::string>{"acc_hand", "acc_chest", "gyro_ankle"});
    CHECK(inv.percent[1] == 100.0);
    CHECK(inv.top() == 1);
    CHECK(inv.glimpses == 3.0);
  }
  SUBCASE("percentages sum to 100 and ignore trace order") {
    std::vector<EpisodeTrace> traces;
    std::mt19937_64 rng(2);
    const double ys[] = {y_a, y_b, y_c};
    for (int e = 0; e < 30; ++e) {
      std::vector<std::vector<Location>> frames(2);
      for (auto& f : frames)
        for (int t = 0; t < 4; ++t) f.push_back({ys[rng() % 3], 0.0});
      traces.push_back(trace_at(frames));
    }
    for (auto attribution : {Attribution::center, Attribution::area}) {
      InvolvementOptions opts;
      opts.attribution = attribution;
      const auto a = modality_involvement(traces, layout, schema, g, opts);
      CHECK(std::accumulate(a.percent.begin(), a.percent.end(), 0.0) == doctest::Approx(100.0));
      std::reverse(traces.begin(), traces.end());
      const auto b = modality_involvement(traces, layout, schema, g, opts);
      for (std::size_t k = 0; k < a.percent.size(); ++k) CHECK(a.percent[k] == doctest::Approx(b.percent[k]));
    }
  }
  SUBCASE("area attribution splits a window across rows") {
    GlimpseConfig tall = g;
    tall.window_h = 3;
    const EpisodeTrace t = trace_at({{{y_b, 0.0}}});
    InvolvementOptions opts;
    opts.late_fraction = 1.0;
    opts.attribution = Attribution::area;
    // Rows 0..2 hold channels a, b, c.
    const auto inv = modality_involvement(std::span(&t, 1), layout, schema, tall, opts);
    for (double pct : inv.percent) CHECK(pct == doctest::Approx(100.0 / 3.0));
  }
  SUBCASE("padding rows form their own group") {
    SensorSchema four = schema;
    four.channels.push_back({"d", "ankle", "acc", 3});
    const FrameLayout padded = build_layout(four);
    std::size_t pad_row = 0;
    while (!padded.is_padding_row(pad_row)) ++pad_row;
    const EpisodeTrace t = trace_at({{{row_y(pad_row, padded.frame_height), 0.0}}});
    InvolvementOptions opts;
    opts.late_fraction = 1.0;
    const auto inv = modality_involvement(std::span(&t, 1), padded, four, g, opts);
    CHECK(inv.groups.back() == "padding");
    CHECK(inv.percent.back() == 100.0);
  }
  SUBCASE("split by class") {
    const std::vector<EpisodeTrace> traces{trace_at({{{y_a, 0.0}}}, 0), trace_at({{{y_c, 0.0}}}, 1)};
    InvolvementOptions opts;
    opts.late_fraction = 1.0;
    const auto per = involvement_by_class(traces, 3, layout, schema, g, opts);
    REQUIRE(per.size() == 3);
    CHECK(per[0].top() == 0);
    CHECK(per[1].top() == 2);
    CHECK(per[2].glimpses == 0.0);
  }
  CHECK(late_glimpse_count(24, 0.6) == 14);
  CHECK(late_glimpse_count(1, 0.1) == 1);
  CHECK_THROWS_AS(late_glimpse_count(5, 0.0), std::invalid_argument);
}
