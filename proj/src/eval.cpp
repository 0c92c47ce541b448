#include "har/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "har/ops.hpp"
#include "har/parallel.hpp"

namespace har {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= n_ || predicted >= n_) {
    throw std::out_of_range("confusion matrix entry (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                            ") outside " + std::to_string(n_) + " classes");
  }
  ++counts_[truth * n_ + predicted];
}

std::size_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * n_ + predicted);
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

std::size_t ConfusionMatrix::correct() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < n_; ++k) n += counts_[k * n_ + k];
  return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < n_; ++p) n += at(truth, p);
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t t = total();
  return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

EvalResult evaluate(std::span<const Sample> samples, const ModelParams& params, const ModelConfig& model,
                    std::size_t copies, std::uint64_t seed, bool keep_traces, std::size_t threads) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<Tensor> predictions(samples.size());
  std::vector<std::vector<EpisodeTrace>> traces(keep_traces ? samples.size() : 0);
  parallel_chunks(samples.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, i));
      predictions[i] = predict_mc(samples[i], params, model, copies, rng, keep_traces ? &traces[i] : nullptr);
    }
  });

  EvalResult result{0.0, 0.0, ConfusionMatrix(model.n_classes), {}};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t label = samples[i].label;
    result.confusion.add(label, argmax(predictions[i].data()));
    result.loss -= std::log(std::max(predictions[i][label], ops::kProbabilityFloor));
    if (keep_traces)
      for (auto& t : traces[i]) result.traces.push_back(std::move(t));
  }
  result.loss /= static_cast<double>(samples.size());
  result.accuracy = result.confusion.accuracy();
  return result;
}

LosoSummary loso_aggregate(std::span<const double> fold_accuracies) {
  if (fold_accuracies.empty()) throw std::invalid_argument("loso_aggregate: no folds");
  LosoSummary s;
  s.folds.assign(fold_accuracies.begin(), fold_accuracies.end());
  for (double a : s.folds) s.mean += a;
  s.mean /= static_cast<double>(s.folds.size());
  for (double a : s.folds) s.stddev += (a - s.mean) * (a - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(s.folds.size()));
  return s;
}

namespace {

// Calls fn(row, col) for each in-bounds cell of the finest-scale window.
template <class Fn>
void for_each_window_cell(const Location& loc, std::size_t height, std::size_t width, const GlimpseConfig& g,
                          Fn&& fn) {
  const auto [cy, cx] = location_cell(loc, height, width);
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(cy) - static_cast<std::ptrdiff_t>(g.window_h / 2);
  const std::ptrdiff_t left = static_cast<std::ptrdiff_t>(cx) - static_cast<std::ptrdiff_t>(g.window_w / 2);
  for (std::size_t i = 0; i < g.window_h; ++i) {
    const std::ptrdiff_t r = top + static_cast<std::ptrdiff_t>(i);
    if (r < 0 || r >= static_cast<std::ptrdiff_t>(height)) continue;
    for (std::size_t j = 0; j < g.window_w; ++j) {
      const std::ptrdiff_t c = left + static_cast<std::ptrdiff_t>(j);
      if (c < 0 || c >= static_cast<std::ptrdiff_t>(width)) continue;
      fn(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    }
  }
}

}  // namespace

Heatmap glimpse_heatmap(std::span<const EpisodeTrace> traces, std::size_t frame_height, std::size_t frame_width,
                        const GlimpseConfig& glimpse) {
  if (traces.empty()) throw std::invalid_argument("glimpse_heatmap: no traces");
  Heatmap map{Tensor(Shape{frame_height, frame_width}), Tensor(Shape{frame_height, frame_width}), 0};
  for (const auto& trace : traces)
    for (const auto& frame : trace.frames)
      for (const auto& loc : frame.locations) {
        ++map.glimpses;
        for_each_window_cell(loc, frame_height, frame_width, glimpse,
                             [&](std::size_t r, std::size_t c) { map.counts.at(r, c) += 1.0; });
      }
  const auto& counts = map.counts.data();
  const double peak = *std::max_element(counts.begin(), counts.end());
  if (peak > 0.0)
    for (std::size_t i = 0; i < map.heat.size(); ++i) map.heat[i] = map.counts[i] / peak;
  return map;
}

std::size_t Involvement::top() const {
  return static_cast<std::size_t>(std::max_element(percent.begin(), percent.end()) - percent.begin());
}

std::size_t late_glimpse_count(std::size_t total_glimpses, double late_fraction) {
  if (!(late_fraction > 0.0 && late_fraction <= 1.0)) {
    throw std::invalid_argument("late glimpse fraction must lie in (0, 1]");
  }
  const auto k = static_cast<std::size_t>(std::llround(late_fraction * static_cast<double>(total_glimpses)));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(1, total_glimpses));
}

namespace {

struct GroupIndex {
  std::vector<std::string> names;
  std::vector<std::size_t> of_row;
};

GroupIndex group_rows(const FrameLayout& layout, const SensorSchema& schema) {
  if (schema.channels.size() != layout.source_channels) {
    throw DimensionError("schema has " + std::to_string(schema.channels.size()) + " channels but the layout was built for " +
                         std::to_string(layout.source_channels));
  }
  GroupIndex g;
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> of_channel;
  for (const auto& ch : schema.channels) {
    const std::string key = ch.group_key();
    auto [it, inserted] = index.emplace(key, g.names.size());
    if (inserted) g.names.push_back(key);
    of_channel.push_back(it->second);
  }
  std::size_t padding = 0;
  for (std::size_t r = 0; r < layout.frame_height; ++r) {
    if (layout.is_padding_row(r)) {
      if (padding == 0) {
        padding = g.names.size();
        g.names.emplace_back("padding");
      }
      g.of_row.push_back(padding);
    } else {
      g.of_row.push_back(of_channel[layout.channel_of_row(r)]);
    }
  }
  return g;
}

}  // namespace

Involvement modality_involvement(std::span<const EpisodeTrace> traces, const FrameLayout& layout,
                                 const SensorSchema& schema, const GlimpseConfig& glimpse,
                                 const InvolvementOptions& options) {
  const GroupIndex groups = group_rows(layout, schema);
  Involvement out{groups.names, std::vector<double>(groups.names.size(), 0.0), 0.0};
  std::vector<double> weight(groups.names.size(), 0.0);
  for (const auto& trace : traces) {
    std::vector<Location> pooled;
    for (const auto& frame : trace.frames) pooled.insert(pooled.end(), frame.locations.begin(), frame.locations.end());
    if (pooled.empty()) continue;
    const std::size_t keep = late_glimpse_count(pooled.size(), options.late_fraction);
    for (std::size_t i = pooled.size() - keep; i < pooled.size(); ++i) {
      if (options.attribution == Attribution::center) {
        const auto row = location_cell(pooled[i], layout.frame_height, layout.frame_width).first;
        weight[groups.of_row[row]] += 1.0;
      } else {
        std::vector<double> cells(groups.names.size(), 0.0);
        double covered = 0.0;
        for_each_window_cell(pooled[i], layout.frame_height, layout.frame_width, glimpse,
                             [&](std::size_t r, std::size_t) {
                               cells[groups.of_row[r]] += 1.0;
                               covered += 1.0;
                             });
        for (std::size_t k = 0; k < cells.size(); ++k) weight[k] += cells[k] / covered;
      }
      out.glimpses += 1.0;
    }
  }
  if (out.glimpses > 0.0)
    for (std::size_t k = 0; k < weight.size(); ++k) out.percent[k] = 100.0 * weight[k] / out.glimpses;
  return out;
}

std::vector<Involvement> involvement_by_class(std::span<const EpisodeTrace> traces, std::size_t n_classes,
                                              const FrameLayout& layout, const SensorSchema& schema,
                                              const GlimpseConfig& glimpse, const InvolvementOptions& options) {
  std::vector<std::vector<EpisodeTrace>> by_class(n_classes);
  for (const auto& t : traces) by_class.at(t.label).push_back(t);
  std::vector<Involvement> out;
  for (const auto& group : by_class) out.push_back(modality_involvement(group, layout, schema, glimpse, options));
  return out;
}

}  // namespace har
