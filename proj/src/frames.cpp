#include "har/frames.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace har {

std::string ChannelSpec::group_key() const {
  if (location.empty()) return modality.empty() ? name : modality;
  if (modality.empty()) return location;
  return modality + "_" + location;
}

SensorSchema SensorSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("schema file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  SensorSchema schema;
  try {
    schema.sampling_rate = doc.value("sampling_rate", 50.0);
    for (const auto& ch : doc.at("channels")) {
      ChannelSpec spec;
      spec.name = ch.at("name").get<std::string>();
      spec.location = ch.value("location", "");
      spec.modality = ch.value("modality", "");
      spec.axes = ch.value("axes", std::size_t{3});
      schema.channels.push_back(std::move(spec));
    }
    if (doc.contains("classes")) schema.classes = doc.at("classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("schema file '" + path.string() + "': " + e.what());
  }
  schema.validate();
  return schema;
}

void SensorSchema::validate() const {
  if (channels.size() < 2) {
    throw std::invalid_argument("sensor schema needs at least 2 channels, got " + std::to_string(channels.size()));
  }
  std::set<std::string> names;
  for (const auto& ch : channels) {
    if (ch.name.empty()) throw std::invalid_argument("sensor schema has a channel without a name");
    if (ch.axes < 1 || ch.axes > 3) {
      throw std::invalid_argument("channel '" + ch.name + "' must have 1 to 3 axes, got " + std::to_string(ch.axes));
    }
    if (!names.insert(ch.name).second) throw std::invalid_argument("duplicate channel name '" + ch.name + "'");
  }
  if (!(sampling_rate > 0.0)) throw std::invalid_argument("sampling rate must be positive");
}

std::vector<std::size_t> build_permutation(std::size_t n_rows) {
  if (n_rows < 3 || n_rows % 2 == 0) {
    throw std::invalid_argument("build_permutation needs an odd row count >= 3, got " + std::to_string(n_rows) +
                                "; pad even channel counts with a zero row first");
  }
  std::vector<std::vector<bool>> used(n_rows + 1, std::vector<bool>(n_rows + 1, false));
  std::vector<std::size_t> walk{1};
  std::size_t i = 1;
  std::size_t j = i + 1;
  while (i != j) {
    if (j > n_rows) {
      j = 1;
    } else if (!used[i][j]) {
      used[i][j] = used[j][i] = true;
      walk.push_back(j);
      i = j;
      j = i + 1;
    } else {
      ++j;
    }
  }
  return walk;
}

std::array<double, 9> extend_row(const std::array<double, 3>& row, std::size_t sequence_number) {
  const auto [x, y, z] = row;
  if (sequence_number % 2 == 1) return {x, y, z, x, y, z, x, y, z};
  return {x, y, z, y, z, x, z, x, y};
}

FrameLayout build_layout(std::size_t channel_count, const LayoutOptions& options) {
  if (channel_count < 2) {
    throw std::invalid_argument("a frame layout needs at least 2 channels, got " + std::to_string(channel_count));
  }
  FrameLayout layout;
  layout.source_channels = channel_count;
  layout.kind = options.kind;
  if (options.kind == FrameKind::original) {
    layout.n_rows = channel_count;
    for (std::size_t r = 1; r <= channel_count; ++r) layout.permutation.push_back(r);
    layout.frame_width = 3;
  } else {
    layout.n_rows = channel_count % 2 == 0 ? channel_count + 1 : channel_count;
    layout.permutation = build_permutation(layout.n_rows);
    for (std::size_t k = 1; k < layout.permutation.size(); ++k) {
      layout.pair_set.emplace_back(layout.permutation[k - 1], layout.permutation[k]);
    }
    if (options.drop_closing_row) layout.permutation.pop_back();
    layout.frame_width = 9;
  }
  layout.frame_height = layout.permutation.size();
  return layout;
}

FrameLayout build_layout(const SensorSchema& schema, const LayoutOptions& options) {
  schema.validate();
  return build_layout(schema.channels.size(), options);
}

ActivityFrame make_frame(const Tensor& snapshot, const FrameLayout& layout, std::size_t frame_index) {
  if (snapshot.rank() != 2 || snapshot.dim(1) != 3 ||
      (snapshot.dim(0) != layout.n_rows && snapshot.dim(0) != layout.source_channels)) {
    throw DimensionError("make_frame: snapshot " + to_string(snapshot.shape()) + " does not match layout with " +
                         std::to_string(layout.n_rows) + " rows");
  }
  const std::size_t available = snapshot.dim(0);
  ActivityFrame frame{Tensor(Shape{layout.frame_height, layout.frame_width}), frame_index};
  for (std::size_t k = 0; k < layout.frame_height; ++k) {
    const std::size_t seq = layout.permutation[k];
    std::array<double, 3> row{0.0, 0.0, 0.0};
    if (seq - 1 < available) row = {snapshot.at(seq - 1, 0), snapshot.at(seq - 1, 1), snapshot.at(seq - 1, 2)};
    if (layout.kind == FrameKind::original) {
      for (std::size_t c = 0; c < 3; ++c) frame.matrix.at(k, c) = row[c];
    } else {
      const auto ext = extend_row(row, seq);
      for (std::size_t c = 0; c < 9; ++c) frame.matrix.at(k, c) = ext[c];
    }
  }
  return frame;
}

Sample window_to_sample(const Tensor& window, const FrameLayout& layout, std::size_t frames_per_sample,
                        std::size_t label, std::string subject, FrameAggregation aggregation) {
  if (window.rank() != 3 || window.dim(2) != 3) {
    throw DimensionError("window_to_sample: window must be [T x channels x 3], got " + to_string(window.shape()));
  }
  const std::size_t steps = window.dim(0), channels = window.dim(1);
  if (frames_per_sample == 0 || steps < frames_per_sample) {
    throw std::invalid_argument("window of " + std::to_string(steps) + " timesteps cannot provide " +
                                std::to_string(frames_per_sample) + " frames");
  }
  Sample sample;
  sample.label = label;
  sample.subject = std::move(subject);
  const std::size_t base = steps / frames_per_sample;
  for (std::size_t f = 0; f < frames_per_sample; ++f) {
    const std::size_t begin = f * base;
    const std::size_t end = f + 1 == frames_per_sample ? steps : begin + base;
    Tensor snapshot(Shape{channels, 3});
    if (aggregation == FrameAggregation::center_sample) {
      const std::size_t t = begin + (end - begin) / 2;
      for (std::size_t c = 0; c < channels * 3; ++c) snapshot[c] = window[t * channels * 3 + c];
    } else {
      for (std::size_t t = begin; t < end; ++t)
        for (std::size_t c = 0; c < channels * 3; ++c) snapshot[c] += window[t * channels * 3 + c];
      snapshot *= 1.0 / static_cast<double>(end - begin);
    }
    sample.frames.push_back(make_frame(snapshot, layout, f + 1).matrix);
  }
  return sample;
}

Normalizer Normalizer::fit(std::span<const Tensor> windows) {
  if (windows.empty()) throw std::invalid_argument("cannot fit a normalizer on zero windows");
  const Shape cell{windows.front().dim(1), 3};
  Normalizer norm{Tensor(cell), Tensor(cell)};
  std::size_t count = 0;
  for (const Tensor& w : windows) {
    if (w.rank() != 3 || w.dim(1) != cell[0] || w.dim(2) != 3) {
      throw DimensionError("normalizer: window " + to_string(w.shape()) + " does not match " + to_string(cell));
    }
    const std::size_t width = norm.mean.size();
    for (std::size_t t = 0; t < w.dim(0); ++t)
      for (std::size_t c = 0; c < width; ++c) norm.mean[c] += w[t * width + c];
    count += w.dim(0);
  }
  norm.mean *= 1.0 / static_cast<double>(count);
  for (const Tensor& w : windows) {
    const std::size_t width = norm.mean.size();
    for (std::size_t t = 0; t < w.dim(0); ++t)
      for (std::size_t c = 0; c < width; ++c) {
        const double d = w[t * width + c] - norm.mean[c];
        norm.stddev[c] += d * d;
      }
  }
  for (auto& s : norm.stddev.data()) s = std::max(std::sqrt(s / static_cast<double>(count)), kStdFloor);
  return norm;
}

Tensor Normalizer::apply(const Tensor& window) const {
  if (window.rank() != 3 || window.dim(1) != mean.dim(0) || window.dim(2) != 3) {
    throw DimensionError("normalizer fitted for " + to_string(mean.shape()) + " cannot apply to window " +
                         to_string(window.shape()));
  }
  Tensor out = window;
  const std::size_t width = mean.size();
  for (std::size_t t = 0; t < window.dim(0); ++t)
    for (std::size_t c = 0; c < width; ++c) {
      double& v = out[t * width + c];
      v = (v - mean[c]) / stddev[c];
    }
  return out;
}

}  // namespace har
