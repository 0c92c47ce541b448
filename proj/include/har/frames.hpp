#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "har/tensor.hpp"

namespace har {

/// One physical sensor stream. Tri-axis sensors have three axes; narrower
/// streams (ECG leads, a thermometer) are zero-padded to three values.
struct ChannelSpec {
  std::string name;
  std::string location;
  std::string modality;
  std::size_t axes = 3;

  /// Key used to aggregate channels, e.g. "acc_ankle".
  std::string group_key() const;
};

struct SensorSchema {
  std::vector<ChannelSpec> channels;
  double sampling_rate = 50.0;
  /// Activity class names; label i refers to classes[i].
  std::vector<std::string> classes;

  /// Reads the JSON schema format documented in the README.
  static SensorSchema load(const std::filesystem::path& path);
  void validate() const;
};

enum class FrameKind {
  activity,  ///< permuted rows, each extended to 9 columns
  original,  ///< channels stacked in source order, 3 columns
};

struct LayoutOptions {
  FrameKind kind = FrameKind::activity;
  /// Omit the final row that closes the walk back at row 1.
  bool drop_closing_row = false;
};

/// How snapshots map onto frame rows.
struct FrameLayout {
  std::size_t source_channels = 0;
  /// Channel count after padding to an odd number.
  std::size_t n_rows = 0;
  /// 1-based row indices; permutation[k] is the source of frame row k.
  std::vector<std::size_t> permutation;
  /// Unordered pairs consumed by the walk, in visiting order.
  std::vector<std::pair<std::size_t, std::size_t>> pair_set;
  std::size_t frame_height = 0;
  std::size_t frame_width = 0;
  FrameKind kind = FrameKind::activity;

  /// 0-based channel feeding frame row `row`; values >= source_channels
  /// denote the zero padding channel.
  std::size_t channel_of_row(std::size_t row) const { return permutation.at(row) - 1; }
  bool is_padding_row(std::size_t row) const { return channel_of_row(row) >= source_channels; }
};

/// Greedy walk over the complete graph on `n_rows` vertices, consuming each
/// unordered pair once. Starts at row 1 and includes it as the first entry.
/// Requires odd n_rows >= 3.
std::vector<std::size_t> build_permutation(std::size_t n_rows);

/// Odd sequence numbers repeat (x,y,z); even ones rotate it.
std::array<double, 9> extend_row(const std::array<double, 3>& row, std::size_t sequence_number);

FrameLayout build_layout(std::size_t channel_count, const LayoutOptions& options = {});
FrameLayout build_layout(const SensorSchema& schema, const LayoutOptions& options = {});

struct ActivityFrame {
  Tensor matrix;  ///< frame_height x frame_width
  std::size_t frame_index = 1;
};

/// Classification unit: F frames and a label.
struct Sample {
  std::vector<Tensor> frames;
  std::size_t label = 0;
  std::string subject;
};

/// Builds one frame from a [channels x 3] snapshot. Accepts either the source
/// channel count or the padded row count.
ActivityFrame make_frame(const Tensor& snapshot, const FrameLayout& layout, std::size_t frame_index = 1);

enum class FrameAggregation { mean, center_sample };

/// Splits a [T x channels x 3] window into F consecutive sub-windows (the
/// remainder goes to the last) and builds one frame per sub-window.
Sample window_to_sample(const Tensor& window, const FrameLayout& layout, std::size_t frames_per_sample,
                        std::size_t label, std::string subject,
                        FrameAggregation aggregation = FrameAggregation::mean);

/// Per channel-axis z-score statistics.
struct Normalizer {
  Tensor mean;    ///< [channels x 3]
  Tensor stddev;  ///< [channels x 3], floored at 1e-8

  static constexpr double kStdFloor = 1e-8;

  /// Population statistics over every timestep of every window.
  static Normalizer fit(std::span<const Tensor> windows);
  Tensor apply(const Tensor& window) const;
};

}  // namespace har
