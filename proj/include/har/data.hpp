#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "har/frames.hpp"

namespace har {

/// A labeled segment of raw sensor readings, [T x channels x 3].
struct RawWindow {
  Tensor values;
  std::size_t label = 0;
  std::string subject;
};

/// Labeled windows grouped by subject. Frames are built per fold so that
/// normalization statistics come from the training split only.
struct Dataset {
  SensorSchema schema;
  std::vector<std::string> class_names;
  std::vector<RawWindow> windows;

  /// Distinct subjects in order of first appearance.
  std::vector<std::string> subjects() const;
  std::vector<std::size_t> class_counts() const;
};

struct WindowingOptions {
  std::size_t window_length = 128;
  double overlap = 0.5;

  std::size_t step() const;
};

/// raw activity label -> coarse class name
using LabelMap = std::map<std::string, std::string>;

/// Reads a two-column `raw_label,coarse_label` CSV.
LabelMap load_label_map(const std::filesystem::path& path);

/// Number of windows a run of `run_length` rows yields.
std::size_t window_count(std::size_t run_length, const WindowingOptions& options);

/// Reads `subject,activity,timestamp,<chan>_x,...` rows and segments every
/// contiguous (subject, activity) run into windows.
///
/// Class names come from the label map (coarse labels, sorted) when given,
/// otherwise from `schema.classes`, otherwise from the activities in order of
/// first appearance.
Dataset load_csv(const std::filesystem::path& path, const SensorSchema& schema, const WindowingOptions& options,
                 const LabelMap* label_map = nullptr);

struct SynthConfig {
  std::size_t n_subjects = 4;
  std::size_t n_classes = 4;
  std::size_t window_length = 128;
  std::size_t channels = 8;
  /// Channel c belongs to group c % n_groups; 0 means one group per class.
  std::size_t n_groups = 0;
  std::size_t windows_per_class = 12;
  double noise_std = 0.1;
  double sampling_rate = 50.0;
  std::uint64_t seed = 7;

  std::size_t groups() const { return n_groups == 0 ? n_classes : n_groups; }
};

/// Class k drives every channel of group k mod groups with a class-specific
/// sinusoid (three axes 120 degrees apart); all other channels carry noise
/// only. Each subject gets a random phase offset per class.
Dataset synth_generate(const SynthConfig& config);

/// Group key of the channels class `label` drives in synthetic data.
std::string synth_group_key(const SynthConfig& config, std::size_t label);

struct Split {
  std::string test_subject;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// One split per subject, holding that subject out.
std::vector<Split> loso_splits(const Dataset& dataset);

struct PreparedFold {
  Normalizer normalizer;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Fits normalization on the training windows, then converts both sides into
/// frame samples.
PreparedFold prepare_fold(const Dataset& dataset, const Split& split, const FrameLayout& layout,
                          std::size_t frames_per_sample, FrameAggregation aggregation = FrameAggregation::mean);

}  // namespace har
