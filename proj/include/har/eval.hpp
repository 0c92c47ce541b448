#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "har/model.hpp"

namespace har {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes = 0);

  void add(std::size_t truth, std::size_t predicted);
  std::size_t at(std::size_t truth, std::size_t predicted) const;
  std::size_t n_classes() const { return n_; }
  std::size_t total() const;
  std::size_t correct() const;
  std::size_t row_sum(std::size_t truth) const;
  /// trace / total; 0 for an empty matrix.
  double accuracy() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> counts_;
};

struct EvalResult {
  double accuracy = 0.0;
  /// Mean cross-entropy of the averaged predictions.
  double loss = 0.0;
  ConfusionMatrix confusion;
  /// Per-sample Monte Carlo traces, sample-major; filled on request.
  std::vector<EpisodeTrace> traces;
};

/// Classifies each sample by its Monte Carlo mean prediction. Sample i uses
/// RNG stream derive_seed(seed, i), so results do not depend on `threads`.
EvalResult evaluate(std::span<const Sample> samples, const ModelParams& params, const ModelConfig& model,
                    std::size_t copies, std::uint64_t seed, bool keep_traces = false, std::size_t threads = 1);

struct LosoSummary {
  double mean = 0.0;
  /// Population standard deviation over folds.
  double stddev = 0.0;
  std::vector<double> folds;
};

LosoSummary loso_aggregate(std::span<const double> fold_accuracies);

struct Heatmap {
  /// Visits per frame cell.
  Tensor counts;
  /// counts / max(counts); all zero when nothing was visited.
  Tensor heat;
  /// Glimpses accumulated, F * T per episode.
  std::size_t glimpses = 0;
};

/// Each glimpse adds one visit to every in-bounds cell of its finest-scale
/// window.
Heatmap glimpse_heatmap(std::span<const EpisodeTrace> traces, std::size_t frame_height, std::size_t frame_width,
                        const GlimpseConfig& glimpse);

enum class Attribution {
  center,  ///< the row under the window center takes the whole glimpse
  area,    ///< shared across the window's in-bounds rows by covered cells
};

struct InvolvementOptions {
  /// Share of each episode's glimpses, pooled over frames, that is counted;
  /// the latest ones are kept.
  double late_fraction = 0.6;
  Attribution attribution = Attribution::center;
};

struct Involvement {
  /// Channel group keys in schema order, then "padding" when the layout has
  /// a padding row.
  std::vector<std::string> groups;
  /// Percentages summing to 100, or all zero when nothing was counted.
  std::vector<double> percent;
  double glimpses = 0.0;

  /// Index of the largest share; ties go to the earliest group.
  std::size_t top() const;
};

/// Late glimpses per episode: round(late_fraction * F * T), at least one.
std::size_t late_glimpse_count(std::size_t total_glimpses, double late_fraction);

Involvement modality_involvement(std::span<const EpisodeTrace> traces, const FrameLayout& layout,
                                 const SensorSchema& schema, const GlimpseConfig& glimpse,
                                 const InvolvementOptions& options = {});

/// modality_involvement restricted to episodes of each true class.
std::vector<Involvement> involvement_by_class(std::span<const EpisodeTrace> traces, std::size_t n_classes,
                                              const FrameLayout& layout, const SensorSchema& schema,
                                              const GlimpseConfig& glimpse, const InvolvementOptions& options = {});

}  // namespace har
