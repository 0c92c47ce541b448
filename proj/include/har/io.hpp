#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "har/data.hpp"
#include "har/eval.hpp"
#include "har/model.hpp"
#include "har/training.hpp"

namespace har {

/// Parse or validation failure; what() lists every problem, one per line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  WindowingOptions windowing;
  LayoutOptions layout;
  FrameAggregation aggregation = FrameAggregation::mean;
};

/// Everything a run needs besides its input files. Frame size and class
/// count in `model` are filled from the data.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataOptions data;
  SynthConfig synth;
  InvolvementOptions involvement;

  /// Every violated constraint that can be checked before loading data.
  std::vector<std::string> validation_errors() const;
};

/// Sets one key; throws std::invalid_argument for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Reads `key = value` lines; `#` starts a comment. Collects every bad line
/// before throwing ConfigError.
RunConfig parse_run_config(std::istream& in, const std::string& source_name, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical key/value pairs; feeding them back through set_config_value
/// reproduces the configuration exactly.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);
std::string format_run_config(const RunConfig& config);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

struct Checkpoint {
  ModelConfig model;
  DataOptions data;
  SensorSchema schema;
  std::vector<std::string> class_names;
  Normalizer normalizer;
  ModelParams params;
};

/// JSON container with a format tag, version, config block and every named
/// tensor with its shape.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws CheckpointError on a missing file, wrong format or version, or any
/// tensor whose name or shape disagrees with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Plain (P2) PGM, values in [0,1] scaled to 0..255.
void write_pgm(const std::filesystem::path& path, const Tensor& image);
/// Raw min-max scaled frame dump.
void write_frame_pgm(const std::filesystem::path& path, const Tensor& frame);
void write_matrix_csv(const std::filesystem::path& path, const Tensor& matrix);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names);
/// One row per class (or "all"), one column per channel group.
void write_involvement_csv(const std::filesystem::path& path, const std::vector<std::string>& row_names,
                           const std::vector<Involvement>& rows);

/// Writes `epoch,split,loss,accuracy` rows with round-trip doubles, flushing
/// each row.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const EpochMetrics& row);

 private:
  std::filesystem::path path_;
};

}  // namespace har
