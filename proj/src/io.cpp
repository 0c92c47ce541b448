#include "har/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include <json.hpp>

namespace har {

namespace {

using nlohmann::json;

std::string join_lines(const std::vector<std::string>& problems) {
  std::string out;
  for (const auto& p : problems) out += (out.empty() ? "" : "\n") + p;
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <class E>
E parse_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> names) {
  std::string known;
  for (const auto& [name, e] : names) {
    if (v == name) return e;
    known += (known.empty() ? "" : ", ") + std::string(name);
  }
  throw std::invalid_argument("expected one of " + known + ", got '" + v + "'");
}

template <class E>
std::string enum_text(E e, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, value] : names)
    if (value == e) return name;
  return "?";
}

const std::initializer_list<std::pair<const char*, RewardMode>> kRewardModes{{"final", RewardMode::final},
                                                                             {"per_frame", RewardMode::per_frame}};
const std::initializer_list<std::pair<const char*, FrameInput>> kFrameInputs{{"hidden", FrameInput::hidden},
                                                                             {"action", FrameInput::action}};
const std::initializer_list<std::pair<const char*, FrameKind>> kFrameKinds{{"activity", FrameKind::activity},
                                                                           {"original", FrameKind::original}};
const std::initializer_list<std::pair<const char*, FrameAggregation>> kAggregations{
    {"mean", FrameAggregation::mean}, {"center_sample", FrameAggregation::center_sample}};
const std::initializer_list<std::pair<const char*, Attribution>> kAttributions{{"center", Attribution::center},
                                                                               {"area", Attribution::area}};

struct Key {
  std::string name;
  std::vector<std::string> aliases;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HAR_SIZE(key, field) \
  Key { key, {}, [](RunConfig& c, const std::string& v) { c.field = parse_size(v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); } }
#define HAR_DOUBLE(key, field) \
  Key { key, {}, [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }, \
        [](const RunConfig& c) { return format_double(c.field); } }
#define HAR_BOOL(key, field) \
  Key { key, {}, [](RunConfig& c, const std::string& v) { c.field = parse_bool(v); }, \
        [](const RunConfig& c) { return bool_text(c.field); } }
#define HAR_ENUM(key, field, names) \
  Key { key, {}, [](RunConfig& c, const std::string& v) { c.field = parse_enum(v, names); }, \
        [](const RunConfig& c) { return enum_text(c.field, names); } }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k{
        HAR_SIZE("epochs", train.epochs),
        HAR_SIZE("batch_size", train.batch_size),
        HAR_SIZE("mc_copies", train.mc_copies),
        HAR_SIZE("eval_copies", train.eval_copies),
        HAR_DOUBLE("lr_start", train.lr_start),
        HAR_DOUBLE("lr_end", train.lr_end),
        HAR_BOOL("anneal", train.anneal),
        HAR_BOOL("baseline_enabled", train.baseline_enabled),
        HAR_DOUBLE("frame_ce_weight", train.frame_ce_weight),
        HAR_ENUM("reward_mode", train.reward_mode, kRewardModes),
        HAR_DOUBLE("clip_norm", train.clip_norm),
        Key{"seed", {}, [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        HAR_BOOL("select_best", train.select_best),
        HAR_SIZE("threads", train.threads),

        HAR_SIZE("glimpses", model.glimpse.glimpses),
        HAR_SIZE("frames_per_sample", model.frames_per_sample),
        HAR_SIZE("glimpse_h", model.glimpse.window_h),
        HAR_SIZE("glimpse_w", model.glimpse.window_w),
        HAR_SIZE("n_scales", model.glimpse.n_scales),
        HAR_SIZE("scale_factor", model.glimpse.scale_factor),
        HAR_DOUBLE("loc_std", model.glimpse.loc_std),
        Key{"loc_variance", {},
            [](RunConfig& c, const std::string& v) {
              const double var = parse_double(v);
              if (!(var > 0.0)) throw std::invalid_argument("loc_variance must be positive");
              c.model.glimpse.loc_std = std::sqrt(var);
            },
            {}},
        HAR_SIZE("conv1_filters", model.conv1_filters),
        HAR_SIZE("conv2_filters", model.conv2_filters),
        HAR_SIZE("kernel", model.kernel),
        HAR_SIZE("rho_dim", model.rho_dim),
        HAR_SIZE("loc_dim", model.loc_dim),
        HAR_SIZE("glimpse_dim", model.glimpse_dim),
        HAR_SIZE("hidden_a", model.hidden_a),
        HAR_SIZE("hidden_f", model.hidden_f),
        HAR_ENUM("frame_input", model.frame_input, kFrameInputs),

        HAR_SIZE("window_length", data.windowing.window_length),
        HAR_DOUBLE("overlap", data.windowing.overlap),
        HAR_ENUM("frame_kind", data.layout.kind, kFrameKinds),
        HAR_BOOL("drop_closing_row", data.layout.drop_closing_row),
        HAR_ENUM("aggregation", data.aggregation, kAggregations),

        HAR_SIZE("synth_subjects", synth.n_subjects),
        HAR_SIZE("synth_classes", synth.n_classes),
        HAR_SIZE("synth_channels", synth.channels),
        HAR_SIZE("synth_groups", synth.n_groups),
        HAR_SIZE("synth_windows_per_class", synth.windows_per_class),
        HAR_DOUBLE("synth_noise_std", synth.noise_std),
        Key{"synth_seed", {}, [](RunConfig& c, const std::string& v) { c.synth.seed = parse_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.synth.seed); }},

        HAR_DOUBLE("late_fraction", involvement.late_fraction),
        HAR_ENUM("attribution", involvement.attribution, kAttributions),
    };
    auto alias = [&](const std::string& name, const std::string& a) {
      for (auto& key : k)
        if (key.name == name) key.aliases.push_back(a);
    };
    alias("mc_copies", "M");
    alias("glimpses", "T");
    alias("frames_per_sample", "F");
    return k;
  }();
  return table;
}

#undef HAR_SIZE
#undef HAR_DOUBLE
#undef HAR_BOOL
#undef HAR_ENUM

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

std::vector<std::string> RunConfig::validation_errors() const {
  std::vector<std::string> errors = train.validation_errors();
  const GlimpseConfig& g = model.glimpse;
  if (g.window_h < 1 || g.window_w < 1) errors.push_back("glimpse_h and glimpse_w must be at least 1");
  if (g.n_scales < 1) errors.push_back("n_scales must be at least 1");
  if (g.scale_factor < 1) errors.push_back("scale_factor must be at least 1");
  if (g.glimpses < 1) errors.push_back("glimpses (T) must be at least 1");
  if (!(g.loc_std > 0.0)) errors.push_back("loc_std must be positive");
  if (model.frames_per_sample < 1) errors.push_back("frames_per_sample (F) must be at least 1");
  if (model.kernel < 1 || model.kernel % 2 == 0) errors.push_back("kernel must be odd");
  if (model.conv1_filters < 1 || model.conv2_filters < 1) errors.push_back("conv filter counts must be positive");
  if (model.rho_dim != model.loc_dim) errors.push_back("rho_dim must equal loc_dim");
  if (model.rho_dim < 1 || model.glimpse_dim < 1 || model.hidden_a < 1 || model.hidden_f < 1) {
    errors.push_back("layer widths must be positive");
  }
  if (data.windowing.window_length < model.frames_per_sample) {
    errors.push_back("window_length must be at least frames_per_sample");
  }
  if (!(data.windowing.overlap >= 0.0 && data.windowing.overlap < 1.0)) errors.push_back("overlap must lie in [0, 1)");
  if (synth.n_classes < 2) errors.push_back("synth_classes must be at least 2");
  if (synth.n_subjects < 1) errors.push_back("synth_subjects must be at least 1");
  if (synth.channels < 2) errors.push_back("synth_channels must be at least 2");
  if (synth.windows_per_class < 1) errors.push_back("synth_windows_per_class must be at least 1");
  if (!(synth.noise_std >= 0.0)) errors.push_back("synth_noise_std must be non-negative");
  if (!(involvement.late_fraction > 0.0 && involvement.late_fraction <= 1.0)) {
    errors.push_back("late_fraction must lie in (0, 1]");
  }
  return errors;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (k.name == key || std::find(k.aliases.begin(), k.aliases.end(), key) != k.aliases.end()) {
      try {
        k.set(config, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(key + ": " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown key '" + key + "'");
}

RunConfig parse_run_config(std::istream& in, const std::string& source_name, RunConfig base) {
  std::vector<std::string> problems;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source_name + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected 'key = value'");
      continue;
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      problems.push_back(where + e.what());
    }
  }
  if (!problems.empty()) {
    // Report range problems in the same pass; flags cannot rescue a bad file.
    for (auto& e : base.validation_errors()) problems.push_back(source_name + ": " + e);
    throw ConfigError(problems);
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path.string() + "'"});
  return parse_run_config(in, path.string(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys())
    if (k.get) out.emplace_back(k.name, k.get(config));
  return out;
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

namespace {

json tensor_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from_json(const json& j, const std::string& what) {
  const auto shape = j.at("shape").get<Shape>();
  auto data = j.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != data.size()) {
    throw CheckpointError("tensor '" + what + "' declares " + std::to_string(n) + " values but holds " +
                          std::to_string(data.size()));
  }
  Tensor t(shape);
  std::copy(data.begin(), data.end(), t.data().begin());
  return t;
}

json schema_json(const SensorSchema& s) {
  json channels = json::array();
  for (const auto& c : s.channels) {
    channels.push_back({{"name", c.name}, {"location", c.location}, {"modality", c.modality}, {"axes", c.axes}});
  }
  return json{{"channels", channels}, {"sampling_rate", s.sampling_rate}, {"classes", s.classes}};
}

SensorSchema schema_from_json(const json& j) {
  SensorSchema s;
  for (const auto& c : j.at("channels")) {
    s.channels.push_back({c.at("name").get<std::string>(), c.at("location").get<std::string>(),
                          c.at("modality").get<std::string>(), c.at("axes").get<std::size_t>()});
  }
  s.sampling_rate = j.at("sampling_rate").get<double>();
  s.classes = j.at("classes").get<std::vector<std::string>>();
  return s;
}

constexpr const char* kCheckpointFormat = "har-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  RunConfig rc;
  rc.model = ck.model;
  rc.data = ck.data;
  json config = json::object();
  for (const auto& [k, v] : config_entries(rc)) config[k] = v;
  json tensors = json::array();
  for (std::size_t i = 0; i < kParamCount; ++i) {
    json t = tensor_json(ck.params.tensors[i]);
    t["name"] = std::string(param_name(i));
    tensors.push_back(std::move(t));
  }
  const json doc{{"format", kCheckpointFormat},
                 {"version", kCheckpointVersion},
                 {"config", config},
                 {"frame_height", ck.model.frame_height},
                 {"frame_width", ck.model.frame_width},
                 {"n_classes", ck.model.n_classes},
                 {"class_names", ck.class_names},
                 {"schema", schema_json(ck.schema)},
                 {"normalizer", {{"mean", tensor_json(ck.normalizer.mean)}, {"stddev", tensor_json(ck.normalizer.stddev)}}},
                 {"tensors", tensors}};
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out << doc.dump() << "\n";
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::string where = "checkpoint '" + path.string() + "': ";
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw CheckpointError(where + "not valid JSON (" + e.what() + ")");
  }
  try {
    if (doc.value("format", "") != kCheckpointFormat) throw CheckpointError(where + "not a model checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError(where + "unsupported version " + std::to_string(doc.at("version").get<int>()));
    }
    RunConfig rc;
    for (const auto& [k, v] : doc.at("config").items()) set_config_value(rc, k, v.get<std::string>());
    Checkpoint ck;
    ck.model = rc.model;
    ck.data = rc.data;
    ck.model.frame_height = doc.at("frame_height").get<std::size_t>();
    ck.model.frame_width = doc.at("frame_width").get<std::size_t>();
    ck.model.n_classes = doc.at("n_classes").get<std::size_t>();
    ck.model.validate();
    ck.class_names = doc.at("class_names").get<std::vector<std::string>>();
    ck.schema = schema_from_json(doc.at("schema"));
    ck.normalizer.mean = tensor_from_json(doc.at("normalizer").at("mean"), "normalizer.mean");
    ck.normalizer.stddev = tensor_from_json(doc.at("normalizer").at("stddev"), "normalizer.stddev");

    const auto& tensors = doc.at("tensors");
    if (tensors.size() != kParamCount) {
      throw CheckpointError(where + "expected " + std::to_string(kParamCount) + " tensors, found " +
                            std::to_string(tensors.size()));
    }
    ck.params = ModelParams::zeros(ck.model);
    for (std::size_t i = 0; i < kParamCount; ++i) {
      const std::string name(param_name(i));
      if (tensors[i].at("name").get<std::string>() != name) {
        throw CheckpointError(where + "tensor " + std::to_string(i) + " is '" + tensors[i].at("name").get<std::string>() +
                              "', expected '" + name + "'");
      }
      Tensor t = tensor_from_json(tensors[i], name);
      if (t.shape() != ck.params.tensors[i].shape()) {
        throw CheckpointError(where + "tensor '" + name + "' has shape " + to_string(t.shape()) +
                              " but the stored config needs " + to_string(ck.params.tensors[i].shape()));
      }
      if (!t.all_finite()) throw CheckpointError(where + "tensor '" + name + "' holds non-finite values");
      ck.params.tensors[i] = std::move(t);
    }
    return ck;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(where + e.what());
  }
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_gray(const std::filesystem::path& path, const Tensor& image, double lo, double hi) {
  if (image.rank() != 2) throw DimensionError("PGM output needs a matrix, got " + to_string(image.shape()));
  auto out = open_out(path);
  out << "P2\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t r = 0; r < image.dim(0); ++r) {
    for (std::size_t c = 0; c < image.dim(1); ++c) {
      const double v = std::clamp((image.at(r, c) - lo) / span, 0.0, 1.0);
      out << (c ? " " : "") << std::lround(v * 255.0);
    }
    out << "\n";
  }
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Tensor& image) { write_gray(path, image, 0.0, 1.0); }

void write_frame_pgm(const std::filesystem::path& path, const Tensor& frame) {
  const auto [lo, hi] = std::minmax_element(frame.data().begin(), frame.data().end());
  write_gray(path, frame, *lo, *hi);
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor& matrix) {
  if (matrix.rank() != 2) throw DimensionError("CSV output needs a matrix, got " + to_string(matrix.shape()));
  auto out = open_out(path);
  for (std::size_t r = 0; r < matrix.dim(0); ++r) {
    for (std::size_t c = 0; c < matrix.dim(1); ++c) out << (c ? "," : "") << format_double(matrix.at(r, c));
    out << "\n";
  }
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  auto name = [&](std::size_t k) { return k < class_names.size() ? class_names[k] : std::to_string(k); };
  out << "true\\predicted";
  for (std::size_t k = 0; k < cm.n_classes(); ++k) out << "," << name(k);
  out << "\n";
  for (std::size_t i = 0; i < cm.n_classes(); ++i) {
    out << name(i);
    for (std::size_t j = 0; j < cm.n_classes(); ++j) out << "," << cm.at(i, j);
    out << "\n";
  }
}

void write_involvement_csv(const std::filesystem::path& path, const std::vector<std::string>& row_names,
                           const std::vector<Involvement>& rows) {
  if (rows.empty()) throw std::invalid_argument("no involvement rows to write");
  auto out = open_out(path);
  out << "class";
  for (const auto& g : rows.front().groups) out << "," << g;
  out << ",glimpses\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << row_names.at(i);
    for (double p : rows[i].percent) out << "," << format_double(p);
    out << "," << format_double(rows[i].glimpses) << "\n";
  }
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path) {
  auto out = open_out(path_);
  out << "epoch,split,loss,accuracy\n";
}

void MetricsWriter::write(const EpochMetrics& row) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to '" + path_.string() + "'");
  out << row.epoch << "," << row.split << "," << format_double(row.loss) << "," << format_double(row.accuracy) << "\n";
}

}  // namespace har
