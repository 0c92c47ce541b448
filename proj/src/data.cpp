#include "har/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace har {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

double parse_number(const std::string& text, std::size_t line_no, const std::string& column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": column '" + column + "' has invalid value '" +
                             text + "'");
  }
  return value;
}

}  // namespace

std::vector<std::string> Dataset::subjects() const {
  std::vector<std::string> out;
  for (const auto& w : windows) {
    if (std::find(out.begin(), out.end(), w.subject) == out.end()) out.push_back(w.subject);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& w : windows) ++counts.at(w.label);
  return counts;
}

std::size_t WindowingOptions::step() const {
  const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(window_length) * (1.0 - overlap)));
  return std::max<std::size_t>(1, s);
}

std::size_t window_count(std::size_t run_length, const WindowingOptions& options) {
  if (options.window_length == 0 || run_length < options.window_length) return 0;
  return (run_length - options.window_length) / options.step() + 1;
}

LabelMap load_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label map '" + path.string() + "'");
  LabelMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      throw std::runtime_error(path.string() + " line " + std::to_string(line_no) +
                               ": expected raw_label,coarse_label");
    }
    if (line_no == 1 && trim(fields[0]) == "raw_label") continue;
    map[trim(fields[0])] = trim(fields[1]);
  }
  return map;
}

Dataset load_csv(const std::filesystem::path& path, const SensorSchema& schema, const WindowingOptions& options,
                 const LabelMap* label_map) {
  schema.validate();
  if (!(options.overlap >= 0.0 && options.overlap < 1.0)) {
    throw std::invalid_argument("window overlap must lie in [0, 1)");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file '" + path.string() + "'");

  Dataset dataset;
  dataset.schema = schema;

  std::vector<std::string> expected{"subject", "activity", "timestamp"};
  static constexpr const char* kAxisNames[] = {"x", "y", "z"};
  for (const auto& ch : schema.channels)
    for (std::size_t a = 0; a < ch.axes; ++a) expected.push_back(ch.name + "_" + kAxisNames[a]);

  // Resolve class names up front when they are declared.
  bool dynamic_classes = false;
  if (label_map) {
    if (!schema.classes.empty()) {
      dataset.class_names = schema.classes;
    } else {
      std::set<std::string> coarse;
      for (const auto& [raw, c] : *label_map) coarse.insert(c);
      dataset.class_names.assign(coarse.begin(), coarse.end());
    }
  } else if (!schema.classes.empty()) {
    dataset.class_names = schema.classes;
  } else {
    dynamic_classes = true;
  }

  auto class_index = [&](const std::string& activity, std::size_t line_no) -> std::size_t {
    std::string name = activity;
    if (label_map) {
      const auto it = label_map->find(activity);
      if (it == label_map->end()) {
        std::vector<std::string> known;
        for (const auto& [raw, c] : *label_map) known.push_back(raw);
        throw std::runtime_error("line " + std::to_string(line_no) + ": unknown activity label '" + activity +
                                 "'; known labels: " + join(known));
      }
      name = it->second;
    }
    const auto it = std::find(dataset.class_names.begin(), dataset.class_names.end(), name);
    if (it != dataset.class_names.end()) return static_cast<std::size_t>(it - dataset.class_names.begin());
    if (dynamic_classes) {
      dataset.class_names.push_back(name);
      return dataset.class_names.size() - 1;
    }
    throw std::runtime_error("line " + std::to_string(line_no) + ": unknown activity label '" + name +
                             "'; known classes: " + join(dataset.class_names));
  };

  const std::size_t channels = schema.channels.size();
  std::vector<double> run;  // flattened [t x channels x 3]
  std::string run_subject;
  std::string run_activity;
  std::size_t run_label = 0;
  std::size_t run_steps = 0;

  auto flush_run = [&]() {
    const std::size_t n = window_count(run_steps, options);
    const std::size_t width = channels * 3;
    for (std::size_t w = 0; w < n; ++w) {
      const std::size_t begin = w * options.step();
      std::vector<double> values(run.begin() + static_cast<std::ptrdiff_t>(begin * width),
                                 run.begin() + static_cast<std::ptrdiff_t>((begin + options.window_length) * width));
      dataset.windows.push_back(
          {Tensor(Shape{options.window_length, channels, 3}, std::move(values)), run_label, run_subject});
    }
    run.clear();
    run_steps = 0;
  };

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      for (auto& f : fields) f = trim(f);
      if (fields != expected) {
        throw std::runtime_error(path.string() + ": header does not match schema; expected '" + join(expected) +
                                 "', found '" + join(fields) + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != expected.size()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " + std::to_string(expected.size()) +
                               " columns, found " + std::to_string(fields.size()));
    }
    const std::string subject = trim(fields[0]);
    const std::string activity = trim(fields[1]);
    if (subject.empty() || activity.empty()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": missing subject or activity");
    }
    parse_number(trim(fields[2]), line_no, "timestamp");
    if (run_steps > 0 && (subject != run_subject || activity != run_activity)) flush_run();
    if (run_steps == 0) {
      run_subject = subject;
      run_activity = activity;
      run_label = class_index(activity, line_no);
    }
    std::size_t col = 3;
    for (const auto& ch : schema.channels) {
      for (std::size_t a = 0; a < 3; ++a) {
        if (a < ch.axes) {
          run.push_back(parse_number(trim(fields[col]), line_no, expected[col]));
          ++col;
        } else {
          run.push_back(0.0);
        }
      }
    }
    ++run_steps;
  }
  if (run_steps > 0) flush_run();
  return dataset;
}

std::string synth_group_key(const SynthConfig& config, std::size_t label) {
  return "acc_group" + std::to_string(label % config.groups());
}

Dataset synth_generate(const SynthConfig& config) {
  if (config.n_classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (config.channels < 2) throw std::invalid_argument("synthetic data needs at least 2 channels");
  if (config.n_subjects < 1 || config.window_length < 1) {
    throw std::invalid_argument("synthetic data needs at least one subject and a positive window length");
  }
  const std::size_t groups = config.groups();
  Dataset dataset;
  dataset.schema.sampling_rate = config.sampling_rate;
  for (std::size_t c = 0; c < config.channels; ++c) {
    const std::size_t g = c % groups;
    dataset.schema.channels.push_back(
        {"g" + std::to_string(g) + "_c" + std::to_string(c), "group" + std::to_string(g), "acc", 3});
  }
  for (std::size_t k = 0; k < config.n_classes; ++k) dataset.class_names.push_back("class" + std::to_string(k));
  dataset.schema.classes = dataset.class_names;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double two_pi = 2.0 * std::numbers::pi;

  for (std::size_t s = 0; s < config.n_subjects; ++s) {
    const std::string subject = "subject" + std::to_string(s + 1);
    for (std::size_t k = 0; k < config.n_classes; ++k) {
      const double freq = 0.25 + 0.15 * static_cast<double>(k);
      const double amplitude = 1.0 + 0.5 * static_cast<double>(k);
      const double phase = phase_dist(rng);
      const std::size_t active = k % groups;
      std::size_t t = 0;
      for (std::size_t w = 0; w < config.windows_per_class; ++w) {
        Tensor values(Shape{config.window_length, config.channels, 3});
        for (std::size_t i = 0; i < config.window_length; ++i, ++t) {
          const double time = static_cast<double>(t) / config.sampling_rate;
          for (std::size_t c = 0; c < config.channels; ++c) {
            for (std::size_t a = 0; a < 3; ++a) {
              double v = config.noise_std * noise(rng);
              if (c % groups == active) {
                v += amplitude * std::sin(two_pi * freq * time + phase + two_pi * static_cast<double>(a) / 3.0);
              }
              values.at(i, c, a) = v;
            }
          }
        }
        dataset.windows.push_back({std::move(values), k, subject});
      }
    }
  }
  return dataset;
}

std::vector<Split> loso_splits(const Dataset& dataset) {
  const auto subjects = dataset.subjects();
  if (subjects.size() < 2) {
    throw std::invalid_argument("leave-one-subject-out needs at least 2 subjects, found " +
                                std::to_string(subjects.size()));
  }
  std::vector<Split> splits;
  for (const auto& subject : subjects) {
    Split split;
    split.test_subject = subject;
    for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
      (dataset.windows[i].subject == subject ? split.test : split.train).push_back(i);
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

PreparedFold prepare_fold(const Dataset& dataset, const Split& split, const FrameLayout& layout,
                          std::size_t frames_per_sample, FrameAggregation aggregation) {
  if (split.train.empty()) throw std::invalid_argument("training split is empty");
  std::vector<Tensor> train_windows;
  train_windows.reserve(split.train.size());
  for (auto i : split.train) train_windows.push_back(dataset.windows.at(i).values);
  PreparedFold fold{Normalizer::fit(train_windows), {}, {}};
  auto convert = [&](std::size_t i) {
    const RawWindow& w = dataset.windows.at(i);
    return window_to_sample(fold.normalizer.apply(w.values), layout, frames_per_sample, w.label, w.subject,
                            aggregation);
  };
  for (auto i : split.train) fold.train.push_back(convert(i));
  for (auto i : split.test) fold.test.push_back(convert(i));
  return fold;
}

}  // namespace har
