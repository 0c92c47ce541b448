#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "har/data.hpp"
#include "har/diagnostics.hpp"
#include "har/eval.hpp"
#include "har/frames.hpp"
#include "har/io.hpp"
#include "har/training.hpp"

namespace har::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kGradTolerance = 1e-4;
constexpr std::uint64_t kFinalEvalStream = 0x46494e414cULL;

/// Bad user input, reported with exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataSource {
  bool synth = false;
  fs::path path;
  fs::path schema;
  fs::path label_map;
};

void require_out(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required for '" + o.command + "'");
}

std::pair<std::size_t, std::size_t> parse_hxw(const std::string& text) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  std::size_t used_h = 0, used_w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    h = std::stoul(text.substr(0, x), &used_h);
    w = std::stoul(text.substr(x + 1), &used_w);
  } catch (const std::exception&) {
    throw UsageError("--glimpse-size expects HxW, e.g. 5x5, got '" + text + "'");
  }
  if (used_h != x || used_w != text.size() - x - 1 || h == 0 || w == 0) {
    throw UsageError("--glimpse-size expects HxW with positive sizes, got '" + text + "'");
  }
  return {h, w};
}

/// Defaults, then the config file, then explicit flags.
RunConfig resolve_config(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) rc.train.seed = *o.seed;
  if (o.mc_copies) {
    rc.train.mc_copies = *o.mc_copies;
    rc.train.eval_copies = *o.mc_copies;
  }
  if (o.glimpse_size) std::tie(rc.model.glimpse.window_h, rc.model.glimpse.window_w) = parse_hxw(*o.glimpse_size);
  if (o.glimpses) rc.model.glimpse.glimpses = *o.glimpses;
  if (o.frames_per_sample) rc.model.frames_per_sample = *o.frames_per_sample;
  if (o.drop_closing_row) rc.data.layout.drop_closing_row = true;
  if (o.frame_input) set_config_value(rc, "frame_input", *o.frame_input);
  if (o.no_baseline) rc.train.baseline_enabled = false;
  if (o.threads) rc.train.threads = *o.threads;
  const auto errors = rc.validation_errors();
  if (!errors.empty()) throw ConfigError(errors);
  return rc;
}

DataSource data_source(const Options& o, bool schema_optional = false) {
  DataSource src{o.synth, o.data, o.schema, o.label_map};
  if (o.synth && !o.data.empty()) throw UsageError("--synth and --data are mutually exclusive");
  if (!o.synth) {
    if (o.data.empty()) throw UsageError("'" + o.command + "' needs --data <csv> or --synth");
    if (o.schema.empty() && !schema_optional) throw UsageError("--data requires --schema <json>");
  }
  return src;
}

Dataset load_dataset(const DataSource& src, const RunConfig& rc, const SensorSchema* fallback_schema = nullptr) {
  if (src.synth) {
    SynthConfig s = rc.synth;
    s.window_length = rc.data.windowing.window_length;
    return synth_generate(s);
  }
  const SensorSchema schema = src.schema.empty() ? *fallback_schema : SensorSchema::load(src.schema);
  if (src.label_map.empty()) return load_csv(src.path, schema, rc.data.windowing);
  const LabelMap map = load_label_map(src.label_map);
  return load_csv(src.path, schema, rc.data.windowing, &map);
}

void check_nonempty(const Dataset& ds) {
  if (ds.windows.empty()) throw UsageError("the dataset produced no windows; check window_length against the run lengths");
}

json source_json(const DataSource& src) {
  return json{{"synth", src.synth},
              {"path", src.path.string()},
              {"schema", src.schema.string()},
              {"label_map", src.label_map.string()}};
}

std::string fold_name(std::size_t k) { return "fold" + std::to_string(k); }

void print_layout(const FrameLayout& layout, std::ostream& out) {
  out << "rows after padding: " << layout.n_rows << " (source channels " << layout.source_channels << ")\n";
  out << "S_p:";
  for (auto r : layout.permutation) out << " " << r;
  out << "\nframe: " << layout.frame_height << " x " << layout.frame_width << "\n";
}

// ---------------------------------------------------------------- frames

int cmd_frames(const Options& o, std::ostream& out) {
  require_out(o);
  const RunConfig rc = resolve_config(o);
  SensorSchema schema;
  std::optional<Dataset> ds;
  if (o.synth || !o.data.empty()) {
    const DataSource src = data_source(o);
    ds = load_dataset(src, rc);
    schema = ds->schema;
  } else {
    if (o.schema.empty()) throw UsageError("'frames' needs --schema <json> or --synth");
    schema = SensorSchema::load(o.schema);
  }
  const FrameLayout layout = build_layout(schema, rc.data.layout);
  print_layout(layout, out);

  // Independent check of the walk: every unordered pair of rows is adjacent
  // exactly once.
  std::set<std::pair<std::size_t, std::size_t>> seen;
  bool repeated = false;
  for (std::size_t k = 1; k < layout.permutation.size(); ++k) {
    repeated |= !seen.insert(std::minmax(layout.permutation[k - 1], layout.permutation[k])).second;
  }
  const std::size_t expected = layout.n_rows * (layout.n_rows - 1) / 2;
  // Without the closing row the walk's last edge back to row 1 is missing.
  const std::size_t reachable = expected - (rc.data.layout.drop_closing_row ? 1 : 0);
  if (layout.kind == FrameKind::activity) {
    out << "pair coverage: " << seen.size() << " of " << expected << (repeated ? ", with repeats" : ", each once")
        << (rc.data.layout.drop_closing_row ? " (closing row dropped)" : "") << "\n";
  }

  fs::create_directories(o.out);
  json report{{"n_rows", layout.n_rows},
              {"source_channels", layout.source_channels},
              {"permutation", layout.permutation},
              {"frame_height", layout.frame_height},
              {"frame_width", layout.frame_width},
              {"pairs_covered", seen.size()},
              {"pairs_expected", expected}};
  std::ofstream(o.out / "layout.json") << report.dump(2) << "\n";

  if (ds) {
    check_nonempty(*ds);
    fs::create_directories(o.out / "frames");
    std::vector<Tensor> raw;
    for (const auto& w : ds->windows) raw.push_back(w.values);
    const Normalizer norm = Normalizer::fit(raw);
    const std::size_t dump = std::min<std::size_t>(ds->windows.size(), 3);
    for (std::size_t i = 0; i < dump; ++i) {
      const auto& w = ds->windows[i];
      const Sample s = window_to_sample(norm.apply(w.values), layout, rc.model.frames_per_sample, w.label, w.subject,
                                        rc.data.aggregation);
      for (std::size_t f = 0; f < s.frames.size(); ++f) {
        const std::string stem = "window" + std::to_string(i) + "_frame" + std::to_string(f + 1);
        write_frame_pgm(o.out / "frames" / (stem + ".pgm"), s.frames[f]);
        write_matrix_csv(o.out / "frames" / (stem + ".csv"), s.frames[f]);
      }
    }
    out << "wrote " << dump * rc.model.frames_per_sample << " frames to " << (o.out / "frames").string() << "\n";
  }
  return repeated || (layout.kind == FrameKind::activity && layout.n_rows % 2 == 1 && seen.size() != reachable)
             ? ExitCode::runtime_error
             : ExitCode::ok;
}

// ---------------------------------------------------------------- train

struct TrainPlan {
  RunConfig config;
  DataSource source;
  std::optional<std::size_t> fold;
};

TrainPlan plan_from_manifest(const Options& o) {
  const bool extra = !o.data.empty() || o.synth || !o.schema.empty() || !o.config.empty() || o.seed || o.fold ||
                     o.mc_copies || o.glimpse_size || o.glimpses || o.frames_per_sample || o.drop_closing_row ||
                     o.frame_input || o.no_baseline || o.threads || !o.label_map.empty();
  if (extra) throw UsageError("--manifest replays a recorded run; only --out may accompany it");
  std::ifstream in(o.manifest);
  if (!in) throw UsageError("cannot open manifest '" + o.manifest.string() + "'");
  json doc;
  try {
    in >> doc;
    TrainPlan plan;
    std::vector<std::string> problems;
    for (const auto& [k, v] : doc.at("config").items()) {
      try {
        set_config_value(plan.config, k, v.get<std::string>());
      } catch (const std::invalid_argument& e) {
        problems.push_back(o.manifest.string() + ": " + e.what());
      }
    }
    if (!problems.empty()) throw ConfigError(problems);
    const auto& d = doc.at("data");
    plan.source = {d.at("synth").get<bool>(), d.at("path").get<std::string>(), d.at("schema").get<std::string>(),
                   d.at("label_map").get<std::string>()};
    if (!doc.at("fold").is_null()) plan.fold = doc.at("fold").get<std::size_t>();
    const auto errors = plan.config.validation_errors();
    if (!errors.empty()) throw ConfigError(errors);
    return plan;
  } catch (const json::exception& e) {
    throw UsageError("manifest '" + o.manifest.string() + "' is malformed: " + e.what());
  }
}

int cmd_train(const Options& o, std::ostream& out) {
  require_out(o);
  TrainPlan plan;
  if (!o.manifest.empty()) {
    plan = plan_from_manifest(o);
  } else {
    plan.config = resolve_config(o);
    plan.source = data_source(o);
    plan.fold = o.fold;
  }
  const RunConfig& rc = plan.config;
  const Dataset ds = load_dataset(plan.source, rc);
  check_nonempty(ds);
  const auto splits = loso_splits(ds);
  if (plan.fold && *plan.fold >= splits.size()) {
    throw UsageError("--fold " + std::to_string(*plan.fold) + " is out of range; the data has " +
                     std::to_string(splits.size()) + " subjects");
  }
  const FrameLayout layout = build_layout(ds.schema, rc.data.layout);
  ModelConfig model = rc.model;
  model.frame_height = layout.frame_height;
  model.frame_width = layout.frame_width;
  model.n_classes = ds.class_names.size();
  model.validate();

  std::vector<std::size_t> folds;
  for (std::size_t k = 0; k < splits.size(); ++k)
    if (!plan.fold || *plan.fold == k) folds.push_back(k);

  // The manifest is complete before any training starts.
  fs::create_directories(o.out);
  json config = json::object();
  for (const auto& [k, v] : config_entries(rc)) config[k] = v;
  json artifacts{{"summary", "summary.csv"}, {"folds", json::array()}};
  for (auto k : folds) {
    artifacts["folds"].push_back({{"fold", k},
                                  {"subject", splits[k].test_subject},
                                  {"metrics", fold_name(k) + "/metrics.csv"},
                                  {"checkpoint", fold_name(k) + "/checkpoint.json"},
                                  {"confusion", fold_name(k) + "/confusion.csv"}});
  }
  const json manifest{{"tool", "har"},
                      {"version", kVersion},
                      {"command", "train"},
                      {"seed", rc.train.seed},
                      {"config", config},
                      {"data", source_json(plan.source)},
                      {"fold", plan.fold ? json(*plan.fold) : json(nullptr)},
                      {"artifacts", artifacts}};
  std::ofstream(o.out / "manifest.json") << manifest.dump(2) << "\n";

  out << "data: " << ds.windows.size() << " windows, " << ds.class_names.size() << " classes, " << splits.size()
      << " subjects; frame " << model.frame_height << "x" << model.frame_width << "\n";

  std::vector<double> accuracies;
  std::ofstream summary(o.out / "summary.csv");
  summary << "fold,subject,accuracy\n";
  for (auto k : folds) {
    const fs::path dir = o.out / fold_name(k);
    fs::create_directories(dir);
    const PreparedFold fold = prepare_fold(ds, splits[k], layout, model.frames_per_sample, rc.data.aggregation);
    MetricsWriter metrics(dir / "metrics.csv");
    const auto result = fit(fold.train, fold.test, ModelParams::init(model, rc.train.seed), model, rc.train,
                            [&](const EpochMetrics& m) {
                              metrics.write(m);
                              out << fold_name(k) << " epoch " << m.epoch << " " << m.split << " loss "
                                  << std::setprecision(4) << m.loss << " acc " << m.accuracy << "\n";
                            });
    const EvalResult ev = evaluate(fold.test, result.params, model, rc.train.eval_copies,
                                   derive_seed(rc.train.seed ^ kFinalEvalStream, k), false, rc.train.threads);
    write_confusion_csv(dir / "confusion.csv", ev.confusion, ds.class_names);
    save_checkpoint(dir / "checkpoint.json", {model, rc.data, ds.schema, ds.class_names, fold.normalizer, result.params});
    accuracies.push_back(ev.accuracy);
    summary << k << "," << splits[k].test_subject << "," << format_double(ev.accuracy) << "\n";
    out << fold_name(k) << " (" << splits[k].test_subject << ") test accuracy " << std::setprecision(4) << ev.accuracy
        << "\n";
  }
  const LosoSummary s = loso_aggregate(accuracies);
  out << "LOSO accuracy " << std::setprecision(4) << s.mean << " +/- " << s.stddev << " over " << accuracies.size()
      << " fold(s)\n";
  return ExitCode::ok;
}

// ---------------------------------------------------------------- eval / heatmap

struct Loaded {
  Checkpoint checkpoint;
  FrameLayout layout;
  std::vector<Sample> samples;
  std::size_t copies = 0;
  std::uint64_t seed = 1;
  InvolvementOptions involvement;
};

Loaded load_for_inference(const Options& o) {
  require_out(o);
  if (o.checkpoint.empty()) throw UsageError("'" + o.command + "' needs --checkpoint <json>");
  if (o.glimpse_size || o.glimpses || o.frames_per_sample || o.drop_closing_row || o.frame_input || o.no_baseline) {
    throw UsageError("model-shape flags come from the checkpoint and cannot be overridden at '" + o.command + "'");
  }
  Loaded l;
  RunConfig rc = resolve_config(o);
  l.checkpoint = load_checkpoint(o.checkpoint);
  const Checkpoint& ck = l.checkpoint;
  rc.data = ck.data;
  const DataSource src = data_source(o, true);
  const Dataset ds = load_dataset(src, rc, &ck.schema);
  check_nonempty(ds);
  l.layout = build_layout(ds.schema, ck.data.layout);
  if (l.layout.frame_height != ck.model.frame_height || l.layout.frame_width != ck.model.frame_width) {
    throw CheckpointError("data frames are " + std::to_string(l.layout.frame_height) + "x" +
                          std::to_string(l.layout.frame_width) + " but the checkpoint expects " +
                          std::to_string(ck.model.frame_height) + "x" + std::to_string(ck.model.frame_width));
  }
  std::vector<std::size_t> label_of(ds.class_names.size());
  for (std::size_t i = 0; i < ds.class_names.size(); ++i) {
    const auto it = std::find(ck.class_names.begin(), ck.class_names.end(), ds.class_names[i]);
    if (it == ck.class_names.end()) throw UsageError("class '" + ds.class_names[i] + "' is unknown to the checkpoint");
    label_of[i] = static_cast<std::size_t>(it - ck.class_names.begin());
  }
  std::optional<std::string> subject;
  if (o.fold) {
    const auto subjects = ds.subjects();
    if (*o.fold >= subjects.size()) throw UsageError("--fold " + std::to_string(*o.fold) + " is out of range");
    subject = subjects[*o.fold];
  }
  for (const auto& w : ds.windows) {
    if (subject && w.subject != *subject) continue;
    l.samples.push_back(window_to_sample(ck.normalizer.apply(w.values), l.layout, ck.model.frames_per_sample,
                                         label_of[w.label], w.subject, ck.data.aggregation));
  }
  l.copies = rc.train.eval_copies;
  l.seed = rc.train.seed;
  l.involvement = rc.involvement;
  return l;
}

int cmd_eval(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const Checkpoint& ck = l.checkpoint;
  const EvalResult ev = evaluate(l.samples, ck.params, ck.model, l.copies, l.seed, false, o.threads.value_or(1));
  fs::create_directories(o.out);
  write_confusion_csv(o.out / "confusion.csv", ev.confusion, ck.class_names);
  const json summary{{"accuracy", ev.accuracy}, {"loss", ev.loss}, {"samples", l.samples.size()}, {"copies", l.copies},
                     {"seed", l.seed}};
  std::ofstream(o.out / "eval.json") << summary.dump(2) << "\n";
  out << "accuracy " << std::setprecision(4) << ev.accuracy << " on " << l.samples.size() << " samples (M=" << l.copies
      << ")\n";
  return ExitCode::ok;
}

int cmd_heatmap(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const Checkpoint& ck = l.checkpoint;
  const EvalResult ev = evaluate(l.samples, ck.params, ck.model, l.copies, l.seed, true, o.threads.value_or(1));
  const Heatmap map = glimpse_heatmap(ev.traces, ck.model.frame_height, ck.model.frame_width, ck.model.glimpse);
  fs::create_directories(o.out);
  write_pgm(o.out / "heatmap.pgm", map.heat);
  write_matrix_csv(o.out / "heatmap_counts.csv", map.counts);

  std::vector<std::string> names{"all"};
  std::vector<Involvement> rows{modality_involvement(ev.traces, l.layout, ck.schema, ck.model.glimpse, l.involvement)};
  const auto per_class =
      involvement_by_class(ev.traces, ck.model.n_classes, l.layout, ck.schema, ck.model.glimpse, l.involvement);
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    names.push_back(ck.class_names[k]);
    rows.push_back(per_class[k]);
  }
  write_involvement_csv(o.out / "involvement.csv", names, rows);
  out << "glimpses: " << map.glimpses << " over " << ev.traces.size() << " episodes\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].glimpses == 0.0) continue;
    out << names[i] << ": top group " << rows[i].groups[rows[i].top()] << " (" << std::setprecision(3)
        << rows[i].percent[rows[i].top()] << "%)\n";
  }
  return ExitCode::ok;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed.value_or(1);
  const auto checks = layer_gradient_checks(seed);
  bool pass = true;
  std::ostringstream csv;
  csv << "layer,max_rel_error,probed,status\n";
  out << "gradient check, seed " << seed << ", tolerance " << kGradTolerance << "\n";
  for (const auto& c : checks) {
    const bool ok = c.report.max_rel_error < kGradTolerance;
    pass &= ok;
    out << "  " << std::left << std::setw(20) << c.layer << std::scientific << std::setprecision(3)
        << c.report.max_rel_error << std::defaultfloat << "  " << (ok ? "ok" : "FAIL") << "\n";
    csv << c.layer << "," << format_double(c.report.max_rel_error) << "," << c.report.probed << ","
        << (ok ? "ok" : "fail") << "\n";
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(o.out / "gradcheck.csv") << csv.str();
  }
  out << (pass ? "all layers within tolerance\n" : "gradient check FAILED\n");
  return pass ? ExitCode::ok : ExitCode::runtime_error;
}

}  // namespace

int run(const Options& o, std::ostream& out, std::ostream& err) {
  try {
    if (o.command == "frames") return cmd_frames(o, out);
    if (o.command == "train") return cmd_train(o, out);
    if (o.command == "eval") return cmd_eval(o, out);
    if (o.command == "heatmap") return cmd_heatmap(o, out);
    if (o.command == "gradcheck") return cmd_gradcheck(o, out);
    err << "error: unknown command '" << o.command << "'\n";
    return ExitCode::validation_error;
  } catch (const ConfigError& e) {
    err << "error: invalid configuration:\n";
    for (const auto& p : e.problems()) err << "  " << p << "\n";
    return ExitCode::validation_error;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::validation_error;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::validation_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return ExitCode::runtime_error;
  }
}

}  // namespace har::cli
