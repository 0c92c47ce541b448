#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using har::cli::Options;
  Options o;
  CLI::App app{"Activity-frame attention network for human activity recognition"};
  app.set_version_flag("--version", har::cli::kVersion);
  app.require_subcommand(1, 1);

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory; nothing is written outside it");
    sub->add_option("--config", o.config, "Flat key = value run configuration");
    sub->add_option("--seed", o.seed, "Overrides the config seed");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  const auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "Sensor CSV: subject,activity,timestamp,<channel>_x,...");
    sub->add_option("--schema", o.schema, "Sensor schema JSON");
    sub->add_option("--label-map", o.label_map, "raw_label,coarse_label CSV");
    sub->add_flag("--synth", o.synth, "Use the generated synthetic dataset");
    sub->add_option("--fold", o.fold, "Only this LOSO fold (0-based subject index)");
  };
  const auto add_model = [&](CLI::App* sub) {
    sub->add_option("--glimpse-size", o.glimpse_size, "Finest retina window, HxW");
    sub->add_option("--glimpses", o.glimpses, "Glimpses per frame (T)");
    sub->add_option("--frames-per-sample", o.frames_per_sample, "Frames per sample (F)");
    sub->add_flag("--drop-closing-row", o.drop_closing_row, "Omit the walk's final row back to row 1");
    sub->add_option("--frame-input", o.frame_input, "What the frame LSTM reads")->check(CLI::IsMember({"hidden", "action"}));
    sub->add_flag("--no-baseline", o.no_baseline, "Disable the learned reward baseline");
  };

  auto* frames = app.add_subcommand("frames", "Build activity frames and report the row walk");
  add_common(frames);
  add_data(frames);
  add_model(frames);

  auto* train = app.add_subcommand("train", "Train with LOSO cross-validation");
  add_common(train);
  add_data(train);
  add_model(train);
  train->add_option("--mc-copies", o.mc_copies, "Monte Carlo copies (M) for training and evaluation");
  train->add_option("--manifest", o.manifest, "Replay a recorded run from its manifest.json");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval);
  add_data(eval);
  add_model(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint.json written by train")->required();
  eval->add_option("--mc-copies", o.mc_copies, "Monte Carlo copies (M)");

  auto* heatmap = app.add_subcommand("heatmap", "Glimpse heatmap and modality involvement");
  add_common(heatmap);
  add_data(heatmap);
  add_model(heatmap);
  heatmap->add_option("--checkpoint", o.checkpoint, "checkpoint.json written by train")->required();
  heatmap->add_option("--mc-copies", o.mc_copies, "Monte Carlo copies (M)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  gradcheck->add_option("--seed", o.seed, "Seed for parameters and inputs");
  gradcheck->add_option("--out", o.out, "Optional directory for gradcheck.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Error& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : har::cli::ExitCode::validation_error;
  }
  o.command = app.get_subcommands().front()->get_name();
  return har::cli::run(o, std::cout, std::cerr);
}
