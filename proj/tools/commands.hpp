#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace har::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { ok = 0, validation_error = 1, runtime_error = 2 };

struct Options {
  std::string command;
  std::filesystem::path data;
  std::filesystem::path schema;
  std::filesystem::path label_map;
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::optional<std::uint64_t> seed;
  bool synth = false;
  std::optional<std::size_t> fold;
  std::optional<std::size_t> mc_copies;
  std::optional<std::string> glimpse_size;
  std::optional<std::size_t> glimpses;
  std::optional<std::size_t> frames_per_sample;
  bool drop_closing_row = false;
  std::optional<std::string> frame_input;
  bool no_baseline = false;
  std::optional<std::size_t> threads;
};

/// Runs one subcommand, reporting progress on `out` and problems on `err`.
/// Never throws; failures map to exit codes.
int run(const Options& options, std::ostream& out, std::ostream& err);

}  // namespace har::cli
