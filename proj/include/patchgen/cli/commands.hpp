#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace patchgen::cli {

inline constexpr const char* kVersion = "patchgen 0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
};

struct SampleArgs {
  std::filesystem::path checkpoint;
  int num = 16;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct EvalArgs {
  std::filesystem::path generated;
  std::filesystem::path reference;
  bool scaled = false;
  std::filesystem::path out;
  std::optional<std::filesystem::path> matrices;
};

struct ProbeArgs {
  std::filesystem::path run;
  std::vector<int> epochs;
};

struct PlotArgs {
  std::filesystem::path in;
  std::optional<std::filesystem::path> ids;
  std::filesystem::path out;
  double azimuth = 30.0;
  double elevation = 20.0;
};

struct EmbedArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path in;
  std::filesystem::path out;
};

struct ComplexityArgs {
  std::vector<std::string> generators{"mlp", "point_trans", "dual_trans"};
  std::vector<long long> patches{1, 2, 4, 8, 16, 32};
  int points = 2048;
};

// Each command throws patchgen::Error subclasses; run_cli maps them to exit codes.
void cmd_train(const TrainArgs& args);
void cmd_sample(const SampleArgs& args);
void cmd_eval(const EvalArgs& args);
void cmd_probe(const ProbeArgs& args);
void cmd_plot(const PlotArgs& args);
void cmd_embed(const EmbedArgs& args);
std::string cmd_complexity(const ComplexityArgs& args);

/// Cloud files (.pcpf, .bin, .xyz, .txt) in a directory, sorted by name.
std::vector<std::filesystem::path> cloud_files(const std::filesystem::path& dir);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

/// Parses arguments, dispatches, prints errors to stderr and returns the exit code.
int run_cli(int argc, char** argv);

}  // namespace patchgen::cli
