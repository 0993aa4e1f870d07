#pragma once

#include "disfluent/dsp.hpp"
#include "disfluent/harness.hpp"
#include "disfluent/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace disfluent {

inline constexpr int kConfigSchemaVersion = 1;

struct RunPaths {
  std::filesystem::path manifest = "corpus/manifest.json";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path report_dir = "reports";

  bool operator==(const RunPaths&) const = default;
};

struct SynthSettings {
  std::uint64_t seed = 7;
  std::size_t subjects = 4;
  std::size_t clips_per_subject = 10;

  bool operator==(const SynthSettings&) const = default;
};

/// Everything a command needs. Layering, lowest first: built-in defaults,
/// the config file, the DISFLUENT_CACHE environment variable, command flags.
struct RunConfig {
  RunPaths paths;
  SpectrogramConfig spectrogram;
  ModelConfig model = ModelConfig::canonical();
  TrainConfig train;
  std::vector<StutterClass> classes{kStutterClasses.begin(), kStutterClasses.end()};
  std::size_t jobs = 1;
  SynthSettings synth;

  void validate() const;
  LosoConfig loso() const;
  bool operator==(const RunConfig&) const = default;
};

/// JSON with a top-level "schema_version". Missing keys keep their
/// defaults; unknown keys are rejected.
std::string config_to_json(const RunConfig& config);
/// Relative paths in the text are resolved against `base_dir` when given.
RunConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// Applies DISFLUENT_CACHE when set and non-empty.
void apply_environment(RunConfig& config);

/// "S,W,PR" -> classes; throws UnknownClass.
std::vector<StutterClass> parse_class_list(std::string_view csv);

}  // namespace disfluent
