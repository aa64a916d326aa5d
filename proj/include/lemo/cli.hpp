#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lemo/engine.hpp"
#include "lemo/synth.hpp"

namespace lemo {

/// Everything one command needs, parsed from a single JSON document.
struct RunConfig {
  EngineConfig engine;
  std::uint64_t seed = 0;

  std::optional<SynthConfig> synth;
  std::size_t train_frames = 300;
  std::size_t test_frames = 60;
  double anomaly_fraction = 0.5;

  std::optional<std::filesystem::path> manifest;
  bool require_pixel_masks = false;

  EvalOptions eval;
  bool final_only = false;
  bool save_maps = false;

  std::optional<std::filesystem::path> out;
};

/// Reads a JSON config file; a missing or malformed file is a ConfigError.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Applies "a.b.c=value" to the document. value is parsed as JSON when it
/// can be, and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Strict parse: unknown keys and wrong types are ConfigErrors. Relative
/// paths resolve against base_dir.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// The fully resolved config, defaults included.
nlohmann::json to_json(const RunConfig& cfg);

struct Sources {
  std::unique_ptr<FrameSource> train;
  std::unique_ptr<FrameSource> test;  // null when the source has no held-out split
};

Sources make_sources(const RunConfig& cfg, bool require_test);

nlohmann::json to_json(const EvalResult& r);
nlohmann::json to_json(const TimingSummary& t);

struct CommandOptions {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  std::optional<std::filesystem::path> out;
  std::ostream* log = nullptr;  // progress and results; stdout when null
};

struct DriftArgs {
  std::string kind = "brightness";
  double magnitude = 0.0;
  /// Defaults to the middle of the training stream.
  std::optional<std::uint64_t> onset;
  std::string mode = "online";
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

int cmd_run(const CommandOptions& opts);
int cmd_ablate(const CommandOptions& opts);
int cmd_drift(const CommandOptions& opts, const DriftArgs& args);
int cmd_bench(const CommandOptions& opts, std::size_t frames, std::size_t reps = 5);

/// ./runs/<YYYYmmdd-HHMMSS>
std::filesystem::path default_out_dir();

std::string hex64(std::uint64_t v);

}  // namespace lemo
