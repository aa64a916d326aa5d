#include <CLI11.hpp>

#include "lemo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lemo: online prototype-memory anomaly detection"};
  app.require_subcommand(1);

  lemo::CommandOptions opts;
  std::string out;
  auto common = [&](CLI::App* sub) {
    sub->add_option("config", opts.config, "JSON run config")->required();
    sub->add_option("--set", opts.overrides, "dotted key=value override (repeatable)");
    sub->add_option("--out", out, "output directory (default ./runs/<timestamp>)");
  };

  auto* run = app.add_subcommand("run", "stream frames through the engine and evaluate");
  common(run);
  auto* ablate = app.add_subcommand("ablate", "init x update strategy grid");
  common(ablate);

  auto* drift = app.add_subcommand("drift", "clean vs drifted evaluation");
  common(drift);
  lemo::DriftArgs drift_args;
  std::uint64_t onset = 0;
  drift->add_option("--kind", drift_args.kind, "brightness or gaussian")
      ->check(CLI::IsMember({"brightness", "gaussian"}));
  drift->add_option("--magnitude", drift_args.magnitude, "drift magnitude in feature units")
      ->required();
  auto* onset_opt = drift->add_option("--onset", onset, "first drifted training frame");
  drift->add_option("--mode", drift_args.mode, "offline or online")
      ->check(CLI::IsMember({"offline", "online"}));

  auto* bench = app.add_subcommand("bench", "timing over repeated runs");
  common(bench);
  std::size_t frames = 100;
  std::size_t reps = 5;
  bench->add_option("--frames", frames, "frames per repetition");
  bench->add_option("--reps", reps, "repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lemo::kExitConfig;
  }
  if (!out.empty()) opts.out = out;

  if (*run) return lemo::cmd_run(opts);
  if (*ablate) return lemo::cmd_ablate(opts);
  if (*drift) {
    if (*onset_opt) drift_args.onset = onset;
    return lemo::cmd_drift(opts, drift_args);
  }
  return lemo::cmd_bench(opts, frames, reps);
}
