#pragma once

#include <string>
#include <vector>

#include "lemo/engine.hpp"
#include "lemo/synth.hpp"

namespace lemo {

struct AblationCell {
  InitKind init = InitKind::decoupled_noise;
  UpdateKind update = UpdateKind::learning;
  EvalResult eval;
  std::uint64_t initial_bank_hash = 0;
  std::uint64_t final_bank_hash = 0;
};

inline constexpr InitKind kAllInits[] = {InitKind::single_image, InitKind::noise,
                                         InitKind::decoupled_noise};
inline constexpr UpdateKind kAllUpdates[] = {UpdateKind::none, UpdateKind::learning,
                                             UpdateKind::feature_enhanced};

struct AblationGrid {
  std::vector<AblationCell> cells;  // init-major, in kAllInits x kAllUpdates order

  const AblationCell& at(InitKind init, UpdateKind update) const;
};

/// Runs every init x update combination of base on the same train stream
/// and held-out set.
AblationGrid run_ablation_grid(const EngineConfig& base, const FrameSource& train,
                               const FrameSource& test, const StreamOptions& opts = {});

enum class DriftMode { offline, online };

std::string to_string(DriftMode m);
DriftMode parse_drift_mode(const std::string& s);
std::string to_string(DriftKind k);
DriftKind parse_drift_kind(const std::string& s);

struct DriftResult {
  DriftMode mode = DriftMode::online;
  DriftSpec drift;
  EvalResult clean;    // trained on the clean stream, tested on clean frames
  EvalResult drifted;  // tested on drifted frames after the mode's training
};

/// offline: the model trained on the clean stream is frozen and tested on
/// drifted frames. online: the stream itself drifts from drift.onset_frame and
/// the model keeps learning through it before testing on drifted frames.
DriftResult run_drift_experiment(const EngineConfig& cfg, const FrameSource& train,
                                 const FrameSource& test, const DriftSpec& drift, DriftMode mode,
                                 const EvalOptions& eval = {});

std::string ablation_csv(const AblationGrid& grid);
std::string ablation_table(const AblationGrid& grid);

std::string drift_csv(const std::vector<DriftResult>& rows);
std::string drift_table(const std::vector<DriftResult>& rows);

struct NamedEval {
  std::string name;
  EvalResult eval;
};

/// I-AUROC / P-AUROC / P-AUPRO per row.
std::string eval_table(const std::vector<NamedEval>& rows);

/// One method row with TPS, TPI, encoder and detection columns.
std::string timing_table(const std::string& name, const TimingSummary& t);

}  // namespace lemo
