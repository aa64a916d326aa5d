#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lemo/adapter.hpp"
#include "lemo/anonce.hpp"
#include "lemo/frame.hpp"
#include "lemo/memory.hpp"
#include "lemo/scorer.hpp"

namespace lemo {

enum class InitKind { single_image, noise, decoupled_noise };
enum class UpdateKind { none, learning, feature_enhanced };

std::string to_string(InitKind k);
std::string to_string(UpdateKind k);
InitKind parse_init(const std::string& s);
UpdateKind parse_update(const std::string& s);

struct EngineConfig {
  InitKind init = InitKind::decoupled_noise;
  UpdateKind update = UpdateKind::learning;
  LossConfig loss;
  AdamHyper adam{.lr = 1e-3, .weight_decay = 5e-4};
  std::size_t k = 10;
  /// Adapter output width; 0 means square (d_out = d_in).
  std::size_t d_out = 272;
  double min_frac = 0.2;
  std::uint64_t seed = 0;
  std::size_t detect_every = 10;
  /// Feature-enhanced rebalancing cadence in train steps.
  std::size_t rebalance_every = 1;
  ScoreOptions scoring;

  void validate() const;
};

/// Everything detection needs: the adapter and the prototype bank.
struct Model {
  AdapterParams adapter;
  PrototypeBank bank;

  bool operator==(const Model&) const = default;
};

/// z = project(add_coords(fuse_scales(frame)))
Tensor3 encode(const Model& model, const StreamFrame& frame);

/// Scores one frame against a model; the map is upsampled to the mask size
/// when the frame carries a mask of a different resolution.
ScoreMap detect(const Model& model, const StreamFrame& frame, const ScoreOptions& opts = {});

struct StepMetrics {
  double loss = 0.0;
  double encode_ms = 0.0;
  double detect_ms = 0.0;
  double train_ms = 0.0;
  double image_score = 0.0;
};

/// Single-writer online learner. train_step mutates the live model; readers
/// take immutable snapshots via publish()/latest().
class Engine {
 public:
  /// raw_channels is the fused channel count before coordinates are added.
  /// single_image init consumes first_frame (which must not be anomalous).
  Engine(const EngineConfig& cfg, std::size_t raw_channels,
         const StreamFrame* first_frame = nullptr);

  StepMetrics train_step(const StreamFrame& frame);
  /// One online round: score the frame with the current model, then train on it.
  StepMetrics process(const StreamFrame& frame);
  ScoreMap detect(const StreamFrame& frame) const;

  std::shared_ptr<const Model> publish();
  std::shared_ptr<const Model> latest() const;

  const Model& model() const { return model_; }
  const EngineConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t initial_bank_hash() const { return initial_bank_hash_; }

  /// Bytes held by the learnable state: bank, counts, adapter and all moments.
  std::size_t state_bytes() const;
  std::uint64_t state_hash() const;

 private:
  StepMetrics round(const StreamFrame& frame, bool score);

  EngineConfig cfg_;
  Model model_;
  std::uint64_t steps_ = 0;
  std::uint64_t initial_bank_hash_ = 0;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const Model> snapshot_;
};

struct EvalResult {
  double i_auroc = 0.0;
  std::optional<double> p_auroc;
  std::optional<double> p_aupro;
  std::size_t n_images = 0;
  std::size_t n_pixels = 0;
};

struct EvalOptions {
  bool pixel_metrics = true;
  double fpr_limit = 0.3;
};

/// Image-level AUROC over a labeled set; pixel AUROC/AUPRO when masks exist.
EvalResult evaluate(const Model& model, const FrameSource& eval_set, const ScoreOptions& scoring,
                    const EvalOptions& opts = {});

struct FrameRecord {
  std::uint64_t frame_idx = 0;
  double loss = 0.0;
  double train_ms = 0.0;
  double detect_ms = 0.0;
  double image_score = 0.0;
  Label label = Label::unlabeled;
};

struct TimingSummary {
  double tps = 0.0;        // frames per second
  double tpi_ms = 0.0;     // mean time per frame
  double encode_ms = 0.0;  // fuse + coordinates + projection
  double detect_ms = 0.0;  // scoring
  double train_ms = 0.0;   // loss, backward, optimizer, rebalancing
};

struct CurvePoint {
  std::size_t frames_seen = 0;
  double i_auroc = 0.0;
};

struct StreamReport {
  std::vector<FrameRecord> frames;
  TimingSummary timing;
  std::vector<CurvePoint> curve;
  std::optional<EvalResult> final_eval;
  std::uint64_t initial_bank_hash = 0;
  std::uint64_t final_bank_hash = 0;
};

inline constexpr std::size_t kTimingWarmup = 10;

struct StreamOptions {
  EvalOptions eval;
  /// Evaluate only at the end instead of every detect_every frames.
  bool final_only = false;
};

/// Single pass over `source`: every frame is scored and then trained on. Every
/// detect_every frames (and at the end) the current model is evaluated on
/// eval_set. Frame 0 bootstraps the bank under single_image init.
StreamReport run_stream(const EngineConfig& cfg, const FrameSource& source,
                        const FrameSource* eval_set = nullptr, const StreamOptions& opts = {},
                        std::unique_ptr<Engine>* engine_out = nullptr);

/// Raw fused channel count of a frame (sum over scales).
std::size_t raw_channels(const StreamFrame& frame);

}  // namespace lemo
