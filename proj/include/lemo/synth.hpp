#pragma once

#include <cstdint>
#include <functional>

#include "lemo/frame.hpp"

namespace lemo {

/// Mixture-of-Gaussians feature stream with rectangular additive anomalies.
struct SynthConfig {
  std::size_t d_raw = 64;
  std::size_t h = 14;
  std::size_t w = 14;
  std::size_t n_modes = 5;
  double mode_spread = 1.0;
  double noise_sigma = 0.2;
  double anomaly_shift = 0.8;
  std::size_t patch_h = 3;
  std::size_t patch_w = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class DriftKind { brightness, gaussian };

struct DriftSpec {
  DriftKind kind = DriftKind::brightness;
  double magnitude = 0.0;
  std::uint64_t onset_frame = 0;

  void validate() const;
};

/// Held-out frames use indices from this base so they never collide with the
/// training stream.
inline constexpr std::uint64_t kTestFrameBase = std::uint64_t{1} << 32;

/// Mode centers are a pure function of (seed, n_modes, d_raw, mode_spread).
Matrix synth_mode_centers(const SynthConfig& cfg);

StreamFrame synth_frame(const SynthConfig& cfg, std::uint64_t frame_idx, bool anomalous);

StreamFrame apply_drift(StreamFrame frame, const DriftSpec& spec, std::uint64_t frame_idx);

/// n training frames (all normal), indices 0..n-1, optional drift.
class SynthStream final : public FrameSource {
 public:
  SynthStream(SynthConfig cfg, std::size_t n, std::optional<DriftSpec> drift = {});
  std::size_t size() const override { return n_; }
  StreamFrame get(std::size_t i) const override;

 private:
  SynthConfig cfg_;
  std::size_t n_;
  std::optional<DriftSpec> drift_;
};

/// Labeled held-out set: the first round(n * anomaly_fraction) frames are
/// anomalous, the rest normal. Drift, if given, applies to every frame.
class SynthTestSet final : public FrameSource {
 public:
  SynthTestSet(SynthConfig cfg, std::size_t n, double anomaly_fraction = 0.5,
               std::optional<DriftSpec> drift = {});
  std::size_t size() const override { return n_; }
  StreamFrame get(std::size_t i) const override;

 private:
  SynthConfig cfg_;
  std::size_t n_;
  std::size_t n_anomalous_;
  std::optional<DriftSpec> drift_;
};

/// Wraps any source with drift. With ignore_onset every frame is drifted
/// (held-out sets); otherwise the drift onset applies to frame_idx.
class DriftedSource final : public FrameSource {
 public:
  DriftedSource(const FrameSource& base, DriftSpec spec, bool ignore_onset);
  std::size_t size() const override { return base_.size(); }
  StreamFrame get(std::size_t i) const override;

 private:
  const FrameSource& base_;
  DriftSpec spec_;
  bool ignore_onset_;
};

}  // namespace lemo
