#include "lemo/synth.hpp"

#include <cmath>
#include <string>

#include "lemo/rng.hpp"

namespace lemo {

void SynthConfig::validate() const {
  if (d_raw == 0 || h == 0 || w == 0) throw ConfigError("synth: empty feature shape");
  if (n_modes < 1) throw ConfigError("synth: n_modes must be >= 1");
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synth: noise_sigma must be > 0");
  }
  if (!std::isfinite(mode_spread) || mode_spread < 0.0) {
    throw ConfigError("synth: mode_spread must be finite and >= 0");
  }
  if (!std::isfinite(anomaly_shift)) throw ConfigError("synth: anomaly_shift must be finite");
  if (patch_h == 0 || patch_w == 0 || patch_h > h || patch_w > w) {
    throw ConfigError("synth: anomaly patch must fit inside the " + std::to_string(h) +
                      "x" + std::to_string(w) + " grid");
  }
}

void DriftSpec::validate() const {
  if (!std::isfinite(magnitude)) throw ConfigError("drift: magnitude must be finite");
}

Matrix synth_mode_centers(const SynthConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "synth.modes");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centers(cfg.n_modes, cfg.d_raw);
  for (auto& v : centers.data) v = static_cast<float>(cfg.mode_spread * normal(rng));
  return centers;
}

StreamFrame synth_frame(const SynthConfig& cfg, std::uint64_t frame_idx, bool anomalous) {
  cfg.validate();
  const Matrix centers = synth_mode_centers(cfg);
  Rng rng = make_rng(cfg.seed, "synth.frame", frame_idx);
  std::normal_distribution<double> normal(0.0, cfg.noise_sigma);
  std::uniform_int_distribution<std::size_t> pick_mode(0, cfg.n_modes - 1);

  Tensor3 t(cfg.d_raw, cfg.h, cfg.w);
  for (std::size_t i = 0; i < cfg.h; ++i) {
    for (std::size_t j = 0; j < cfg.w; ++j) {
      const auto mode = centers.row(pick_mode(rng));
      for (std::size_t c = 0; c < cfg.d_raw; ++c) {
        t.at(c, i, j) = static_cast<float>(mode[c] + normal(rng));
      }
    }
  }

  StreamFrame f;
  f.frame_idx = frame_idx;
  f.label = anomalous ? Label::anomalous : Label::normal;
  Matrix mask(cfg.h, cfg.w, 0.0f);
  if (anomalous) {
    Rng patch_rng = make_rng(cfg.seed, "synth.patch", frame_idx);
    const std::size_t top =
        std::uniform_int_distribution<std::size_t>(0, cfg.h - cfg.patch_h)(patch_rng);
    const std::size_t left =
        std::uniform_int_distribution<std::size_t>(0, cfg.w - cfg.patch_w)(patch_rng);
    const auto shift = static_cast<float>(cfg.anomaly_shift);
    for (std::size_t i = top; i < top + cfg.patch_h; ++i) {
      for (std::size_t j = left; j < left + cfg.patch_w; ++j) {
        mask(i, j) = 1.0f;
        if (shift == 0.0f) continue;
        for (std::size_t c = 0; c < cfg.d_raw; ++c) t.at(c, i, j) += shift;
      }
    }
  }
  f.mask = std::move(mask);
  f.scales.push_back(std::move(t));
  return f;
}

StreamFrame apply_drift(StreamFrame frame, const DriftSpec& spec, std::uint64_t frame_idx) {
  spec.validate();
  if (frame_idx < spec.onset_frame || spec.magnitude == 0.0) return frame;
  if (spec.kind == DriftKind::brightness) {
    const auto delta = static_cast<float>(spec.magnitude);
    for (auto& s : frame.scales) {
      for (auto& v : s.data) v += delta;
    }
  } else {
    Rng rng = make_rng(0, "drift.gaussian", frame_idx);
    std::normal_distribution<double> normal(0.0, std::abs(spec.magnitude));
    for (auto& s : frame.scales) {
      for (auto& v : s.data) v = static_cast<float>(v + normal(rng));
    }
  }
  return frame;
}

SynthStream::SynthStream(SynthConfig cfg, std::size_t n, std::optional<DriftSpec> drift)
    : cfg_(cfg), n_(n), drift_(drift) {
  cfg_.validate();
}

StreamFrame SynthStream::get(std::size_t i) const {
  auto f = synth_frame(cfg_, i, false);
  if (drift_) f = apply_drift(std::move(f), *drift_, i);
  return f;
}

SynthTestSet::SynthTestSet(SynthConfig cfg, std::size_t n, double anomaly_fraction,
                           std::optional<DriftSpec> drift)
    : cfg_(cfg), n_(n), drift_(drift) {
  cfg_.validate();
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction <= 1.0)) {
    throw ConfigError("synth: anomaly_fraction must be in [0, 1]");
  }
  n_anomalous_ = static_cast<std::size_t>(std::lround(anomaly_fraction * static_cast<double>(n)));
}

StreamFrame SynthTestSet::get(std::size_t i) const {
  const std::uint64_t idx = kTestFrameBase + i;
  auto f = synth_frame(cfg_, idx, i < n_anomalous_);
  if (drift_) f = apply_drift(std::move(f), *drift_, idx);
  return f;
}

DriftedSource::DriftedSource(const FrameSource& base, DriftSpec spec, bool ignore_onset)
    : base_(base), spec_(spec), ignore_onset_(ignore_onset) {
  spec_.validate();
  if (ignore_onset_) spec_.onset_frame = 0;
}

StreamFrame DriftedSource::get(std::size_t i) const {
  StreamFrame f = base_.get(i);
  const std::uint64_t idx = f.frame_idx;
  return apply_drift(std::move(f), spec_, idx);
}

}  // namespace lemo
