#include "lemo/engine.hpp"

#include <chrono>

#include "lemo/metrics.hpp"
#include "lemo/rng.hpp"

namespace lemo {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t fnv(std::uint64_t h, std::span<const float> v) {
  const auto* b = reinterpret_cast<const unsigned char*>(v.data());
  for (std::size_t i = 0; i < v.size() * sizeof(float); ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(InitKind k) {
  switch (k) {
    case InitKind::single_image: return "single_image";
    case InitKind::noise: return "noise";
    case InitKind::decoupled_noise: return "decoupled_noise";
  }
  return "decoupled_noise";
}

std::string to_string(UpdateKind k) {
  switch (k) {
    case UpdateKind::none: return "none";
    case UpdateKind::learning: return "learning";
    case UpdateKind::feature_enhanced: return "feature_enhanced";
  }
  return "learning";
}

InitKind parse_init(const std::string& s) {
  if (s == "single_image") return InitKind::single_image;
  if (s == "noise") return InitKind::noise;
  if (s == "decoupled_noise") return InitKind::decoupled_noise;
  throw ConfigError("unknown init strategy '" + s + "'");
}

UpdateKind parse_update(const std::string& s) {
  if (s == "none") return UpdateKind::none;
  if (s == "learning") return UpdateKind::learning;
  if (s == "feature_enhanced") return UpdateKind::feature_enhanced;
  throw ConfigError("unknown update strategy '" + s + "'");
}

void EngineConfig::validate() const {
  loss.validate();
  adam.validate();
  if (k < 2) throw ConfigError("engine: k must be >= 2");
  if (loss.n_pos >= k) throw ConfigError("engine: loss.n_pos must be < k");
  if (!(min_frac > 0.0 && min_frac < 1.0)) throw ConfigError("engine: min_frac must lie in (0, 1)");
  if (detect_every < 1) throw ConfigError("engine: detect_every must be >= 1");
  if (rebalance_every < 1) throw ConfigError("engine: rebalance_every must be >= 1");
  if (scoring.smoothing_sigma < 0.0) throw ConfigError("engine: smoothing sigma must be >= 0");
}

std::size_t raw_channels(const StreamFrame& frame) {
  std::size_t d = 0;
  for (const auto& s : frame.scales) d += s.d;
  return d;
}

Tensor3 encode(const Model& model, const StreamFrame& frame) {
  return project_forward(add_coords(fuse_scales(frame.scales)), model.adapter);
}

ScoreMap detect(const Model& model, const StreamFrame& frame, const ScoreOptions& opts) {
  ScoreMap map = anomaly_map(encode(model, frame), model.bank, opts);
  if (frame.mask && (frame.mask->rows != map.a.rows || frame.mask->cols != map.a.cols)) {
    map.upsampled = upsample_scores(map.a, frame.mask->rows, frame.mask->cols);
  }
  return map;
}

Engine::Engine(const EngineConfig& cfg, std::size_t raw, const StreamFrame* first_frame)
    : cfg_(cfg) {
  cfg_.validate();
  if (raw == 0) throw EmptyShapeError("engine: frames have no channels");
  const std::size_t d_in = raw + 2;
  const std::size_t d_out = cfg_.d_out == 0 ? d_in : cfg_.d_out;
  model_.adapter = init_adapter(d_in, d_out, split_seed(cfg_.seed, "adapter"));
  const std::uint64_t bank_seed = split_seed(cfg_.seed, "bank");
  switch (cfg_.init) {
    case InitKind::decoupled_noise:
      model_.bank = init_decoupled_noise(cfg_.k, d_out, bank_seed);
      break;
    case InitKind::noise:
      model_.bank = init_random_noise(cfg_.k, d_out, bank_seed);
      break;
    case InitKind::single_image:
      if (!first_frame) throw ConfigError("engine: single_image init needs a first frame");
      if (first_frame->label == Label::anomalous) {
        throw ConfigError("engine: single_image init frame must be normal");
      }
      if (raw_channels(*first_frame) != raw) {
        throw DimensionError("engine: first frame channel count differs from raw_channels");
      }
      model_.bank = init_single_image(encode(model_, *first_frame), cfg_.k, bank_seed);
      break;
  }
  initial_bank_hash_ = bank_hash(model_.bank);
}

StepMetrics Engine::round(const StreamFrame& frame, bool score) {
  StepMetrics m;
  auto t0 = Clock::now();
  const Tensor3 x = add_coords(fuse_scales(frame.scales));
  const Tensor3 z = project_forward(x, model_.adapter);
  m.encode_ms = ms_since(t0);

  if (score) {
    t0 = Clock::now();
    m.image_score = anomaly_map(z, model_.bank, cfg_.scoring).image_score;
    m.detect_ms = ms_since(t0);
  }

  t0 = Clock::now();
  LossResult lr;
  try {
    lr = anonce_loss(z, model_.bank, cfg_.loss);
  } catch (const NumericalError& e) {
    throw NumericalError("frame " + std::to_string(frame.frame_idx) + ": " + e.what());
  }
  m.loss = lr.loss;
  const AdapterGrad g = project_backward(x, lr.grad_z, model_.adapter);
  adam_step(model_.adapter.weight.data, g.weight.data, model_.adapter.weight_opt, cfg_.adam);
  AdamHyper no_decay = cfg_.adam;
  no_decay.weight_decay = 0.0;
  adam_step(model_.adapter.bias, g.bias, model_.adapter.bias_opt, no_decay);
  if (cfg_.update != UpdateKind::none) {
    adam_step(model_.bank.protos.data, lr.grad_p.data, model_.bank.opt, no_decay);
  }
  ++steps_;
  if (cfg_.update == UpdateKind::feature_enhanced && steps_ % cfg_.rebalance_every == 0) {
    const Tensor3 z_new = project_forward(x, model_.adapter);
    model_.bank = feature_enhanced_update(model_.bank, z_new, cfg_.min_frac,
                                          split_seed(cfg_.seed, "rebalance", steps_));
  }
  m.train_ms = ms_since(t0);
  return m;
}

StepMetrics Engine::train_step(const StreamFrame& frame) { return round(frame, false); }

StepMetrics Engine::process(const StreamFrame& frame) { return round(frame, true); }

ScoreMap Engine::detect(const StreamFrame& frame) const {
  return lemo::detect(model_, frame, cfg_.scoring);
}

std::shared_ptr<const Model> Engine::publish() {
  auto snap = std::make_shared<const Model>(model_);
  std::lock_guard lock(snapshot_mu_);
  snapshot_ = snap;
  return snap;
}

std::shared_ptr<const Model> Engine::latest() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

std::size_t Engine::state_bytes() const {
  return model_.adapter.bytes() + model_.bank.bytes();
}

std::uint64_t Engine::state_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv(h, model_.adapter.weight.data);
  h = fnv(h, model_.adapter.bias);
  h = fnv(h, model_.adapter.weight_opt.m);
  h = fnv(h, model_.adapter.weight_opt.v);
  h = fnv(h, model_.adapter.bias_opt.m);
  h = fnv(h, model_.adapter.bias_opt.v);
  h = fnv(h, model_.bank.protos.data);
  h = fnv(h, model_.bank.opt.m);
  h = fnv(h, model_.bank.opt.v);
  for (auto c : model_.bank.counts) h = mix64(h ^ c);
  return mix64(h ^ steps_);
}

EvalResult evaluate(const Model& model, const FrameSource& eval_set, const ScoreOptions& scoring,
                    const EvalOptions& opts) {
  EvalResult res;
  std::vector<double> image_scores;
  std::vector<std::uint8_t> image_labels;
  std::vector<Matrix> maps, masks;
  bool pixel_ok = opts.pixel_metrics;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const StreamFrame f = eval_set.get(i);
    if (f.label == Label::unlabeled) continue;
    ScoreMap sm = detect(model, f, scoring);
    image_scores.push_back(sm.image_score);
    image_labels.push_back(f.label == Label::anomalous ? 1 : 0);
    if (!pixel_ok) continue;
    Matrix map = sm.upsampled ? std::move(*sm.upsampled) : std::move(sm.a);
    if (f.mask) {
      masks.push_back(*f.mask);
    } else if (f.label == Label::normal) {
      masks.emplace_back(map.rows, map.cols, 0.0f);
    } else {
      pixel_ok = false;
      continue;
    }
    maps.push_back(std::move(map));
  }
  res.n_images = image_scores.size();
  res.i_auroc = auroc(image_scores, image_labels);

  if (pixel_ok) {
    std::vector<double> px;
    std::vector<std::uint8_t> px_labels;
    for (std::size_t m = 0; m < maps.size(); ++m) {
      for (std::size_t p = 0; p < maps[m].data.size(); ++p) {
        px.push_back(maps[m].data[p]);
        px_labels.push_back(masks[m].data[p] > 0.5f ? 1 : 0);
      }
    }
    res.n_pixels = px.size();
    try {
      res.p_auroc = auroc(px, px_labels);
      res.p_aupro = aupro(maps, masks, {.fpr_limit = opts.fpr_limit});
    } catch (const UndefinedMetricError&) {
      res.p_auroc.reset();
      res.p_aupro.reset();
    }
  }
  return res;
}

StreamReport run_stream(const EngineConfig& cfg, const FrameSource& source,
                        const FrameSource* eval_set, const StreamOptions& opts,
                        std::unique_ptr<Engine>* engine_out) {
  if (source.size() == 0) throw ConfigError("run_stream: empty source");
  StreamReport report;

  std::size_t start = 0;
  std::unique_ptr<Engine> engine;
  {
    StreamFrame first = source.get(0);
    if (cfg.init == InitKind::single_image) {
      engine = std::make_unique<Engine>(cfg, raw_channels(first), &first);
      start = 1;
    } else {
      engine = std::make_unique<Engine>(cfg, raw_channels(first));
    }
  }
  report.initial_bank_hash = engine->initial_bank_hash();

  auto checkpoint = [&](std::size_t seen) {
    if (!eval_set || eval_set->size() == 0) return;
    report.curve.push_back({seen, evaluate(engine->model(), *eval_set, cfg.scoring,
                                           {.pixel_metrics = false})
                                      .i_auroc});
  };

  double enc = 0.0, det = 0.0, trn = 0.0;
  std::size_t timed = 0;
  const std::size_t n = source.size();
  for (std::size_t i = start; i < n; ++i) {
    const StreamFrame f = source.get(i);
    const StepMetrics m = engine->process(f);
    report.frames.push_back({f.frame_idx, m.loss, m.encode_ms + m.train_ms, m.detect_ms,
                             m.image_score, f.label});
    const std::size_t processed = i - start + 1;
    if (processed > kTimingWarmup || n - start <= kTimingWarmup) {
      enc += m.encode_ms;
      det += m.detect_ms;
      trn += m.train_ms;
      ++timed;
    }
    const std::size_t seen = i + 1;
    if (!opts.final_only && seen % cfg.detect_every == 0) checkpoint(seen);
  }
  if (report.curve.empty() || report.curve.back().frames_seen != n) checkpoint(n);

  if (timed > 0) {
    const double t = static_cast<double>(timed);
    report.timing.encode_ms = enc / t;
    report.timing.detect_ms = det / t;
    report.timing.train_ms = trn / t;
    report.timing.tpi_ms = (enc + det + trn) / t;
    report.timing.tps = report.timing.tpi_ms > 0.0 ? 1000.0 / report.timing.tpi_ms : 0.0;
  }
  if (eval_set && eval_set->size() > 0) {
    report.final_eval = evaluate(engine->model(), *eval_set, cfg.scoring, opts.eval);
  }
  report.final_bank_hash = bank_hash(engine->model().bank);
  if (engine_out) *engine_out = std::move(engine);
  return report;
}

}  // namespace lemo
