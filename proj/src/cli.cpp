#include "lemo/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "lemo/evaluator.hpp"
#include "lemo/sources.hpp"

namespace lemo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads the members of one JSON object and rejects any key nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void get(const char* key, double& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "a number");
    out = v.get<double>();
  }

  static_assert(std::is_same_v<std::size_t, std::uint64_t>);
  void get(const char* key, std::size_t& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!ok) fail(key, "a non-negative integer");
    out = v.get<std::size_t>();
  }

  void get(const char* key, bool& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "true or false");
    out = v.get<bool>();
  }

  void get(const char* key, std::string& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "a string");
    out = v.get<std::string>();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  bool take(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError(where_ + "." + key + " must be " + what);
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ImageAggregation parse_aggregation(const std::string& s) {
  if (s == "max") return ImageAggregation::max;
  if (s == "top_q_mean") return ImageAggregation::top_q_mean;
  throw ConfigError("unknown scoring.aggregation '" + s + "'");
}

std::string to_string(ImageAggregation a) {
  return a == ImageAggregation::max ? "max" : "top_q_mean";
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct Prepared {
  RunConfig cfg;
  json resolved;
  fs::path out_dir;
};

Prepared prepare(const CommandOptions& opts) {
  json doc = read_config_file(opts.config);
  for (const auto& o : opts.overrides) apply_override(doc, o);
  Prepared p;
  p.cfg = parse_run_config(doc, opts.config.parent_path());
  p.resolved = to_json(p.cfg);
  p.out_dir = opts.out ? *opts.out : (p.cfg.out ? *p.cfg.out : default_out_dir());
  std::error_code ec;
  fs::create_directories(p.out_dir, ec);
  if (ec || !fs::is_directory(p.out_dir)) {
    throw ConfigError("cannot create output directory " + p.out_dir.string());
  }
  return p;
}

std::ostream& log_of(const CommandOptions& opts) { return opts.log ? *opts.log : std::cout; }

template <class F>
int guarded(const char* name, F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << name << ": config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << name << ": config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << '\n';
    return kExitRuntime;
  }
}

json curve_json(const std::vector<CurvePoint>& curve) {
  json arr = json::array();
  for (const auto& c : curve) arr.push_back({{"frames_seen", c.frames_seen}, {"i_auroc", c.i_auroc}});
  return arr;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "frame_idx,i_auroc\n" << std::setprecision(17);
  for (const auto& c : curve) out << c.frames_seen << ',' << c.i_auroc << '\n';
  return out.str();
}

void write_bank(const fs::path& dir, const Engine& engine) {
  const Model& m = engine.model();
  write_tensor(dir / "bank.lemo", m.bank.protos);
  write_tensor(dir / "adapter_weight.lemo", m.adapter.weight);
  json counts = json::array();
  for (auto c : m.bank.counts) counts.push_back(c);
  write_json(dir / "bank.json", {{"k", m.bank.k()},
                                 {"dim", m.bank.dim()},
                                 {"counts", counts},
                                 {"step_count", m.bank.step_count()},
                                 {"adapter_step_count", m.adapter.step_count()},
                                 {"initial_hash", hex64(engine.initial_bank_hash())},
                                 {"hash", hex64(bank_hash(m.bank))}});
}

void save_maps(const fs::path& dir, const Model& model, const FrameSource& test,
               const ScoreOptions& scoring) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const StreamFrame f = test.get(i);
    const ScoreMap sm = detect(model, f, scoring);
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << i << ".lemo";
    write_tensor(dir / name.str(), sm.upsampled ? *sm.upsampled : sm.a);
  }
}

}  // namespace

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

fs::path default_out_dir() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return fs::path("runs") / name.str();
}

json read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) {
      throw ConfigError("override '" + key + "': '" + part + "' is not an object");
    }
    node = &next;
    start = dot + 1;
  }
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig cfg;
  Fields top(doc, "config");
  EngineConfig& e = cfg.engine;

  top.get("seed", cfg.seed);
  std::string init = to_string(e.init), update = to_string(e.update);
  top.get("init", init);
  top.get("update", update);
  e.init = parse_init(init);
  e.update = parse_update(update);
  top.get("k", e.k);
  top.get("d_out", e.d_out);
  top.get("min_frac", e.min_frac);
  top.get("detect_every", e.detect_every);
  top.get("rebalance_every", e.rebalance_every);

  if (top.has("loss")) {
    Fields f(top.raw("loss"), "loss");
    f.get("tau", e.loss.tau);
    f.get("r", e.loss.r);
    f.get("n_pos", e.loss.n_pos);
    f.finish();
  }
  if (top.has("adam")) {
    Fields f(top.raw("adam"), "adam");
    f.get("lr", e.adam.lr);
    f.get("beta1", e.adam.beta1);
    f.get("beta2", e.adam.beta2);
    f.get("eps", e.adam.eps);
    f.get("weight_decay", e.adam.weight_decay);
    f.finish();
  }
  if (top.has("scoring")) {
    Fields f(top.raw("scoring"), "scoring");
    std::string agg = to_string(e.scoring.aggregation);
    f.get("aggregation", agg);
    e.scoring.aggregation = parse_aggregation(agg);
    f.get("top_q", e.scoring.top_q);
    f.get("smoothing_sigma", e.scoring.smoothing_sigma);
    f.finish();
  }
  if (top.has("synth")) {
    SynthConfig s;
    Fields f(top.raw("synth"), "synth");
    f.get("d_raw", s.d_raw);
    f.get("h", s.h);
    f.get("w", s.w);
    f.get("n_modes", s.n_modes);
    f.get("mode_spread", s.mode_spread);
    f.get("noise_sigma", s.noise_sigma);
    f.get("anomaly_shift", s.anomaly_shift);
    f.get("patch_h", s.patch_h);
    f.get("patch_w", s.patch_w);
    f.get("train_frames", cfg.train_frames);
    f.get("test_frames", cfg.test_frames);
    f.get("anomaly_fraction", cfg.anomaly_fraction);
    f.finish();
    s.seed = cfg.seed;
    s.validate();
    if (!(cfg.anomaly_fraction >= 0.0 && cfg.anomaly_fraction <= 1.0)) {
      throw ConfigError("synth.anomaly_fraction must lie in [0, 1]");
    }
    cfg.synth = s;
  }
  if (top.has("manifest")) {
    std::string m;
    top.get("manifest", m);
    fs::path p(m);
    cfg.manifest = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  top.get("require_pixel_masks", cfg.require_pixel_masks);
  if (top.has("eval")) {
    Fields f(top.raw("eval"), "eval");
    f.get("pixel_metrics", cfg.eval.pixel_metrics);
    f.get("fpr_limit", cfg.eval.fpr_limit);
    f.get("final_only", cfg.final_only);
    f.get("save_maps", cfg.save_maps);
    f.finish();
    if (!(cfg.eval.fpr_limit > 0.0 && cfg.eval.fpr_limit <= 1.0)) {
      throw ConfigError("eval.fpr_limit must lie in (0, 1]");
    }
  }
  if (top.has("out")) {
    std::string o;
    top.get("out", o);
    cfg.out = fs::path(o);
  }
  top.finish();

  if (cfg.synth.has_value() == cfg.manifest.has_value()) {
    throw ConfigError("config needs exactly one source: 'synth' or 'manifest'");
  }
  e.seed = cfg.seed;
  e.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const EngineConfig& e = cfg.engine;
  json j = {
      {"seed", cfg.seed},
      {"init", to_string(e.init)},
      {"update", to_string(e.update)},
      {"k", e.k},
      {"d_out", e.d_out},
      {"min_frac", e.min_frac},
      {"detect_every", e.detect_every},
      {"rebalance_every", e.rebalance_every},
      {"loss", {{"tau", e.loss.tau}, {"r", e.loss.r}, {"n_pos", e.loss.n_pos}}},
      {"adam",
       {{"lr", e.adam.lr},
        {"beta1", e.adam.beta1},
        {"beta2", e.adam.beta2},
        {"eps", e.adam.eps},
        {"weight_decay", e.adam.weight_decay}}},
      {"scoring",
       {{"aggregation", to_string(e.scoring.aggregation)},
        {"top_q", e.scoring.top_q},
        {"smoothing_sigma", e.scoring.smoothing_sigma}}},
      {"require_pixel_masks", cfg.require_pixel_masks},
      {"eval",
       {{"pixel_metrics", cfg.eval.pixel_metrics},
        {"fpr_limit", cfg.eval.fpr_limit},
        {"final_only", cfg.final_only},
        {"save_maps", cfg.save_maps}}},
  };
  if (cfg.synth) {
    const SynthConfig& s = *cfg.synth;
    j["synth"] = {{"d_raw", s.d_raw},
                  {"h", s.h},
                  {"w", s.w},
                  {"n_modes", s.n_modes},
                  {"mode_spread", s.mode_spread},
                  {"noise_sigma", s.noise_sigma},
                  {"anomaly_shift", s.anomaly_shift},
                  {"patch_h", s.patch_h},
                  {"patch_w", s.patch_w},
                  {"train_frames", cfg.train_frames},
                  {"test_frames", cfg.test_frames},
                  {"anomaly_fraction", cfg.anomaly_fraction}};
  }
  if (cfg.manifest) j["manifest"] = cfg.manifest->string();
  if (cfg.out) j["out"] = cfg.out->string();
  return j;
}

Sources make_sources(const RunConfig& cfg, bool require_test) {
  Sources s;
  if (cfg.synth) {
    if (cfg.train_frames == 0) throw ConfigError("synth.train_frames must be >= 1");
    s.train = std::make_unique<SynthStream>(*cfg.synth, cfg.train_frames);
    if (cfg.test_frames > 0) {
      s.test = std::make_unique<SynthTestSet>(*cfg.synth, cfg.test_frames, cfg.anomaly_fraction);
    }
  } else {
    Manifest m = load_manifest(*cfg.manifest, {.require_pixel_masks = cfg.require_pixel_masks});
    if (m.count(Split::train_stream) == 0) {
      throw ConfigError("manifest " + cfg.manifest->string() + " has no train-stream records");
    }
    s.train = std::make_unique<ManifestSource>(m, Split::train_stream);
    if (m.count(Split::test) > 0) s.test = std::make_unique<ManifestSource>(m, Split::test);
  }
  if (require_test && !s.test) throw ConfigError("this command needs a held-out test split");
  return s;
}

json to_json(const EvalResult& r) {
  json j = {{"i_auroc", r.i_auroc}, {"n_images", r.n_images}, {"n_pixels", r.n_pixels}};
  j["p_auroc"] = r.p_auroc ? json(*r.p_auroc) : json(nullptr);
  j["p_aupro"] = r.p_aupro ? json(*r.p_aupro) : json(nullptr);
  return j;
}

json to_json(const TimingSummary& t) {
  return {{"tps", t.tps},
          {"tpi_ms", t.tpi_ms},
          {"encode_ms", t.encode_ms},
          {"detect_ms", t.detect_ms},
          {"train_ms", t.train_ms}};
}

int cmd_run(const CommandOptions& opts) {
  return guarded("run", [&] {
    Prepared p = prepare(opts);
    Sources src = make_sources(p.cfg, false);
    const auto t0 = std::chrono::steady_clock::now();
    std::unique_ptr<Engine> engine;
    const StreamReport r =
        run_stream(p.cfg.engine, *src.train, src.test.get(),
                   {.eval = p.cfg.eval, .final_only = p.cfg.final_only}, &engine);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json frames = json::array();
    double loss_sum = 0.0;
    for (const auto& f : r.frames) {
      frames.push_back({{"frame_idx", f.frame_idx},
                        {"loss", f.loss},
                        {"image_score", f.image_score},
                        {"label", to_string(f.label)}});
      loss_sum += f.loss;
    }
    json report = {
        {"command", "run"},
        {"config", p.resolved},
        {"frames_processed", r.frames.size()},
        {"mean_loss", r.frames.empty() ? 0.0 : loss_sum / double(r.frames.size())},
        {"final_loss", r.frames.empty() ? 0.0 : r.frames.back().loss},
        {"metrics", r.final_eval ? to_json(*r.final_eval) : json(nullptr)},
        {"curve", curve_json(r.curve)},
        {"bank",
         {{"initial_hash", hex64(r.initial_bank_hash)}, {"final_hash", hex64(r.final_bank_hash)}}},
        {"frames", frames},
    };
    json timing = to_json(r.timing);
    timing["wall_s"] = wall;
    report["timing"] = timing;

    write_json(p.out_dir / "report.json", report);
    write_text(p.out_dir / "curve.csv", curve_csv(r.curve));
    write_bank(p.out_dir, *engine);
    if (p.cfg.save_maps && src.test) {
      save_maps(p.out_dir / "maps", engine->model(), *src.test, p.cfg.engine.scoring);
    }

    auto& log = log_of(opts);
    log << "frames " << r.frames.size() << "  tps " << std::fixed << std::setprecision(2)
        << r.timing.tps << '\n';
    if (r.final_eval) log << eval_table({{"final", *r.final_eval}});
    log << "wrote " << p.out_dir.string() << '\n';
  });
}

int cmd_ablate(const CommandOptions& opts) {
  return guarded("ablate", [&] {
    Prepared p = prepare(opts);
    Sources src = make_sources(p.cfg, true);
    const AblationGrid grid =
        run_ablation_grid(p.cfg.engine, *src.train, *src.test, {.eval = p.cfg.eval});
    json cells = json::array();
    for (const auto& c : grid.cells) {
      cells.push_back({{"init", to_string(c.init)},
                       {"update", to_string(c.update)},
                       {"metrics", to_json(c.eval)},
                       {"initial_bank_hash", hex64(c.initial_bank_hash)},
                       {"final_bank_hash", hex64(c.final_bank_hash)}});
    }
    write_json(p.out_dir / "ablation.json",
               {{"command", "ablate"}, {"config", p.resolved}, {"cells", cells}});
    write_text(p.out_dir / "ablation.csv", ablation_csv(grid));
    const std::string table = ablation_table(grid);
    write_text(p.out_dir / "ablation.txt", table);
    log_of(opts) << table << "wrote " << p.out_dir.string() << '\n';
  });
}

int cmd_drift(const CommandOptions& opts, const DriftArgs& args) {
  return guarded("drift", [&] {
    Prepared p = prepare(opts);
    Sources src = make_sources(p.cfg, true);
    DriftSpec spec;
    spec.kind = parse_drift_kind(args.kind);
    spec.magnitude = args.magnitude;
    spec.onset_frame = args.onset ? *args.onset : src.train->size() / 2;
    spec.validate();
    const DriftMode mode = parse_drift_mode(args.mode);
    const DriftResult r =
        run_drift_experiment(p.cfg.engine, *src.train, *src.test, spec, mode, p.cfg.eval);
    write_json(p.out_dir / "drift.json",
               {{"command", "drift"},
                {"config", p.resolved},
                {"mode", to_string(mode)},
                {"kind", to_string(spec.kind)},
                {"magnitude", spec.magnitude},
                {"onset_frame", spec.onset_frame},
                {"clean", to_json(r.clean)},
                {"drifted", to_json(r.drifted)},
                {"delta_i_auroc", r.drifted.i_auroc - r.clean.i_auroc}});
    write_text(p.out_dir / "drift.csv", drift_csv({r}));
    const std::string table = drift_table({r});
    write_text(p.out_dir / "drift.txt", table);
    log_of(opts) << table << "wrote " << p.out_dir.string() << '\n';
  });
}

int cmd_bench(const CommandOptions& opts, std::size_t frames, std::size_t reps) {
  return guarded("bench", [&] {
    if (frames == 0) throw ConfigError("--frames must be >= 1");
    if (reps == 0) throw ConfigError("bench needs at least one repetition");
    Prepared p = prepare(opts);
    if (p.cfg.synth) p.cfg.train_frames = frames;
    Sources src = make_sources(p.cfg, false);
    if (src.train->size() < frames) {
      throw ConfigError("bench: source has only " + std::to_string(src.train->size()) +
                        " training frames");
    }

    struct Prefix final : FrameSource {
      const FrameSource& base;
      std::size_t n;
      Prefix(const FrameSource& b, std::size_t k) : base(b), n(k) {}
      std::size_t size() const override { return n; }
      StreamFrame get(std::size_t i) const override { return base.get(i); }
    } stream(*src.train, frames);

    TimingSummary mean;
    json runs = json::array();
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const StreamReport r = run_stream(p.cfg.engine, stream, nullptr, {.eval = {}, .final_only = true});
      runs.push_back(to_json(r.timing));
      mean.tps += r.timing.tps / double(reps);
      mean.tpi_ms += r.timing.tpi_ms / double(reps);
      mean.encode_ms += r.timing.encode_ms / double(reps);
      mean.detect_ms += r.timing.detect_ms / double(reps);
      mean.train_ms += r.timing.train_ms / double(reps);
    }
    write_json(p.out_dir / "bench.json", {{"command", "bench"},
                                          {"config", p.resolved},
                                          {"frames", frames},
                                          {"repetitions", reps},
                                          {"runs", runs},
                                          {"mean", to_json(mean)}});
    const std::string table = timing_table("lemo", mean);
    write_text(p.out_dir / "bench.txt", table);
    log_of(opts) << table << "wrote " << p.out_dir.string() << '\n';
  });
}

}  // namespace lemo
