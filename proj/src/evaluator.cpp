#include "lemo/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace lemo {

namespace {

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string fmt_delta(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.3f", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

std::string value_delta(const std::optional<double>& value, const std::optional<double>& ref) {
  if (!value) return "n/a";
  if (!ref) return fmt(*value);
  return fmt(*value) + "/" + fmt_delta(*value - *ref);
}

std::string update_label(UpdateKind u) {
  switch (u) {
    case UpdateKind::none: return "w/o";
    case UpdateKind::learning: return "L";
    case UpdateKind::feature_enhanced: return "F";
  }
  return "?";
}

/// Pads every column to its widest cell; the first row is the header.
std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) out << "  ";
      out << rows[i][c];
      if (c + 1 < rows[i].size()) out << std::string(width[c] - rows[i][c].size(), ' ');
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace

const AblationCell& AblationGrid::at(InitKind init, UpdateKind update) const {
  for (const auto& c : cells) {
    if (c.init == init && c.update == update) return c;
  }
  throw ConfigError("ablation grid has no cell " + to_string(init) + "/" + to_string(update));
}

AblationGrid run_ablation_grid(const EngineConfig& base, const FrameSource& train,
                               const FrameSource& test, const StreamOptions& opts) {
  if (test.size() == 0) throw ConfigError("ablation: held-out set is empty");
  AblationGrid grid;
  for (InitKind init : kAllInits) {
    for (UpdateKind update : kAllUpdates) {
      EngineConfig cfg = base;
      cfg.init = init;
      cfg.update = update;
      StreamOptions o = opts;
      o.final_only = true;
      const StreamReport r = run_stream(cfg, train, &test, o);
      grid.cells.push_back({init, update, *r.final_eval, r.initial_bank_hash, r.final_bank_hash});
    }
  }
  return grid;
}

std::string to_string(DriftMode m) { return m == DriftMode::offline ? "offline" : "online"; }

DriftMode parse_drift_mode(const std::string& s) {
  if (s == "offline") return DriftMode::offline;
  if (s == "online") return DriftMode::online;
  throw ConfigError("unknown drift mode '" + s + "'");
}

std::string to_string(DriftKind k) { return k == DriftKind::brightness ? "brightness" : "gaussian"; }

DriftKind parse_drift_kind(const std::string& s) {
  if (s == "brightness") return DriftKind::brightness;
  if (s == "gaussian") return DriftKind::gaussian;
  throw ConfigError("unknown drift kind '" + s + "'");
}

DriftResult run_drift_experiment(const EngineConfig& cfg, const FrameSource& train,
                                 const FrameSource& test, const DriftSpec& drift, DriftMode mode,
                                 const EvalOptions& eval) {
  drift.validate();
  if (test.size() == 0) throw ConfigError("drift: held-out set is empty");
  DriftResult res;
  res.mode = mode;
  res.drift = drift;
  const DriftedSource drifted_test(test, drift, true);

  std::unique_ptr<Engine> clean_engine;
  run_stream(cfg, train, nullptr, {.eval = eval, .final_only = true}, &clean_engine);
  res.clean = evaluate(clean_engine->model(), test, cfg.scoring, eval);
  if (mode == DriftMode::offline) {
    res.drifted = evaluate(clean_engine->model(), drifted_test, cfg.scoring, eval);
    return res;
  }
  clean_engine.reset();
  const DriftedSource drifted_train(train, drift, false);
  std::unique_ptr<Engine> online;
  run_stream(cfg, drifted_train, nullptr, {.eval = eval, .final_only = true}, &online);
  res.drifted = evaluate(online->model(), drifted_test, cfg.scoring, eval);
  return res;
}

std::string ablation_csv(const AblationGrid& grid) {
  std::ostringstream out;
  out << "init";
  for (UpdateKind u : kAllUpdates) out << ',' << to_string(u);
  out << '\n';
  for (InitKind i : kAllInits) {
    out << to_string(i);
    for (UpdateKind u : kAllUpdates) out << ',' << fmt(grid.at(i, u).eval.i_auroc, 6);
    out << '\n';
  }
  return out.str();
}

std::string ablation_table(const AblationGrid& grid) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"init \\ update"};
  for (UpdateKind u : kAllUpdates) header.push_back(update_label(u));
  rows.push_back(header);
  for (InitKind i : kAllInits) {
    std::vector<std::string> r = {to_string(i)};
    for (UpdateKind u : kAllUpdates) r.push_back(fmt(grid.at(i, u).eval.i_auroc));
    rows.push_back(r);
  }
  return align(rows);
}

std::string drift_csv(const std::vector<DriftResult>& rows) {
  std::ostringstream out;
  out << "mode,kind,magnitude,onset_frame,clean_i_auroc,drifted_i_auroc,delta_i_auroc,"
         "clean_p_auroc,drifted_p_auroc,clean_p_aupro,drifted_p_aupro\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v, 6) : std::string(); };
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << to_string(r.drift.kind) << ',' << fmt(r.drift.magnitude, 6)
        << ',' << r.drift.onset_frame << ',' << fmt(r.clean.i_auroc, 6) << ','
        << fmt(r.drifted.i_auroc, 6) << ',' << fmt(r.drifted.i_auroc - r.clean.i_auroc, 6) << ','
        << cell(r.clean.p_auroc) << ',' << cell(r.drifted.p_auroc) << ','
        << cell(r.clean.p_aupro) << ',' << cell(r.drifted.p_aupro) << '\n';
  }
  return out.str();
}

std::string drift_table(const std::vector<DriftResult>& rows) {
  std::vector<std::vector<std::string>> t = {{"setting", "I-AUROC", "P-AUROC", "P-AUPRO"}};
  if (!rows.empty()) {
    const auto& c = rows.front().clean;
    t.push_back({"no drift", fmt(c.i_auroc), opt(c.p_auroc), opt(c.p_aupro)});
  }
  for (const auto& r : rows) {
    const std::string name = to_string(r.drift.kind) + " " + fmt(r.drift.magnitude) + " (" +
                             to_string(r.mode) + ")";
    t.push_back({name, value_delta(r.drifted.i_auroc, r.clean.i_auroc),
                 value_delta(r.drifted.p_auroc, r.clean.p_auroc),
                 value_delta(r.drifted.p_aupro, r.clean.p_aupro)});
  }
  return align(t);
}

std::string eval_table(const std::vector<NamedEval>& rows) {
  std::vector<std::vector<std::string>> t = {{"run", "I-AUROC", "P-AUROC", "P-AUPRO"}};
  for (const auto& r : rows) {
    t.push_back({r.name, fmt(r.eval.i_auroc), opt(r.eval.p_auroc), opt(r.eval.p_aupro)});
  }
  return align(t);
}

std::string timing_table(const std::string& name, const TimingSummary& s) {
  return align({{"method", "TPS [img/s]", "TPI [ms/img]", "Encoder [ms]", "Detection [ms]"},
                {name, fmt(s.tps, 2), fmt(s.tpi_ms), fmt(s.encode_ms), fmt(s.detect_ms)}});
}

}  // namespace lemo
