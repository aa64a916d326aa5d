#include <doctest.h>

#include <fstream>
#include <sstream>

#include "lemo/cli.hpp"
#include "lemo/feature_io.hpp"
#include "support/tmpdir.hpp"

using namespace lemo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json kSmall = {{"seed", 3},
                     {"k", 6},
                     {"d_out", 24},
                     {"detect_every", 10},
                     {"synth", {{"d_raw", 12}, {"h", 8}, {"w", 8}, {"train_frames", 25}, {"test_frames", 10}}}};

fs::path write_cfg(const test::TempDir& dir, const std::string& name, const json& j) {
  std::ofstream(dir / name) << j.dump(2);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CommandOptions quiet(const fs::path& cfg, const fs::path& out, std::ostringstream& log) {
  CommandOptions o;
  o.config = cfg;
  o.out = out;
  o.log = &log;
  return o;
}

}  // namespace

TEST_CASE("apply_override: dotted paths and typed values") {
  json doc = {{"loss", {{"tau", 0.1}}}};
  apply_override(doc, "loss.tau=0.2");
  apply_override(doc, "init=noise");
  apply_override(doc, "synth.h=7");
  apply_override(doc, "eval.pixel_metrics=false");
  CHECK(doc["loss"]["tau"] == 0.2);
  CHECK(doc["init"] == "noise");
  CHECK(doc["synth"]["h"] == 7);
  CHECK(doc["eval"]["pixel_metrics"] == false);
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "init.x=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "a..b=1"), ConfigError);
}

TEST_CASE("parse_run_config: defaults, strictness and source rules") {
  const RunConfig cfg = parse_run_config(kSmall);
  CHECK(cfg.engine.k == 6);
  CHECK(cfg.engine.seed == 3);
  CHECK(cfg.synth->seed == 3);
  CHECK(cfg.engine.loss.tau == 0.1);
  CHECK(cfg.engine.adam.weight_decay == 5e-4);
  CHECK(parse_run_config(to_json(cfg)).engine.k == 6);
  CHECK(to_json(parse_run_config(to_json(cfg))) == to_json(cfg));

  json j = kSmall;
  j["loss"] = {{"tau", 0.1}, {"temperature", 2}};
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = kSmall;
  j["k"] = -3;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = kSmall;
  j["init"] = "qr";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = kSmall;
  j.erase("synth");
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = kSmall;
  j["manifest"] = "m.json";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = kSmall;
  j["loss"] = {{"n_pos", 6}};
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

TEST_CASE("cmd_run: outputs, overrides and exit codes") {
  test::TempDir dir;
  const auto cfg = write_cfg(dir, "cfg.json", kSmall);
  const std::string before = slurp(cfg);
  std::ostringstream log;
  auto opts = quiet(cfg, dir / "out", log);
  opts.overrides = {"loss.tau=0.2"};
  REQUIRE(cmd_run(opts) == kExitOk);
  CHECK(slurp(cfg) == before);
  for (const char* f : {"report.json", "curve.csv", "bank.lemo", "bank.json"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report["config"]["loss"]["tau"] == 0.2);
  CHECK(report["timing"]["tps"].get<double>() > 0.0);
  CHECK(report["curve"].size() == 3);
  CHECK(slurp(dir / "out" / "curve.csv").rfind("frame_idx,i_auroc\n", 0) == 0);
  const auto bank = read_tensor(dir / "out" / "bank.lemo");
  CHECK(bank.dims == std::vector<std::uint32_t>{6, 24});
  const json bank_meta = json::parse(slurp(dir / "out" / "bank.json"));
  CHECK(bank_meta["counts"].size() == 6);
  CHECK(bank_meta["step_count"] == 25);

  CHECK(cmd_run(quiet(dir / "absent.json", dir / "x", log)) == kExitConfig);
  std::ofstream(dir / "broken.json") << "{";
  CHECK(cmd_run(quiet(dir / "broken.json", dir / "x", log)) == kExitConfig);
  auto bad = quiet(cfg, dir / "y", log);
  bad.overrides = {"loss.tau=-1"};
  CHECK(cmd_run(bad) == kExitConfig);
}

TEST_CASE("cmd_run is reproducible apart from wall-clock fields") {
  test::TempDir dir;
  const auto cfg = write_cfg(dir, "cfg.json", kSmall);
  std::ostringstream log;
  REQUIRE(cmd_run(quiet(cfg, dir / "a", log)) == kExitOk);
  REQUIRE(cmd_run(quiet(cfg, dir / "b", log)) == kExitOk);
  json a = json::parse(slurp(dir / "a" / "report.json"));
  json b = json::parse(slurp(dir / "b" / "report.json"));
  a.erase("timing");
  b.erase("timing");
  CHECK(a == b);
  CHECK(slurp(dir / "a" / "bank.lemo") == slurp(dir / "b" / "bank.lemo"));
  CHECK(slurp(dir / "a" / "curve.csv") == slurp(dir / "b" / "curve.csv"));
}

TEST_CASE("cmd_run over a manifest, with saved score maps") {
  test::TempDir dir;
  json records = json::array();
  for (int i = 0; i < 12; ++i) {
    Tensor3 t(3, 4, 4, 0.1f * float(i % 3));
    if (i >= 8 && i % 2) t.at(0, 1, 1) += 5.0f;
    const std::string name = "f" + std::to_string(i) + ".lemo";
    write_tensor(dir / name, t);
    json r = {{"feature_path", name},
              {"label", i < 8 ? "normal" : (i % 2 ? "anomalous" : "normal")},
              {"split", i < 8 ? "train-stream" : "test"}};
    if (i >= 8 && i % 2) {
      Matrix mask(8, 8, 0.0f);
      mask(2, 2) = mask(2, 3) = mask(3, 2) = mask(3, 3) = 1.0f;
      write_tensor(dir / ("m" + std::to_string(i) + ".lemo"), mask);
      r["mask_path"] = "m" + std::to_string(i) + ".lemo";
    }
    records.push_back(r);
  }
  std::ofstream(dir / "manifest.json") << json{{"orig_hw", {8, 8}}, {"records", records}}.dump();
  const auto cfg = write_cfg(dir, "cfg.json",
                             {{"manifest", "manifest.json"}, {"k", 3}, {"d_out", 8},
                              {"loss", {{"n_pos", 1}}}, {"eval", {{"save_maps", true}}}});
  std::ostringstream log;
  REQUIRE(cmd_run(quiet(cfg, dir / "out", log)) == kExitOk);
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report["frames_processed"] == 8);
  CHECK(report["metrics"]["n_images"] == 4);
  CHECK(read_tensor(dir / "out" / "maps" / "00001.lemo").dims == std::vector<std::uint32_t>{8, 8});

  // A manifest without a test split cannot be ablated.
  json train_only = {{"records", {{{"feature_path", "f0.lemo"}, {"label", "normal"}, {"split", "train-stream"}}}}};
  std::ofstream(dir / "train_only.json") << train_only.dump();
  const auto cfg2 = write_cfg(dir, "cfg2.json", {{"manifest", "train_only.json"}, {"k", 3}, {"d_out", 8}, {"loss", {{"n_pos", 1}}}});
  CHECK(cmd_ablate(quiet(cfg2, dir / "ab", log)) == kExitConfig);
}

TEST_CASE("cmd_ablate writes a reproducible 3x3 table") {
  test::TempDir dir;
  const auto cfg = write_cfg(dir, "cfg.json", kSmall);
  std::ostringstream log;
  REQUIRE(cmd_ablate(quiet(cfg, dir / "a", log)) == kExitOk);
  REQUIRE(cmd_ablate(quiet(cfg, dir / "b", log)) == kExitOk);
  const std::string csv = slurp(dir / "a" / "ablation.csv");
  CHECK(csv == slurp(dir / "b" / "ablation.csv"));
  std::istringstream lines(csv);
  std::string line;
  int rows = 0, cells = 0;
  while (std::getline(lines, line)) {
    if (rows++ == 0) continue;
    cells += static_cast<int>(std::count(line.begin(), line.end(), ','));
  }
  CHECK(cells == 9);
  CHECK(fs::exists(dir / "a" / "ablation.txt"));
}

TEST_CASE("cmd_drift: table output and argument errors") {
  test::TempDir dir;
  const auto cfg = write_cfg(dir, "cfg.json", kSmall);
  std::ostringstream log;
  DriftArgs args;
  args.magnitude = 0.0;
  args.mode = "offline";
  REQUIRE(cmd_drift(quiet(cfg, dir / "d", log), args) == kExitOk);
  const json d = json::parse(slurp(dir / "d" / "drift.json"));
  CHECK(d["delta_i_auroc"] == 0.0);
  CHECK(d["onset_frame"] == 12);
  CHECK(fs::exists(dir / "d" / "drift.txt"));
  args.mode = "upside-down";
  CHECK(cmd_drift(quiet(cfg, dir / "e", log), args) == kExitConfig);
}

TEST_CASE("cmd_bench: Table 3 fields, positive timings, N=0 rejected") {
  test::TempDir dir;
  const auto cfg = write_cfg(dir, "cfg.json", kSmall);
  std::ostringstream log;
  REQUIRE(cmd_bench(quiet(cfg, dir / "b", log), 100, 2) == kExitOk);
  const json b = json::parse(slurp(dir / "b" / "bench.json"));
  CHECK(b["runs"].size() == 2);
  for (const char* f : {"tps", "tpi_ms", "encode_ms", "detect_ms"}) {
    CHECK(b["mean"][f].get<double>() > 0.0);
    const double mean = (b["runs"][0][f].get<double>() + b["runs"][1][f].get<double>()) / 2.0;
    CHECK(b["mean"][f].get<double>() == doctest::Approx(mean).epsilon(1e-12));
  }
  CHECK(cmd_bench(quiet(cfg, dir / "c", log), 0) == kExitConfig);
}
