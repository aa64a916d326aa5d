#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "lemo/feature_io.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace lemo;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("write_tensor: byte layout of a 1x1x1 tensor") {
  test::TempDir dir;
  Tensor3 t(1, 1, 1, 0.5f);
  write_tensor(dir / "one.lemo", t);
  const std::vector<std::uint8_t> expect = {'L', 'E', 'M', 'O', 0x01, 0x00, 0x00, 0x03,
                                            1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0,
                                            0x00, 0x00, 0x00, 0x3F};
  CHECK(slurp(dir / "one.lemo") == expect);
}

TEST_CASE("tensor files round trip bit-exactly") {
  test::TempDir dir;
  std::mt19937_64 rng(8);
  const Tensor3 t = oracle::random_tensor(rng, 272, 28, 28);
  write_tensor(dir / "big.lemo", t);
  const auto back = read_tensor(dir / "big.lemo");
  CHECK(back.dims == std::vector<std::uint32_t>{272, 28, 28});
  CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0);
  CHECK(back.as_tensor3() == t);

  const Matrix m = oracle::random_matrix(rng, 10, 17);
  write_tensor(dir / "m.lemo", m);
  CHECK(read_tensor(dir / "m.lemo").as_matrix() == m);
  // read -> write reproduces the original bytes.
  write_tensor(dir / "m2.lemo", read_tensor(dir / "m.lemo"));
  CHECK(slurp(dir / "m.lemo") == slurp(dir / "m2.lemo"));
}

TEST_CASE("write_tensor refuses non-finite data and leaves no file") {
  test::TempDir dir;
  Tensor3 t(1, 2, 2, 1.0f);
  t.data[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_tensor(dir / "nan.lemo", t), NumericalError);
  CHECK_FALSE(fs::exists(dir / "nan.lemo"));
  CHECK_FALSE(fs::exists(dir / "nan.lemo.tmp"));
}

TEST_CASE("read_tensor rejects malformed files") {
  test::TempDir dir;
  write_tensor(dir / "ok.lemo", Tensor3(2, 2, 2, 1.0f));
  auto bytes = slurp(dir / "ok.lemo");

  auto bad = bytes;
  std::copy_n("XXXX", 4, bad.begin());
  spit(dir / "magic.lemo", bad);
  CHECK_THROWS_AS(read_tensor(dir / "magic.lemo"), FormatError);

  bad = bytes;
  bad.pop_back();
  spit(dir / "short.lemo", bad);
  CHECK_THROWS_AS(read_tensor(dir / "short.lemo"), FormatError);
  CHECK_THROWS_AS(read_tensor_dims(dir / "short.lemo"), FormatError);

  bad = bytes;
  bad[4] = 2;
  spit(dir / "version.lemo", bad);
  CHECK_THROWS_AS(read_tensor(dir / "version.lemo"), FormatError);

  bad = bytes;
  bad[6] = 1;
  spit(dir / "dtype.lemo", bad);
  CHECK_THROWS_AS(read_tensor(dir / "dtype.lemo"), FormatError);

  CHECK_THROWS_AS(read_tensor(dir / "missing.lemo"), IoError);
}

TEST_CASE("load_manifest: valid records keep file order") {
  test::TempDir dir;
  write_tensor(dir / "a.lemo", Tensor3(3, 2, 2, 0.0f));
  write_tensor(dir / "b2.lemo", Tensor3(2, 4, 4, 0.0f));
  write_tensor(dir / "b3.lemo", Tensor3(4, 2, 2, 0.0f));
  write_tensor(dir / "mask.lemo", Matrix(8, 8, 1.0f));
  write_json(dir / "m.json",
             {{"orig_hw", {8, 8}},
              {"records",
               {{{"feature_path", "a.lemo"}, {"label", "normal"}, {"split", "train-stream"}},
                {{"scale_paths", {"b2.lemo", "b3.lemo"}},
                 {"label", "anomalous"},
                 {"split", "test"},
                 {"mask_path", "mask.lemo"}}}}});
  const Manifest m = load_manifest(dir / "m.json", {.require_pixel_masks = true});
  REQUIRE(m.records.size() == 2);
  CHECK(m.records[0].feature_path->filename() == "a.lemo");
  CHECK(m.records[1].scale_paths.size() == 2);
  CHECK(m.records[1].label == Label::anomalous);
  CHECK(m.count(Split::test) == 1);
}

TEST_CASE("load_manifest: validation errors") {
  test::TempDir dir;
  write_tensor(dir / "a.lemo", Tensor3(3, 2, 2, 0.0f));
  write_tensor(dir / "mask.lemo", Matrix(4, 4, 1.0f));

  write_json(dir / "empty.json", {{"records", nlohmann::json::array()}});
  CHECK_THROWS_AS(load_manifest(dir / "empty.json"), ValidationError);

  const nlohmann::json no_mask = {
      {"records", {{{"feature_path", "a.lemo"}, {"label", "anomalous"}, {"split", "test"}}}}};
  write_json(dir / "nomask.json", no_mask);
  CHECK_NOTHROW(load_manifest(dir / "nomask.json"));
  CHECK_THROWS_AS(load_manifest(dir / "nomask.json", {.require_pixel_masks = true}),
                  ValidationError);

  write_json(dir / "missing.json",
             {{"records", {{{"feature_path", "nope.lemo"}, {"label", "normal"}, {"split", "test"}}}}});
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), ValidationError);

  write_json(dir / "label.json",
             {{"records", {{{"feature_path", "a.lemo"}, {"label", "weird"}, {"split", "test"}}}}});
  CHECK_THROWS_AS(load_manifest(dir / "label.json"), ValidationError);

  write_json(dir / "hw.json", {{"orig_hw", {8, 8}},
                               {"records",
                                {{{"feature_path", "a.lemo"},
                                  {"label", "anomalous"},
                                  {"split", "test"},
                                  {"mask_path", "mask.lemo"}}}}});
  CHECK_THROWS_AS(load_manifest(dir / "hw.json"), ValidationError);

  write_json(dir / "both.json", {{"records",
                                  {{{"feature_path", "a.lemo"},
                                    {"scale_paths", {"a.lemo"}},
                                    {"label", "normal"},
                                    {"split", "test"}}}}});
  CHECK_THROWS_AS(load_manifest(dir / "both.json"), ValidationError);

  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK_THROWS_AS(load_manifest(dir / "broken.json"), ValidationError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.json"), IoError);
}
