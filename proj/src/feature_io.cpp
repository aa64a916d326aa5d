#include "lemo/feature_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace lemo {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "TensorFile I/O assumes a little-endian host");

std::size_t TensorData::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor3 TensorData::as_tensor3() const {
  Tensor3 t;
  if (dims.size() == 3) {
    t = Tensor3(dims[0], dims[1], dims[2]);
  } else if (dims.size() == 2) {
    t = Tensor3(1, dims[0], dims[1]);
  } else {
    throw DimensionError("expected a 2- or 3-dimensional tensor, got ndim " +
                         std::to_string(dims.size()));
  }
  t.data = data;
  return t;
}

Matrix TensorData::as_matrix() const {
  if (dims.size() != 2) {
    throw DimensionError("expected a 2-dimensional tensor, got ndim " +
                         std::to_string(dims.size()));
  }
  Matrix m(dims[0], dims[1]);
  m.data = data;
  return m;
}

TensorData to_tensor_data(const Tensor3& t) {
  return {{static_cast<std::uint32_t>(t.d), static_cast<std::uint32_t>(t.h),
           static_cast<std::uint32_t>(t.w)},
          t.data};
}

TensorData to_tensor_data(const Matrix& m) {
  return {{static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)},
          m.data};
}

namespace {

constexpr std::size_t kFixedHeader = 8;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

void check_shape(const TensorData& t) {
  if (t.dims.empty() || t.dims.size() > kMaxDims) {
    throw DimensionError("tensor ndim must be in [1, 8], got " +
                         std::to_string(t.dims.size()));
  }
  if (t.data.size() != t.element_count()) {
    throw DimensionError("tensor payload has " + std::to_string(t.data.size()) +
                         " elements, dims imply " +
                         std::to_string(t.element_count()));
  }
}

// Validates the fixed header and dims; returns the dims.
std::vector<std::uint32_t> parse_header(const std::uint8_t* bytes, std::size_t size,
                                        const std::string& where) {
  if (size < kFixedHeader) throw FormatError(where + ": truncated header");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes,
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw FormatError(where + ": bad magic");
  }
  if (get<std::uint16_t>(bytes + 4) != kTensorVersion) {
    throw FormatError(where + ": unsupported version " +
                      std::to_string(get<std::uint16_t>(bytes + 4)));
  }
  if (bytes[6] != kDtypeF32) {
    throw FormatError(where + ": unsupported dtype " + std::to_string(bytes[6]));
  }
  const std::size_t ndim = bytes[7];
  if (ndim == 0 || ndim > kMaxDims) {
    throw FormatError(where + ": bad ndim " + std::to_string(ndim));
  }
  if (size < kFixedHeader + 4 * ndim) throw FormatError(where + ": truncated dims");
  std::vector<std::uint32_t> dims(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = get<std::uint32_t>(bytes + kFixedHeader + 4 * i);
  }
  return dims;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const TensorData& t) {
  check_shape(t);
  if (!all_finite(t.data)) throw NumericalError("write_tensor: non-finite entry");
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 4 * t.dims.size() + 4 * t.data.size());
  out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
  put<std::uint16_t>(out, kTensorVersion);
  put<std::uint8_t>(out, kDtypeF32);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint32_t>(out, d);
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.data.data());
  out.insert(out.end(), p, p + 4 * t.data.size());
  return out;
}

TensorData decode_tensor(const std::vector<std::uint8_t>& bytes) {
  TensorData t;
  t.dims = parse_header(bytes.data(), bytes.size(), "read_tensor");
  const std::size_t offset = kFixedHeader + 4 * t.dims.size();
  const std::size_t n = t.element_count();
  if (bytes.size() != offset + 4 * n) {
    throw FormatError("read_tensor: payload is " + std::to_string(bytes.size() - offset) +
                      " bytes, expected " + std::to_string(4 * n));
  }
  t.data.resize(n);
  std::memcpy(t.data.data(), bytes.data() + offset, 4 * n);
  return t;
}

void write_tensor(const fs::path& path, const TensorData& t) {
  const auto bytes = encode_tensor(t);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_tensor: cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write_tensor: write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("write_tensor: cannot rename into " + path.string());
  }
}

void write_tensor(const fs::path& path, const Tensor3& t) {
  write_tensor(path, to_tensor_data(t));
}

void write_tensor(const fs::path& path, const Matrix& m) {
  write_tensor(path, to_tensor_data(m));
}

TensorData read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint32_t> read_tensor_dims(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor: cannot open " + path.string());
  std::uint8_t head[kFixedHeader + 4 * kMaxDims] = {};
  in.read(reinterpret_cast<char*>(head), sizeof(head));
  const auto got = static_cast<std::size_t>(in.gcount());
  auto dims = parse_header(head, got, path.string());
  in.clear();
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  if (size != kFixedHeader + 4 * dims.size() + 4 * n) {
    throw FormatError(path.string() + ": payload size does not match dims");
  }
  return dims;
}

std::string to_string(Label l) {
  switch (l) {
    case Label::normal: return "normal";
    case Label::anomalous: return "anomalous";
    case Label::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

std::string to_string(Split s) {
  return s == Split::test ? "test" : "train-stream";
}

Label parse_label(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "anomalous") return Label::anomalous;
  if (s == "unlabeled") return Label::unlabeled;
  throw ValidationError("unknown label '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train-stream") return Split::train_stream;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

std::size_t Manifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [s](const auto& r) { return r.split == s; }));
}

namespace {

fs::path resolve(const fs::path& base, const json& v, const std::string& where) {
  if (!v.is_string()) throw ValidationError(where + ": path must be a string");
  fs::path p = v.get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!fs::is_regular_file(p)) {
    throw ValidationError(where + ": cannot resolve " + p.string());
  }
  return p;
}

}  // namespace

Manifest load_manifest(const fs::path& path, const ManifestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("load_manifest: " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("load_manifest: top level must be an object");

  Manifest m;
  m.base_dir = fs::absolute(path).parent_path();
  if (doc.contains("orig_hw")) {
    const auto& hw = doc["orig_hw"];
    if (!hw.is_array() || hw.size() != 2 || !hw[0].is_number_unsigned() ||
        !hw[1].is_number_unsigned()) {
      throw ValidationError("load_manifest: orig_hw must be [height, width]");
    }
    m.orig_hw = std::array<std::uint32_t, 2>{hw[0].get<std::uint32_t>(),
                                             hw[1].get<std::uint32_t>()};
  }
  if (!doc.contains("records") || !doc["records"].is_array()) {
    throw ValidationError("load_manifest: missing records array");
  }
  if (doc["records"].empty()) throw ValidationError("load_manifest: records list is empty");

  static const std::set<std::string> kKeys = {"feature_path", "scale_paths", "label",
                                              "mask_path", "split", "image"};
  std::size_t idx = 0;
  for (const auto& r : doc["records"]) {
    const std::string where = "record " + std::to_string(idx++);
    if (!r.is_object()) throw ValidationError(where + ": must be an object");
    for (const auto& [key, _] : r.items()) {
      if (!kKeys.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
    }
    ManifestRecord rec;
    const bool has_feature = r.contains("feature_path");
    const bool has_scales = r.contains("scale_paths");
    if (has_feature == has_scales) {
      throw ValidationError(where + ": exactly one of feature_path / scale_paths is required");
    }
    if (has_feature) {
      rec.feature_path = resolve(m.base_dir, r["feature_path"], where);
      if (read_tensor_dims(*rec.feature_path).size() != 3) {
        throw ValidationError(where + ": feature tensor must be D x H x W");
      }
    } else {
      if (!r["scale_paths"].is_array() || r["scale_paths"].empty()) {
        throw ValidationError(where + ": scale_paths must be a nonempty list");
      }
      for (const auto& s : r["scale_paths"]) {
        rec.scale_paths.push_back(resolve(m.base_dir, s, where));
        if (read_tensor_dims(rec.scale_paths.back()).size() != 3) {
          throw ValidationError(where + ": scale tensor must be D x H x W");
        }
      }
    }
    if (!r.contains("label") || !r["label"].is_string()) {
      throw ValidationError(where + ": missing label");
    }
    if (!r.contains("split") || !r["split"].is_string()) {
      throw ValidationError(where + ": missing split");
    }
    try {
      rec.label = parse_label(r["label"].get<std::string>());
      rec.split = parse_split(r["split"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (r.contains("mask_path")) {
      rec.mask_path = resolve(m.base_dir, r["mask_path"], where);
      if (!m.orig_hw) throw ValidationError(where + ": mask_path requires orig_hw");
      const auto dims = read_tensor_dims(*rec.mask_path);
      if (dims.size() != 2 || dims[0] != (*m.orig_hw)[0] || dims[1] != (*m.orig_hw)[1]) {
        throw ValidationError(where + ": mask dims do not match orig_hw");
      }
    }
    if (opts.require_pixel_masks && rec.split == Split::test &&
        rec.label == Label::anomalous && !rec.mask_path) {
      throw ValidationError(where + ": anomalous test record has no mask_path");
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

}  // namespace lemo
