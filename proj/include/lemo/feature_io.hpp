#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lemo/tensor.hpp"

namespace lemo {

// TensorFile layout (all little-endian):
//   "LEMO" | u16 version = 1 | u8 dtype (0 = f32) | u8 ndim | ndim x u32 dims |
//   prod(dims) x f32 payload
inline constexpr std::array<char, 4> kTensorMagic = {'L', 'E', 'M', 'O'};
inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::size_t kMaxDims = 8;

/// Shape-agnostic contents of a TensorFile.
struct TensorData {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  Tensor3 as_tensor3() const;  // ndim 3, or ndim 2 read as 1 x H x W
  Matrix as_matrix() const;    // ndim 2
};

TensorData to_tensor_data(const Tensor3& t);
TensorData to_tensor_data(const Matrix& m);

std::vector<std::uint8_t> encode_tensor(const TensorData& t);
TensorData decode_tensor(const std::vector<std::uint8_t>& bytes);

/// Writes atomically (temp file + rename); nothing is written on error.
void write_tensor(const std::filesystem::path& path, const TensorData& t);
void write_tensor(const std::filesystem::path& path, const Tensor3& t);
void write_tensor(const std::filesystem::path& path, const Matrix& m);

TensorData read_tensor(const std::filesystem::path& path);
/// Reads only the header and returns the dims.
std::vector<std::uint32_t> read_tensor_dims(const std::filesystem::path& path);

enum class Label { normal, anomalous, unlabeled };
enum class Split { train_stream, test };

std::string to_string(Label l);
std::string to_string(Split s);
Label parse_label(const std::string& s);
Split parse_split(const std::string& s);

struct ManifestRecord {
  std::optional<std::filesystem::path> feature_path;
  std::vector<std::filesystem::path> scale_paths;
  Label label = Label::unlabeled;
  std::optional<std::filesystem::path> mask_path;
  Split split = Split::train_stream;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::optional<std::array<std::uint32_t, 2>> orig_hw;
  std::vector<ManifestRecord> records;

  std::size_t count(Split s) const;
};

struct ManifestOptions {
  /// Anomalous test records must then carry a mask_path.
  bool require_pixel_masks = false;
};

/// Parses and eagerly validates a manifest. Relative paths are resolved
/// against the manifest's directory; records keep file order.
Manifest load_manifest(const std::filesystem::path& path,
                       const ManifestOptions& opts = {});

}  // namespace lemo
