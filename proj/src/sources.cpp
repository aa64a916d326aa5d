#include "lemo/sources.hpp"

#include <string>

namespace lemo {

ManifestSource::ManifestSource(Manifest manifest, Split split) : manifest_(std::move(manifest)) {
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
    if (manifest_.records[i].split == split) records_.push_back(i);
  }
}

StreamFrame ManifestSource::get(std::size_t i) const {
  if (i >= records_.size()) {
    throw DimensionError("manifest source: frame " + std::to_string(i) + " out of range");
  }
  const ManifestRecord& rec = manifest_.records[records_[i]];
  StreamFrame f;
  f.frame_idx = i;
  f.label = rec.label;
  if (rec.feature_path) {
    f.scales.push_back(read_tensor(*rec.feature_path).as_tensor3());
  } else {
    for (const auto& p : rec.scale_paths) f.scales.push_back(read_tensor(p).as_tensor3());
  }
  if (rec.mask_path) {
    Matrix mask = read_tensor(*rec.mask_path).as_matrix();
    for (auto& v : mask.data) v = v > 0.5f ? 1.0f : 0.0f;
    f.mask = std::move(mask);
  }
  return f;
}

}  // namespace lemo
