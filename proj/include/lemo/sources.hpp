#pragma once

#include "lemo/feature_io.hpp"
#include "lemo/frame.hpp"

namespace lemo {

/// Frames of one split of a manifest, read from disk on demand. frame_idx is
/// the record's position within the split.
class ManifestSource final : public FrameSource {
 public:
  ManifestSource(Manifest manifest, Split split);
  std::size_t size() const override { return records_.size(); }
  StreamFrame get(std::size_t i) const override;

 private:
  Manifest manifest_;
  std::vector<std::size_t> records_;
};

}  // namespace lemo
