#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lemo/feature_io.hpp"
#include "lemo/tensor.hpp"

namespace lemo {

/// One unit of streaming input: raw multi-scale features (or one pre-fused
/// volume), an optional label, and an optional binary ground-truth mask.
struct StreamFrame {
  std::vector<Tensor3> scales;
  Label label = Label::unlabeled;
  std::optional<Matrix> mask;
  std::uint64_t frame_idx = 0;

  bool operator==(const StreamFrame&) const = default;
};

/// Random-access frame provider. Frames are produced on demand, so a stream
/// never has to be held in memory.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual StreamFrame get(std::size_t i) const = 0;
};

}  // namespace lemo
