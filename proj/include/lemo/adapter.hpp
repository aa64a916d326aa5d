#pragma once

#include <cstdint>
#include <vector>

#include "lemo/adam.hpp"
#include "lemo/tensor.hpp"

namespace lemo {

/// Learnable per-position affine projection (a 1x1 convolution) with the
/// optimizer moments for its weight and bias.
struct AdapterParams {
  Matrix weight;  // d_out x d_in
  std::vector<float> bias;
  AdamState weight_opt;
  AdamState bias_opt;

  std::size_t d_in() const { return weight.cols; }
  std::size_t d_out() const { return weight.rows; }
  std::uint64_t step_count() const { return weight_opt.t; }
  std::size_t bytes() const;

  bool operator==(const AdapterParams&) const = default;
};

/// Weight uniform in [-1/sqrt(d_in), 1/sqrt(d_in)], zero bias, zero moments.
AdapterParams init_adapter(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

/// Resizes every scale bilinearly to the spatial size of the first and
/// concatenates along channels.
Tensor3 fuse_scales(const std::vector<Tensor3>& scales);

/// Appends x (across width) and y (across height) coordinate channels in [-1, 1].
Tensor3 add_coords(const Tensor3& t);

Tensor3 project_forward(const Tensor3& t, const AdapterParams& params);

struct AdapterGrad {
  Matrix weight;
  std::vector<float> bias;
};

AdapterGrad project_backward(const Tensor3& t, const Tensor3& grad_z,
                             const AdapterParams& params);

}  // namespace lemo
