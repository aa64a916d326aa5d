#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lemo/adam.hpp"
#include "lemo/tensor.hpp"

namespace lemo {

/// K x D prototype matrix plus per-prototype assignment counts from the latest
/// rebalance and Adam moments for the learning-based update.
struct PrototypeBank {
  Matrix protos;
  std::vector<std::uint64_t> counts;
  AdamState opt;

  std::size_t k() const { return protos.rows; }
  std::size_t dim() const { return protos.cols; }
  std::uint64_t step_count() const { return opt.t; }
  std::size_t bytes() const;

  bool operator==(const PrototypeBank&) const = default;
};

PrototypeBank make_bank(Matrix protos);

/// QR-orthonormalized Gaussian noise.
PrototypeBank init_decoupled_noise(std::size_t k, std::size_t d, std::uint64_t seed);
/// Plain i.i.d. standard-normal rows (the non-orthogonal ablation arm).
PrototypeBank init_random_noise(std::size_t k, std::size_t d, std::uint64_t seed);
/// k-means centroids of the H*W position features of one adapted frame.
PrototypeBank init_single_image(const Tensor3& z0, std::size_t k, std::uint64_t seed);

struct PosNeg {
  std::vector<std::size_t> positives;  // ascending index
  std::vector<std::size_t> negatives;  // ascending index
};

/// The n_pos nearest prototypes are positives, the rest negatives. Ties go to
/// the lower index.
PosNeg assign_pos_neg(std::span<const float> z, const PrototypeBank& bank, std::size_t n_pos);

/// Same rule on precomputed distances; writes 1 for positives into is_pos.
void select_positives(std::span<const double> dist, std::size_t n_pos,
                      std::span<std::uint8_t> is_pos);

/// Balanced reassignment: recenter prototypes on their nearest-feature groups,
/// then repeatedly dissolve the smallest group below min_frac * (H*W/K) into the
/// largest group and split that union in two with 2-means.
PrototypeBank feature_enhanced_update(const PrototypeBank& bank, const Tensor3& z,
                                      double min_frac, std::uint64_t seed = 0);

struct RebalanceResult {
  PrototypeBank bank;
  std::vector<std::size_t> labels;  // final group of each position
  std::vector<std::size_t> touched; // prototypes replaced by a merge/split round
};

RebalanceResult feature_enhanced_update_detailed(const PrototypeBank& bank, const Tensor3& z,
                                                 double min_frac, std::uint64_t seed = 0);

/// FNV-1a over the prototype bytes, for cheap equality checks in reports.
std::uint64_t bank_hash(const PrototypeBank& bank);

}  // namespace lemo
