#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lemo/tensor.hpp"

namespace lemo {

/// Area under the ROC curve as the Mann-Whitney statistic with midrank ties:
/// U / (n_pos * n_neg). Labels are 0/1.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct AuproOptions {
  double fpr_limit = 0.3;
  /// Distinct score values are used as thresholds up to this count, otherwise
  /// this many quantile-spaced thresholds.
  std::size_t max_thresholds = 512;
};

/// Normalized area under the per-region-overlap curve up to fpr_limit.
/// Regions are 4-connected components of the binary masks; PRO(t) is the mean
/// over all regions of the fraction of region pixels scoring >= t, and FPR(t)
/// is computed over every non-region pixel of every map.
double aupro(const std::vector<Matrix>& maps, const std::vector<Matrix>& masks,
             const AuproOptions& opts = {});

/// 4-connected component labels (0 = background, 1..n = regions).
std::vector<std::uint32_t> label_regions(const Matrix& mask, std::uint32_t* n_regions = nullptr);

}  // namespace lemo
