#pragma once

#include <optional>

#include "lemo/memory.hpp"
#include "lemo/tensor.hpp"

namespace lemo {

enum class ImageAggregation { max, top_q_mean };

struct ScoreOptions {
  ImageAggregation aggregation = ImageAggregation::max;
  double top_q = 0.01;
  /// Gaussian smoothing of the anomaly map in grid cells; 0 disables it.
  double smoothing_sigma = 0.0;
};

struct ScoreMap {
  Matrix s;  // H x W nearest-prototype distance
  Matrix a;  // H x W weighted anomaly score
  double image_score = 0.0;
  std::optional<Matrix> upsampled;
};

/// S(i, j) = min_k |z(i, j) - p_k|
Matrix match_score(const Tensor3& z, const PrototypeBank& bank);

/// A(i, j) = S(i, j) * exp(-S(i, j)) / sum_k exp(-|z(i, j) - p_k|), evaluated
/// as S / sum_k exp(-(d_k - S)) so the largest term is exactly 1.
ScoreMap anomaly_map(const Tensor3& z, const PrototypeBank& bank, const ScoreOptions& opts = {});

/// Bilinear upsampling to mask resolution.
Matrix upsample_scores(const Matrix& a, std::size_t out_h, std::size_t out_w);

Matrix gaussian_smooth(const Matrix& grid, double sigma);

double aggregate_image_score(const Matrix& a, const ScoreOptions& opts);

}  // namespace lemo
