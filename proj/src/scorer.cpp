#include "lemo/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace lemo {

namespace {

void check_dims(const Tensor3& z, const PrototypeBank& bank, const char* who) {
  if (z.d != bank.dim()) {
    throw DimensionError(std::string(who) + ": feature dim " + std::to_string(z.d) +
                         " vs bank dim " + std::to_string(bank.dim()));
  }
  if (bank.k() == 0) throw EmptyShapeError(std::string(who) + ": empty bank");
}

}  // namespace

Matrix match_score(const Tensor3& z, const PrototypeBank& bank) {
  check_dims(z, bank, "match_score");
  const Matrix pts = to_points(z);
  Matrix s(z.h, z.w);
  for (std::size_t p = 0; p < pts.rows; ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bank.k(); ++j) {
      best = std::min(best, squared_distance(pts.row(p), bank.protos.row(j)));
    }
    s.data[p] = static_cast<float>(std::sqrt(best));
  }
  return s;
}

ScoreMap anomaly_map(const Tensor3& z, const PrototypeBank& bank, const ScoreOptions& opts) {
  check_dims(z, bank, "anomaly_map");
  const Matrix pts = to_points(z);
  const std::size_t k = bank.k();
  ScoreMap out{Matrix(z.h, z.w), Matrix(z.h, z.w), 0.0, std::nullopt};
  std::vector<double> dist(k);
  for (std::size_t p = 0; p < pts.rows; ++p) {
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      dist[j] = std::sqrt(squared_distance(pts.row(p), bank.protos.row(j)));
      s = std::min(s, dist[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(-(dist[j] - s));
    const double a = s / denom;
    if (!std::isfinite(a)) {
      throw NumericalError("anomaly_map: non-finite score at position " + std::to_string(p));
    }
    out.s.data[p] = static_cast<float>(s);
    out.a.data[p] = static_cast<float>(a);
  }
  if (opts.smoothing_sigma > 0.0) out.a = gaussian_smooth(out.a, opts.smoothing_sigma);
  out.image_score = aggregate_image_score(out.a, opts);
  return out;
}

Matrix upsample_scores(const Matrix& a, std::size_t out_h, std::size_t out_w) {
  if (out_h < a.rows || out_w < a.cols) {
    throw DimensionError("upsample_scores: target smaller than the score map");
  }
  return bilinear_resize(a, out_h, out_w);
}

Matrix gaussian_smooth(const Matrix& grid, double sigma) {
  if (!(sigma > 0.0)) return grid;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (auto& v : kernel) v /= norm;

  const auto h = static_cast<long>(grid.rows);
  const auto w = static_cast<long>(grid.cols);
  auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
  Matrix tmp(grid.rows, grid.cols), out(grid.rows, grid.cols);
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += kernel[t + radius] * grid(i, clampi(j + t, w));
      }
      tmp(i, j) = static_cast<float>(acc);
    }
  }
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += kernel[t + radius] * tmp(clampi(i + t, h), j);
      }
      out(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

double aggregate_image_score(const Matrix& a, const ScoreOptions& opts) {
  if (a.data.empty()) throw EmptyShapeError("aggregate_image_score: empty map");
  if (opts.aggregation == ImageAggregation::max) {
    return *std::max_element(a.data.begin(), a.data.end());
  }
  if (!(opts.top_q > 0.0 && opts.top_q <= 1.0)) {
    throw ConfigError("aggregate_image_score: top_q must lie in (0, 1]");
  }
  std::vector<float> v = a.data;
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(opts.top_q * static_cast<double>(v.size()))));
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), v.end(),
                    std::greater<>());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += v[i];
  return acc / static_cast<double>(n);
}

}  // namespace lemo
