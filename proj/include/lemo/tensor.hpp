#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lemo/error.hpp"

namespace lemo {

/// Row-major dense matrix of 32-bit reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f)
      : rows(r), cols(c), data(r * c, fill) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool operator==(const Matrix&) const = default;
};

/// Channel-major D x H x W feature volume. Position (i, j) of channel c lives
/// at data[(c * h + i) * w + j].
struct Tensor3 {
  std::size_t d = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(std::size_t d_, std::size_t h_, std::size_t w_, float fill = 0.0f)
      : d(d_), h(h_), w(w_), data(d_ * h_ * w_, fill) {}

  std::size_t positions() const { return h * w; }

  float& at(std::size_t c, std::size_t i, std::size_t j) {
    return data[(c * h + i) * w + j];
  }
  float at(std::size_t c, std::size_t i, std::size_t j) const {
    return data[(c * h + i) * w + j];
  }

  std::span<float> plane(std::size_t c) { return {data.data() + c * h * w, h * w}; }
  std::span<const float> plane(std::size_t c) const {
    return {data.data() + c * h * w, h * w};
  }

  bool operator==(const Tensor3&) const = default;
};

bool all_finite(std::span<const float> values);

/// (H*W) x D matrix whose row p = i * W + j is the feature vector at (i, j).
Matrix to_points(const Tensor3& t);
Tensor3 from_points(const Matrix& points, std::size_t h, std::size_t w);

/// k x d matrix with orthonormal rows: Gaussian noise orthonormalized by
/// modified Gram-Schmidt with one re-orthogonalization pass (the Q factor of
/// a thin QR of the transposed noise).
Matrix orthonormal_rows(std::uint64_t seed, std::size_t k, std::size_t d);

struct KMeansResult {
  Matrix centroids;
  std::vector<std::size_t> labels;
  /// Sum of squared distances after each assignment step.
  std::vector<double> objective;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded with
/// the point farthest from its current centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iter,
                    std::uint64_t seed);

/// n x m matrix of Euclidean distances between rows of a and rows of b.
Matrix pairwise_dist(const Matrix& a, const Matrix& b);

double squared_distance(std::span<const float> a, std::span<const float> b);

/// Bilinear resize of an H x W grid with half-pixel centers and edge clamping.
Matrix bilinear_resize(const Matrix& grid, std::size_t out_h, std::size_t out_w);

}  // namespace lemo
