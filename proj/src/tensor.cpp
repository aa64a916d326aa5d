#include "lemo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lemo/rng.hpp"

namespace lemo {

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

Matrix to_points(const Tensor3& t) {
  const std::size_t n = t.positions();
  Matrix pts(n, t.d);
  for (std::size_t c = 0; c < t.d; ++c) {
    const auto plane = t.plane(c);
    for (std::size_t p = 0; p < n; ++p) pts.data[p * t.d + c] = plane[p];
  }
  return pts;
}

Tensor3 from_points(const Matrix& points, std::size_t h, std::size_t w) {
  if (points.rows != h * w) {
    throw DimensionError("from_points: " + std::to_string(points.rows) +
                         " rows cannot fill a " + std::to_string(h) + "x" +
                         std::to_string(w) + " grid");
  }
  Tensor3 t(points.cols, h, w);
  for (std::size_t c = 0; c < t.d; ++c) {
    auto plane = t.plane(c);
    for (std::size_t p = 0; p < h * w; ++p) plane[p] = points.data[p * t.d + c];
  }
  return t;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

Matrix orthonormal_rows(std::uint64_t seed, std::size_t k, std::size_t d) {
  if (k == 0 || d == 0) {
    throw EmptyShapeError("orthonormal_rows: k and d must be positive");
  }
  if (k > d) {
    throw DimensionError("orthonormal_rows: cannot fit " + std::to_string(k) +
                         " orthonormal rows in dimension " + std::to_string(d));
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> q(k * d);
  for (auto& v : q) v = normal(rng);

  auto row = [&](std::size_t r) { return q.data() + r * d; };
  for (std::size_t i = 0; i < k; ++i) {
    double* qi = row(i);
    // Two projection sweeps: classic "twice is enough" re-orthogonalization.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        const double* qj = row(j);
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += qi[c] * qj[c];
        for (std::size_t c = 0; c < d; ++c) qi[c] -= dot * qj[c];
      }
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += qi[c] * qi[c];
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      throw NumericalError("orthonormal_rows: degenerate noise sample at row " +
                           std::to_string(i));
    }
    for (std::size_t c = 0; c < d; ++c) qi[c] /= norm;
  }

  Matrix out(k, d);
  std::transform(q.begin(), q.end(), out.data.begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

namespace {

std::size_t nearest(const Matrix& centroids, std::span<const float> x,
                    double* best_sq) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double dd = squared_distance(x, centroids.row(c));
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  if (best_sq) *best_sq = best_d;
  return best;
}

Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows;
  Matrix centroids(k, points.cols);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);

  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (std::size_t p = 0; p < n; ++p) total += d2[p];
      if (total > 0.0) {
        double target = std::uniform_real_distribution<double>(0.0, total)(rng);
        pick = n - 1;
        for (std::size_t p = 0; p < n; ++p) {
          target -= d2[p];
          if (target < 0.0 && d2[p] > 0.0) {
            pick = p;
            break;
          }
        }
        // Guard against rounding landing on an already chosen point.
        while (d2[pick] == 0.0 && pick > 0) --pick;
      } else {
        // Fewer distinct points than k; fall back to the first unchosen index.
        pick = static_cast<std::size_t>(
            std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
      }
    }
    chosen[pick] = true;
    std::copy_n(points.row(pick).begin(), points.cols, centroids.row(c).begin());
    for (std::size_t p = 0; p < n; ++p) {
      d2[p] = std::min(d2[p], squared_distance(points.row(p), centroids.row(c)));
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iter,
                    std::uint64_t seed) {
  if (k == 0) throw EmptyShapeError("kmeans: k must be positive");
  if (max_iter == 0) throw ConfigError("kmeans: max_iter must be positive");
  if (points.rows < k) {
    throw InsufficientPointsError("kmeans: " + std::to_string(points.rows) +
                                  " points cannot form " + std::to_string(k) +
                                  " clusters");
  }
  const std::size_t n = points.rows;
  const std::size_t dim = points.cols;
  Rng rng(seed);

  KMeansResult res;
  res.centroids = kmeanspp_seed(points, k, rng);
  res.labels.assign(n, k);  // k = "unassigned"

  std::vector<std::size_t> next(n);
  std::vector<double> dist_sq(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> sizes(k);

  for (std::size_t it = 0; it < max_iter; ++it) {
    double objective = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      next[p] = nearest(res.centroids, points.row(p), &dist_sq[p]);
      objective += dist_sq[p];
    }
    res.objective.push_back(objective);
    res.iterations = it + 1;
    const bool changed = next != res.labels;
    res.labels = next;
    if (!changed) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto x = points.row(p);
      double* s = sums.data() + res.labels[p] * dim;
      for (std::size_t c = 0; c < dim; ++c) s[c] += x[c];
      ++sizes[res.labels[p]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      auto row = res.centroids.row(c);
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] = static_cast<float>(sums[c * dim + j] / static_cast<double>(sizes[c]));
      }
    }
    // Re-seed empty clusters with the points worst served by their centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double dd = squared_distance(points.row(p),
                                           res.centroids.row(res.labels[p]));
        if (dd > far_d) {
          far_d = dd;
          far = p;
        }
      }
      std::copy_n(points.row(far).begin(), dim, res.centroids.row(c).begin());
      --sizes[res.labels[far]];
      res.labels[far] = c;
      sizes[c] = 1;
    }
  }
  return res;
}

Matrix pairwise_dist(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) {
    throw DimensionError("pairwise_dist: column mismatch " +
                         std::to_string(a.cols) + " vs " + std::to_string(b.cols));
  }
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      out(i, j) = static_cast<float>(std::sqrt(squared_distance(a.row(i), b.row(j))));
    }
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Matrix bilinear_resize(const Matrix& grid, std::size_t out_h, std::size_t out_w) {
  if (grid.rows == 0 || grid.cols == 0 || out_h == 0 || out_w == 0) {
    throw EmptyShapeError("bilinear_resize: empty grid");
  }
  if (grid.rows == out_h && grid.cols == out_w) return grid;
  const auto ty = bilinear_taps(grid.rows, out_h);
  const auto tx = bilinear_taps(grid.cols, out_w);
  Matrix out(out_h, out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const double top = (1.0 - tx[j].frac) * grid(ty[i].lo, tx[j].lo) +
                         tx[j].frac * grid(ty[i].lo, tx[j].hi);
      const double bot = (1.0 - tx[j].frac) * grid(ty[i].hi, tx[j].lo) +
                         tx[j].frac * grid(ty[i].hi, tx[j].hi);
      out(i, j) = static_cast<float>((1.0 - ty[i].frac) * top + ty[i].frac * bot);
    }
  }
  return out;
}

}  // namespace lemo
