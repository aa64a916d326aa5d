#pragma once

// Independent reference implementations used only by tests. They deliberately
// avoid the library's kernels: plain double loops, full sorts, no stabilizers
// beyond what the scale of the test inputs requires.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "lemo/tensor.hpp"

namespace lemo::oracle {

struct Dense {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline Dense points_of(const Tensor3& t) {
  Dense d{t.h * t.w, t.d, std::vector<double>(t.h * t.w * t.d)};
  for (std::size_t i = 0; i < t.h; ++i)
    for (std::size_t j = 0; j < t.w; ++j)
      for (std::size_t c = 0; c < t.d; ++c) d(i * t.w + j, c) = t.at(c, i, j);
  return d;
}

inline Dense dense_of(const Matrix& m) {
  Dense d{m.rows, m.cols, std::vector<double>(m.data.begin(), m.data.end())};
  return d;
}

inline double dist(const Dense& a, std::size_t i, const Dense& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return std::sqrt(s);
}

/// Positive mask per position via a full stable sort of all K distances.
inline std::vector<std::vector<bool>> positive_sets(const Dense& z, const Dense& p,
                                                    std::size_t n_pos) {
  std::vector<std::vector<bool>> out(z.rows, std::vector<bool>(p.rows, false));
  for (std::size_t i = 0; i < z.rows; ++i) {
    std::vector<std::size_t> idx(p.rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> d(p.rows);
    for (std::size_t k = 0; k < p.rows; ++k) d[k] = dist(z, i, p, k);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return d[a] < d[b]; });
    for (std::size_t r = 0; r < n_pos; ++r) out[i][idx[r]] = true;
  }
  return out;
}

/// Contrastive prototype loss written straight from its definition.
inline double anonce_loss(const Dense& z, const Dense& p,
                          const std::vector<std::vector<bool>>& pos, double tau, double r) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < p.rows; ++k) {
      const double m = std::max(dist(z, i, p, k) - r, 0.0);
      const double e = std::exp(-m / tau);
      den += e;
      if (pos[i][k]) num += e;
    }
    total += -std::log(num / den);
  }
  return total / static_cast<double>(z.rows);
}

/// Central finite differences of anonce_loss w.r.t. every entry of z (if
/// wrt_z) or of p, with the positive sets frozen.
inline std::vector<double> fd_gradient(Dense z, Dense p, std::size_t n_pos, double tau, double r,
                                       bool wrt_z, double h = 1e-3) {
  const auto pos = positive_sets(z, p, n_pos);
  Dense& target = wrt_z ? z : p;
  std::vector<double> g(target.v.size());
  for (std::size_t i = 0; i < target.v.size(); ++i) {
    const double orig = target.v[i];
    target.v[i] = orig + h;
    const double up = anonce_loss(z, p, pos, tau, r);
    target.v[i] = orig - h;
    const double down = anonce_loss(z, p, pos, tau, r);
    target.v[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

struct ScoreGrid {
  std::vector<double> s, a;
};

/// S = min_k |z - p_k|; A = exp(-S) / sum_k exp(-|z - p_k|) * S, evaluated
/// literally in double precision.
inline ScoreGrid anomaly_map(const Tensor3& zt, const Matrix& protos) {
  const Dense z = points_of(zt), p = dense_of(protos);
  ScoreGrid g;
  for (std::size_t i = 0; i < z.rows; ++i) {
    double s = INFINITY, den = 0.0;
    for (std::size_t k = 0; k < p.rows; ++k) {
      const double d = dist(z, i, p, k);
      s = std::min(s, d);
      den += std::exp(-d);
    }
    g.s.push_back(s);
    g.a.push_back(std::exp(-s) / den * s);
  }
  return g;
}

/// Half-pixel-center bilinear interpolation, written per output pixel.
inline std::vector<double> bilinear(const std::vector<double>& in, std::size_t ih, std::size_t iw,
                                    std::size_t oh, std::size_t ow) {
  std::vector<double> out(oh * ow);
  auto sample = [&](double y, double x) {
    y = std::min(std::max(y, 0.0), static_cast<double>(ih - 1));
    x = std::min(std::max(x, 0.0), static_cast<double>(iw - 1));
    const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
    const std::size_t y1 = y0 + 1 < ih ? y0 + 1 : y0, x1 = x0 + 1 < iw ? x0 + 1 : x0;
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return in[y0 * iw + x0] * (1 - fy) * (1 - fx) + in[y0 * iw + x1] * (1 - fy) * fx +
           in[y1 * iw + x0] * fy * (1 - fx) + in[y1 * iw + x1] * fy * fx;
  };
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      out[i * ow + j] = sample((i + 0.5) * ih / static_cast<double>(oh) - 0.5,
                               (j + 0.5) * iw / static_cast<double>(ow) - 0.5);
  return out;
}

/// P(score_pos > score_neg) + 0.5 P(tie), by enumerating all pairs.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

inline Tensor3 random_tensor(std::mt19937_64& rng, std::size_t d, std::size_t h, std::size_t w,
                             double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor3 t(d, h, w);
  for (auto& v : t.data) v = static_cast<float>(n(rng));
  return t;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (auto& v : m.data) v = static_cast<float>(n(rng));
  return m;
}

inline double max_gram_deviation(const Matrix& p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.rows; ++i)
    for (std::size_t j = 0; j < p.rows; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols; ++c) dot += double(p(i, c)) * p(j, c);
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace lemo::oracle
