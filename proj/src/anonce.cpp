#include "lemo/anonce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lemo {

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("loss: tau must be > 0");
  if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("loss: r must be >= 0");
  if (n_pos == 0) throw ConfigError("loss: n_pos must be >= 1");
}

LossResult anonce_loss(const Tensor3& z, const PrototypeBank& bank, const LossConfig& cfg) {
  cfg.validate();
  if (z.d != bank.dim()) {
    throw DimensionError("anonce_loss: feature dim " + std::to_string(z.d) + " vs bank dim " +
                         std::to_string(bank.dim()));
  }
  const std::size_t k = bank.k();
  const std::size_t dim = bank.dim();
  const std::size_t n = z.positions();
  if (n == 0) throw EmptyShapeError("anonce_loss: empty feature grid");

  const Matrix pts = to_points(z);
  Matrix gz_pts(n, dim);
  std::vector<double> grad_p(k * dim, 0.0);
  std::vector<double> dist(k), logit(k), coef(k), gz(dim);
  std::vector<std::uint8_t> is_pos(k);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;

  for (std::size_t p = 0; p < n; ++p) {
    const auto x = pts.row(p);
    for (std::size_t j = 0; j < k; ++j) {
      dist[j] = std::sqrt(squared_distance(x, bank.protos.row(j)));
      logit[j] = -margin_dist(dist[j], cfg.r) / cfg.tau;
    }
    select_positives(dist, cfg.n_pos, is_pos);

    double max_all = -std::numeric_limits<double>::infinity();
    double max_pos = max_all;
    for (std::size_t j = 0; j < k; ++j) {
      max_all = std::max(max_all, logit[j]);
      if (is_pos[j]) max_pos = std::max(max_pos, logit[j]);
    }
    double sum_all = 0.0, sum_pos = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sum_all += std::exp(logit[j] - max_all);
      if (is_pos[j]) sum_pos += std::exp(logit[j] - max_pos);
    }
    const double lse_all = max_all + std::log(sum_all);
    const double lse_pos = max_pos + std::log(sum_pos);
    const double loss_p = lse_all - lse_pos;
    if (!std::isfinite(loss_p)) {
      throw NumericalError("anonce_loss: non-finite loss at position (" +
                           std::to_string(p / z.w) + ", " + std::to_string(p % z.w) + ")");
    }
    total += loss_p;

    // dloss/dlogit_j = softmax_all_j - [j in pos] softmax_pos_j, then chain
    // through logit = -(d - r)/tau and d = |x - p_j|.
    std::fill(gz.begin(), gz.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      coef[j] = 0.0;
      if (dist[j] <= cfg.r || dist[j] == 0.0) continue;
      double g = std::exp(logit[j] - lse_all);
      if (is_pos[j]) g -= std::exp(logit[j] - lse_pos);
      coef[j] = -g / (cfg.tau * dist[j]) * inv_n;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (coef[j] == 0.0) continue;
      const auto proto = bank.protos.row(j);
      double* gp = grad_p.data() + j * dim;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = static_cast<double>(x[c]) - proto[c];
        gz[c] += coef[j] * diff;
        gp[c] -= coef[j] * diff;
      }
    }
    auto out = gz_pts.row(p);
    for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(gz[c]);
  }

  LossResult res;
  res.loss = total * inv_n;
  res.grad_z = from_points(gz_pts, z.h, z.w);
  res.grad_p = Matrix(k, dim);
  for (std::size_t i = 0; i < grad_p.size(); ++i) {
    res.grad_p.data[i] = static_cast<float>(grad_p[i]);
  }
  if (!std::isfinite(res.loss) || !all_finite(res.grad_p.data) || !all_finite(res.grad_z.data)) {
    throw NumericalError("anonce_loss: non-finite gradient");
  }
  return res;
}

}  // namespace lemo
