#pragma once

#include "lemo/memory.hpp"
#include "lemo/tensor.hpp"

namespace lemo {

struct LossConfig {
  double tau = 0.1;   // temperature
  double r = 1e-5;    // distance margin
  std::size_t n_pos = 3;

  void validate() const;
};

/// max(d - r, 0)
inline double margin_dist(double d, double r) { return d > r ? d - r : 0.0; }

struct LossResult {
  double loss = 0.0;
  Tensor3 grad_z;  // same shape as z
  Matrix grad_p;   // K x D
};

/// Contrastive prototype loss averaged over the H*W positions of z:
///
///   l_k      = -max(|z_ij - p_k| - r, 0) / tau
///   loss_ij  = logsumexp_{all k} l_k - logsumexp_{k in pos(ij)} l_k
///
/// pos(ij) are the n_pos nearest prototypes, held fixed while differentiating.
/// Gradients are exact w.r.t. every z_ij and p_k; clipped margins and
/// coincident points contribute zero.
LossResult anonce_loss(const Tensor3& z, const PrototypeBank& bank, const LossConfig& cfg);

}  // namespace lemo
