#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lemo {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0f), v(n, 0.0f) {}

  std::size_t bytes() const { return (m.capacity() + v.capacity()) * sizeof(float); }
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam step with decoupled weight decay:
///   param -= lr * m_hat / (sqrt(v_hat) + eps) + lr * weight_decay * param
void adam_step(std::span<float> param, std::span<const float> grad, AdamState& state,
               const AdamHyper& hyper);

}  // namespace lemo
