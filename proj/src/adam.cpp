#include "lemo/adam.hpp"

#include <cmath>
#include <string>

#include "lemo/error.hpp"

namespace lemo {

void AdamHyper::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("adam: lr must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("adam: weight_decay must be >= 0");
}

void adam_step(std::span<float> param, std::span<const float> grad, AdamState& state,
               const AdamHyper& hyper) {
  if (grad.size() != param.size() || state.m.size() != param.size() ||
      state.v.size() != param.size()) {
    throw DimensionError("adam_step: parameter has " + std::to_string(param.size()) +
                         " entries, gradient " + std::to_string(grad.size()) +
                         ", moments " + std::to_string(state.m.size()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    const double v = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double p = param[i];
    const double update = (m / bc1) / (std::sqrt(v / bc2) + hyper.eps);
    param[i] = static_cast<float>(p - hyper.lr * update - hyper.lr * hyper.weight_decay * p);
  }
}

}  // namespace lemo
