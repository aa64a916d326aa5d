#include "lemo/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lemo/rng.hpp"

namespace lemo {

std::size_t AdapterParams::bytes() const {
  return (weight.data.capacity() + bias.capacity()) * sizeof(float) + weight_opt.bytes() +
         bias_opt.bytes();
}

AdapterParams init_adapter(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
  if (d_in == 0 || d_out == 0) throw EmptyShapeError("init_adapter: empty projection");
  AdapterParams p;
  p.weight = Matrix(d_out, d_in);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-bound, bound);
  for (auto& v : p.weight.data) v = static_cast<float>(uni(rng));
  p.bias.assign(d_out, 0.0f);
  p.weight_opt = AdamState(p.weight.data.size());
  p.bias_opt = AdamState(d_out);
  return p;
}

Tensor3 fuse_scales(const std::vector<Tensor3>& scales) {
  if (scales.empty()) throw EmptyShapeError("fuse_scales: no scales given");
  if (scales.size() == 1) return scales.front();
  const std::size_t h = scales.front().h;
  const std::size_t w = scales.front().w;
  std::size_t d = 0;
  for (const auto& s : scales) {
    if (s.d == 0 || s.h == 0 || s.w == 0) throw EmptyShapeError("fuse_scales: empty scale");
    d += s.d;
  }
  Tensor3 out(d, h, w);
  std::size_t base = 0;
  for (const auto& s : scales) {
    for (std::size_t c = 0; c < s.d; ++c) {
      auto dst = out.plane(base + c);
      if (s.h == h && s.w == w) {
        std::copy(s.plane(c).begin(), s.plane(c).end(), dst.begin());
        continue;
      }
      Matrix plane(s.h, s.w);
      std::copy(s.plane(c).begin(), s.plane(c).end(), plane.data.begin());
      const Matrix up = bilinear_resize(plane, h, w);
      std::copy(up.data.begin(), up.data.end(), dst.begin());
    }
    base += s.d;
  }
  return out;
}

Tensor3 add_coords(const Tensor3& t) {
  if (t.h == 0 || t.w == 0) throw EmptyShapeError("add_coords: empty grid");
  Tensor3 out(t.d + 2, t.h, t.w);
  std::copy(t.data.begin(), t.data.end(), out.data.begin());
  auto coord = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0f
                  : static_cast<float>(-1.0 + 2.0 * static_cast<double>(i) /
                                                  static_cast<double>(n - 1));
  };
  for (std::size_t i = 0; i < t.h; ++i) {
    for (std::size_t j = 0; j < t.w; ++j) {
      out.at(t.d, i, j) = coord(j, t.w);
      out.at(t.d + 1, i, j) = coord(i, t.h);
    }
  }
  return out;
}

Tensor3 project_forward(const Tensor3& t, const AdapterParams& params) {
  if (t.d != params.d_in()) {
    throw DimensionError("project_forward: input has " + std::to_string(t.d) +
                         " channels, projection expects " + std::to_string(params.d_in()));
  }
  const std::size_t n = t.positions();
  Tensor3 z(params.d_out(), t.h, t.w);
  std::vector<double> acc(n);
  for (std::size_t o = 0; o < params.d_out(); ++o) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(params.bias[o]));
    const auto wrow = params.weight.row(o);
    for (std::size_t c = 0; c < t.d; ++c) {
      const double wv = wrow[c];
      const float* src = t.data.data() + c * n;
      for (std::size_t p = 0; p < n; ++p) acc[p] += wv * src[p];
    }
    auto dst = z.plane(o);
    for (std::size_t p = 0; p < n; ++p) dst[p] = static_cast<float>(acc[p]);
  }
  return z;
}

AdapterGrad project_backward(const Tensor3& t, const Tensor3& grad_z,
                             const AdapterParams& params) {
  if (t.d != params.d_in() || grad_z.d != params.d_out() || t.h != grad_z.h ||
      t.w != grad_z.w) {
    throw DimensionError("project_backward: shapes inconsistent with the projection");
  }
  const std::size_t n = t.positions();
  AdapterGrad g{Matrix(params.d_out(), params.d_in()), std::vector<float>(params.d_out())};
  for (std::size_t o = 0; o < params.d_out(); ++o) {
    const float* gz = grad_z.data.data() + o * n;
    double bsum = 0.0;
    for (std::size_t p = 0; p < n; ++p) bsum += gz[p];
    g.bias[o] = static_cast<float>(bsum);
    auto grow = g.weight.row(o);
    for (std::size_t c = 0; c < t.d; ++c) {
      const float* src = t.data.data() + c * n;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += static_cast<double>(gz[p]) * src[p];
      grow[c] = static_cast<float>(acc);
    }
  }
  return g;
}

}  // namespace lemo
