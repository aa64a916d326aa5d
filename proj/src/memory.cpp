#include "lemo/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "lemo/rng.hpp"

namespace lemo {

std::size_t PrototypeBank::bytes() const {
  return protos.data.capacity() * sizeof(float) +
         counts.capacity() * sizeof(std::uint64_t) + opt.bytes();
}

PrototypeBank make_bank(Matrix protos) {
  PrototypeBank b;
  b.counts.assign(protos.rows, 0);
  b.opt = AdamState(protos.data.size());
  b.protos = std::move(protos);
  return b;
}

PrototypeBank init_decoupled_noise(std::size_t k, std::size_t d, std::uint64_t seed) {
  return make_bank(orthonormal_rows(seed, k, d));
}

PrototypeBank init_random_noise(std::size_t k, std::size_t d, std::uint64_t seed) {
  if (k == 0 || d == 0) throw EmptyShapeError("init_random_noise: empty bank");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix p(k, d);
  for (auto& v : p.data) v = static_cast<float>(normal(rng));
  return make_bank(std::move(p));
}

PrototypeBank init_single_image(const Tensor3& z0, std::size_t k, std::uint64_t seed) {
  if (z0.positions() < k) {
    throw InsufficientPointsError("init_single_image: " + std::to_string(z0.positions()) +
                                  " positions cannot seed " + std::to_string(k) +
                                  " prototypes");
  }
  auto km = kmeans(to_points(z0), k, 100, seed);
  return make_bank(std::move(km.centroids));
}

void select_positives(std::span<const double> dist, std::size_t n_pos,
                      std::span<std::uint8_t> is_pos) {
  const std::size_t k = dist.size();
  if (n_pos == 0 || n_pos >= k) {
    throw ConfigError("n_pos must satisfy 1 <= n_pos < K (n_pos=" + std::to_string(n_pos) +
                      ", K=" + std::to_string(k) + ")");
  }
  std::fill(is_pos.begin(), is_pos.end(), 0);
  for (std::size_t chosen = 0; chosen < n_pos; ++chosen) {
    std::size_t best = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (is_pos[j]) continue;
      if (best == k || dist[j] < dist[best]) best = j;
    }
    is_pos[best] = 1;
  }
}

PosNeg assign_pos_neg(std::span<const float> z, const PrototypeBank& bank, std::size_t n_pos) {
  if (z.size() != bank.dim()) {
    throw DimensionError("assign_pos_neg: feature dim " + std::to_string(z.size()) +
                         " vs bank dim " + std::to_string(bank.dim()));
  }
  std::vector<double> dist(bank.k());
  for (std::size_t j = 0; j < bank.k(); ++j) {
    dist[j] = std::sqrt(squared_distance(z, bank.protos.row(j)));
  }
  std::vector<std::uint8_t> is_pos(bank.k());
  select_positives(dist, n_pos, is_pos);
  PosNeg out;
  for (std::size_t j = 0; j < bank.k(); ++j) {
    (is_pos[j] ? out.positives : out.negatives).push_back(j);
  }
  return out;
}

namespace {

void set_centroid(const Matrix& points, const std::vector<std::size_t>& members,
                  std::span<float> out) {
  std::vector<double> acc(out.size(), 0.0);
  for (auto p : members) {
    const auto x = points.row(p);
    for (std::size_t c = 0; c < out.size(); ++c) acc[c] += x[c];
  }
  const double n = static_cast<double>(members.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = static_cast<float>(acc[c] / n);
}

// Splits `members` into two groups of at least `need` points each. Uses the
// 2-means partition when it already satisfies the bound, otherwise cuts the
// points sorted along the 2-means centroid axis as close as possible to it.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_group(
    const Matrix& points, const std::vector<std::size_t>& members, std::size_t need,
    std::uint64_t seed) {
  Matrix sub(members.size(), points.cols);
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::copy_n(points.row(members[i]).begin(), points.cols, sub.row(i).begin());
  }
  const auto km = kmeans(sub, 2, 50, seed);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < members.size(); ++i) {
    (km.labels[i] == 0 ? a : b).push_back(members[i]);
  }
  if (a.size() >= need && b.size() >= need) return {a, b};

  std::vector<double> axis(points.cols);
  for (std::size_t c = 0; c < points.cols; ++c) {
    axis[c] = static_cast<double>(km.centroids(1, c)) - km.centroids(0, c);
  }
  std::vector<std::pair<double, std::size_t>> proj(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto x = sub.row(i);
    double s = 0.0;
    for (std::size_t c = 0; c < points.cols; ++c) s += axis[c] * x[c];
    proj[i] = {s, members[i]};
  }
  std::sort(proj.begin(), proj.end());
  const std::size_t cut = std::clamp(a.size(), need, members.size() - need);
  a.clear();
  b.clear();
  for (std::size_t i = 0; i < proj.size(); ++i) {
    (i < cut ? a : b).push_back(proj[i].second);
  }
  return {a, b};
}

}  // namespace

RebalanceResult feature_enhanced_update_detailed(const PrototypeBank& bank, const Tensor3& z,
                                                 double min_frac, std::uint64_t seed) {
  if (!(min_frac > 0.0 && min_frac < 1.0)) {
    throw ConfigError("feature_enhanced_update: min_frac must lie in (0, 1)");
  }
  if (z.d != bank.dim()) {
    throw DimensionError("feature_enhanced_update: feature dim " + std::to_string(z.d) +
                         " vs bank dim " + std::to_string(bank.dim()));
  }
  const std::size_t k = bank.k();
  const std::size_t n = z.positions();
  if (n < 2 * k) {
    throw InsufficientPointsError("feature_enhanced_update: " + std::to_string(n) +
                                  " positions, need at least " + std::to_string(2 * k));
  }
  const Matrix points = to_points(z);
  RebalanceResult res{bank, std::vector<std::size_t>(n), {}};
  PrototypeBank& out = res.bank;

  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t best = 0;
    double best_d = squared_distance(points.row(p), out.protos.row(0));
    for (std::size_t j = 1; j < k; ++j) {
      const double dd = squared_distance(points.row(p), out.protos.row(j));
      if (dd < best_d) {
        best_d = dd;
        best = j;
      }
    }
    groups[best].push_back(p);
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (!groups[j].empty()) set_centroid(points, groups[j], out.protos.row(j));
  }

  const double threshold = min_frac * static_cast<double>(n) / static_cast<double>(k);
  const auto need = static_cast<std::size_t>(std::ceil(threshold));
  auto reset_moments = [&](std::size_t j) {
    std::fill_n(out.opt.m.begin() + static_cast<std::ptrdiff_t>(j * out.dim()), out.dim(), 0.0f);
    std::fill_n(out.opt.v.begin() + static_cast<std::ptrdiff_t>(j * out.dim()), out.dim(), 0.0f);
  };

  // Each round removes one deficient group and creates none, so at most k rounds.
  for (std::size_t round = 0; round <= k; ++round) {
    std::size_t small = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (static_cast<double>(groups[j].size()) >= threshold) continue;
      if (small == k || groups[j].size() < groups[small].size()) small = j;
    }
    if (small == k) break;
    if (round == k) throw NumericalError("feature_enhanced_update: rebalancing did not settle");

    std::size_t large = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == small) continue;
      if (large == k || groups[j].size() > groups[large].size()) large = j;
    }
    std::vector<std::size_t> merged = groups[large];
    merged.insert(merged.end(), groups[small].begin(), groups[small].end());
    std::sort(merged.begin(), merged.end());
    if (merged.size() < 2 * need) {
      throw ConfigError("feature_enhanced_update: min_frac " + std::to_string(min_frac) +
                        " cannot be met by splitting a group of " +
                        std::to_string(merged.size()));
    }
    auto [a, b] = split_group(points, merged, need, split_seed(seed, "rebalance", round));
    groups[small] = std::move(a);
    groups[large] = std::move(b);
    set_centroid(points, groups[small], out.protos.row(small));
    set_centroid(points, groups[large], out.protos.row(large));
    reset_moments(small);
    reset_moments(large);
    for (auto j : {small, large}) {
      if (std::find(res.touched.begin(), res.touched.end(), j) == res.touched.end()) {
        res.touched.push_back(j);
      }
    }
  }

  for (std::size_t j = 0; j < k; ++j) {
    out.counts[j] = groups[j].size();
    for (auto p : groups[j]) res.labels[p] = j;
  }
  std::sort(res.touched.begin(), res.touched.end());
  return res;
}

PrototypeBank feature_enhanced_update(const PrototypeBank& bank, const Tensor3& z,
                                      double min_frac, std::uint64_t seed) {
  return feature_enhanced_update_detailed(bank, z, min_frac, seed).bank;
}

std::uint64_t bank_hash(const PrototypeBank& bank) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(bank.protos.data.data());
  for (std::size_t i = 0; i < bank.protos.data.size() * sizeof(float); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace lemo
