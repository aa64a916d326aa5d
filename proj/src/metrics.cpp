#include "lemo/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace lemo {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("auroc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("auroc: both classes must be present");
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

std::vector<std::uint32_t> label_regions(const Matrix& mask, std::uint32_t* n_regions) {
  const std::size_t h = mask.rows, w = mask.cols;
  std::vector<std::uint32_t> lab(h * w, 0);
  std::uint32_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (mask.data[start] <= 0.5f || lab[start] != 0) continue;
    ++next;
    lab[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t i = p / w, j = p % w;
      auto visit = [&](std::size_t q) {
        if (mask.data[q] > 0.5f && lab[q] == 0) {
          lab[q] = next;
          stack.push_back(q);
        }
      };
      if (i > 0) visit(p - w);
      if (i + 1 < h) visit(p + w);
      if (j > 0) visit(p - 1);
      if (j + 1 < w) visit(p + 1);
    }
  }
  if (n_regions) *n_regions = next;
  return lab;
}

double aupro(const std::vector<Matrix>& maps, const std::vector<Matrix>& masks,
             const AuproOptions& opts) {
  if (maps.size() != masks.size()) {
    throw DimensionError("aupro: " + std::to_string(maps.size()) + " maps vs " +
                         std::to_string(masks.size()) + " masks");
  }
  if (!(opts.fpr_limit > 0.0 && opts.fpr_limit <= 1.0)) {
    throw ConfigError("aupro: fpr_limit must lie in (0, 1]");
  }
  if (opts.max_thresholds < 2) throw ConfigError("aupro: need at least 2 thresholds");

  std::vector<double> score;
  std::vector<std::uint32_t> region;  // global region id, 0 = background
  std::vector<std::size_t> region_size{0};
  for (std::size_t m = 0; m < maps.size(); ++m) {
    if (maps[m].rows != masks[m].rows || maps[m].cols != masks[m].cols) {
      throw DimensionError("aupro: map " + std::to_string(m) + " does not match its mask");
    }
    std::uint32_t n_local = 0;
    const auto lab = label_regions(masks[m], &n_local);
    const auto base = static_cast<std::uint32_t>(region_size.size() - 1);
    region_size.resize(region_size.size() + n_local, 0);
    for (std::size_t p = 0; p < lab.size(); ++p) {
      score.push_back(maps[m].data[p]);
      const std::uint32_t id = lab[p] == 0 ? 0 : base + lab[p];
      region.push_back(id);
      ++region_size[id];
    }
  }
  const std::size_t n_regions = region_size.size() - 1;
  const std::size_t n_neg = region_size[0];
  if (n_regions == 0) throw UndefinedMetricError("aupro: no anomalous region in any mask");
  if (n_neg == 0) throw UndefinedMetricError("aupro: no normal pixels to measure FPR on");

  const std::size_t n = score.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<double> distinct;
  for (auto idx : order) {
    if (distinct.empty() || score[idx] != distinct.back()) distinct.push_back(score[idx]);
  }
  std::vector<double> thresholds;
  if (distinct.size() <= opts.max_thresholds) {
    thresholds = distinct;
  } else {
    const std::size_t m = opts.max_thresholds;
    for (std::size_t q = 0; q < m; ++q) {
      const std::size_t pos = q * (n - 1) / (m - 1);
      const double t = score[order[pos]];
      if (thresholds.empty() || t != thresholds.back()) thresholds.push_back(t);
    }
  }

  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};  // (fpr, pro)
  std::size_t cursor = 0, fp = 0;
  double pro_sum = 0.0;
  for (double t : thresholds) {
    while (cursor < n && score[order[cursor]] >= t) {
      const std::uint32_t id = region[order[cursor]];
      if (id == 0) {
        ++fp;
      } else {
        pro_sum += 1.0 / static_cast<double>(region_size[id]);
      }
      ++cursor;
    }
    curve.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                       pro_sum / static_cast<double>(n_regions));
  }

  const double limit = opts.fpr_limit;
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    auto [x0, y0] = curve[i - 1];
    auto [x1, y1] = curve[i];
    if (x0 >= limit) break;
    if (x1 > limit) {
      y1 = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
      x1 = limit;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / limit;
}

}  // namespace lemo
