#include "urbanstep/jenks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "urbanstep/error.hpp"

namespace urbanstep {

namespace {

// Prefix sums over distinct sorted values with multiplicities. Values are
// centred first to keep the x^2 sums well conditioned.
struct Prefix {
  std::vector<double> w, wx, wxx;

  // SSE of distinct values [i, j), i < j.
  double cost(std::size_t i, std::size_t j) const {
    const double n = w[j] - w[i];
    const double s = wx[j] - wx[i];
    const double ss = wxx[j] - wxx[i];
    return std::max(0.0, ss - s * s / n);
  }
};

struct Layer {
  const Prefix& prefix;
  const std::vector<double>& prev;  // prev[i] = best cost of first i values with c-1 classes
  std::vector<double>& cur;
  std::vector<std::size_t>& arg;
  std::size_t min_split;

  // cur[j] = min over i in [lo_i, hi_i] of prev[i] + cost(i, j), leftmost argmin.
  void solve(std::size_t j_lo, std::size_t j_hi, std::size_t i_lo, std::size_t i_hi) {
    if (j_lo > j_hi) return;
    const std::size_t j = j_lo + (j_hi - j_lo) / 2;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = i_lo;
    const std::size_t last = std::min(i_hi, j - 1);
    for (std::size_t i = std::max(i_lo, min_split); i <= last; ++i) {
      if (!std::isfinite(prev[i])) continue;
      const double v = prev[i] + prefix.cost(i, j);
      if (!std::isfinite(best) || v < best - 1e-12 * std::max(1.0, std::abs(best))) {
        best = v;
        best_i = i;
      }
    }
    cur[j] = best;
    arg[j] = best_i;
    if (j > j_lo) solve(j_lo, j - 1, i_lo, best_i);
    solve(j + 1, j_hi, best_i, i_hi);
  }
};

}  // namespace

JenksBreaks jenks_breaks(std::span<const double> values, std::size_t k, std::string city) {
  if (k < 2) fail(ErrorCategory::Validation, "jenks_breaks needs k >= 2");
  if (values.empty()) fail(ErrorCategory::Validation, "jenks_breaks needs at least one value");

  std::map<double, double> counts;
  double mean = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCategory::Validation, "jenks_breaks got a non-finite value");
    counts[v] += 1.0;
    mean += v;
  }
  mean /= static_cast<double>(values.size());
  const std::size_t m = counts.size();
  if (m < k) {
    fail(ErrorCategory::Validation, "jenks_breaks needs at least " + std::to_string(k) + " distinct values, got " +
                                        std::to_string(m));
  }

  std::vector<double> distinct;
  distinct.reserve(m);
  Prefix prefix;
  prefix.w.assign(m + 1, 0.0);
  prefix.wx.assign(m + 1, 0.0);
  prefix.wxx.assign(m + 1, 0.0);
  std::size_t idx = 0;
  for (const auto& [v, c] : counts) {
    const double x = v - mean;
    distinct.push_back(v);
    prefix.w[idx + 1] = prefix.w[idx] + c;
    prefix.wx[idx + 1] = prefix.wx[idx] + c * x;
    prefix.wxx[idx + 1] = prefix.wxx[idx] + c * x * x;
    ++idx;
  }

  const double inf = std::numeric_limits<double>::infinity();
  // cost[c][j]: best SSE of the first j distinct values in c+1 classes.
  std::vector<std::vector<double>> cost(k, std::vector<double>(m + 1, inf));
  std::vector<std::vector<std::size_t>> split(k, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t j = 1; j <= m; ++j) cost[0][j] = prefix.cost(0, j);
  for (std::size_t c = 1; c < k; ++c) {
    Layer layer{prefix, cost[c - 1], cost[c], split[c], c};
    layer.solve(c + 1, m, c, m - 1);
  }

  JenksBreaks out;
  out.city = std::move(city);
  out.sample_size = values.size();
  out.breaks.assign(k - 1, 0.0);
  std::size_t j = m;
  for (std::size_t c = k - 1; c >= 1; --c) {
    const std::size_t i = split[c][j];
    out.breaks[c - 1] = distinct[i - 1];
    j = i;
  }
  return out;
}

std::size_t class_index(double value, const JenksBreaks& breaks) {
  std::size_t i = 0;
  while (i < breaks.breaks.size() && value > breaks.breaks[i]) ++i;
  return i;
}

double within_class_sse(std::span<const double> values, const JenksBreaks& breaks) {
  const std::size_t k = breaks.breaks.size() + 1;
  std::vector<double> n(k, 0.0), s(k, 0.0), ss(k, 0.0);
  for (double v : values) {
    const std::size_t c = class_index(v, breaks);
    n[c] += 1.0;
    s[c] += v;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (n[c] > 0) s[c] /= n[c];
  }
  for (double v : values) {
    const std::size_t c = class_index(v, breaks);
    ss[c] += (v - s[c]) * (v - s[c]);
  }
  double total = 0.0;
  for (double v : ss) total += v;
  return total;
}

HeightClass classify_height(double height, const JenksBreaks& breaks) {
  const std::size_t c = std::min<std::size_t>(class_index(height, breaks), kHeightClassCount - 1);
  return static_cast<HeightClass>(c);
}

}  // namespace urbanstep
