#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "error.hpp"
#include "lifting.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace slift {

using BinaryMap = Tensor<std::uint8_t>;

// 2|a & b| / (|a| + |b|); both empty -> 1, exactly one empty -> 0.
inline double dice(const BinaryMap& a, const BinaryMap& b) {
  if (a.dims() != b.dims()) throw ShapeError("dice: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a[i] > 1 || b[i] > 1) throw ShapeError("dice: maps must be binary");
    na += a[i];
    nb += b[i];
    both += a[i] & b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

// Binary maps of slice z of logits [Cout,m,Y,X], returned as [Cout,Y,X].
// Cout == 1: logit > 0. Cout >= 2: per-pixel argmax (ties to the lower class),
// one-hot per class.
template <class T>
BinaryMap binarize_slice(const Tensor<T>& logits, std::size_t z) {
  const auto& d = logits.dims();
  if (d.size() != 4) throw ShapeError("binarize_slice: logits must be [Cout,m,Y,X], got " + dims_str(d));
  if (z >= d[1]) throw AxisError("binarize_slice: slice " + std::to_string(z) + " out of range");
  const std::size_t C = d[0], m = d[1], plane = d[2] * d[3];
  BinaryMap out(Dims{C, d[2], d[3]});
  for (std::size_t i = 0; i < plane; ++i) {
    if (C == 1) {
      out[i] = logits[z * plane + i] > T{0} ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (logits[(c * m + z) * plane + i] > logits[(best * m + z) * plane + i]) best = c;
    out[best * plane + i] = 1;
  }
  return out;
}

inline BinaryMap channel_of(const BinaryMap& maps, std::size_t c) {
  const auto& d = maps.dims();
  const std::size_t plane = d[1] * d[2];
  BinaryMap out(Dims{d[1], d[2]});
  std::copy_n(maps.ptr() + c * plane, plane, out.ptr());
  return out;
}

struct PqaReport {
  double q = 0.0;
  std::vector<std::vector<double>> pairwise;  // [selected][unselected]
  std::vector<std::size_t> selected, unselected;
};

// Mean Dice agreement between every selected and every unselected slice map.
// Multi-class logits average over the classes present in at least one slice.
template <class T>
PqaReport pqa_score(const Tensor<T>& logits, const SliceStats& stats) {
  const auto& d = logits.dims();
  if (d.size() != 4) throw ShapeError("pqa_score: logits must be [Cout,m,Y,X], got " + dims_str(d));
  const std::size_t m = d[1], C = d[0];
  if (stats.selected.empty()) throw ConfigError("pqa_score: empty selection");
  if (stats.selected.size() >= m) throw ConfigError("pqa_score: s = m leaves no unselected slices");
  check_selection(stats.selected, m);

  PqaReport rep;
  rep.selected = stats.selected;
  std::sort(rep.selected.begin(), rep.selected.end());
  for (std::size_t z = 0; z < m; ++z)
    if (!std::binary_search(rep.selected.begin(), rep.selected.end(), z)) rep.unselected.push_back(z);

  std::vector<BinaryMap> maps;
  for (std::size_t z = 0; z < m; ++z) maps.push_back(binarize_slice(logits, z));

  std::vector<std::size_t> classes;
  if (C == 1) {
    classes.push_back(0);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      bool present = false;
      for (std::size_t z = 0; z < m && !present; ++z) {
        const auto plane = d[2] * d[3];
        present = std::any_of(maps[z].ptr() + c * plane, maps[z].ptr() + (c + 1) * plane, [](auto v) { return v != 0; });
      }
      if (present) classes.push_back(c);
    }
  }

  rep.pairwise.assign(rep.selected.size(), std::vector<double>(rep.unselected.size(), 0.0));
  for (std::size_t i = 0; i < rep.selected.size(); ++i)
    for (std::size_t j = 0; j < rep.unselected.size(); ++j) {
      double acc = 0;
      for (auto c : classes)
        acc += dice(channel_of(maps[rep.selected[i]], c), channel_of(maps[rep.unselected[j]], c));
      rep.pairwise[i][j] = acc / static_cast<double>(classes.size());
    }
  double total = 0;
  for (const auto& row : rep.pairwise)
    for (double v : row) total += v;
  rep.q = total / static_cast<double>(rep.selected.size() * rep.unselected.size());
  return rep;
}

// Average ranks, 1-based, ties share their mean rank.
inline std::vector<double> midranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw ConstantInputError("pearson: constant input vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(midranks(x), midranks(y));
}

struct CorrelationReport {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  double p_value = 1.0;  // two-sided permutation test on rho
  std::size_t n = 0;
  std::size_t permutations = 0;
};

inline CorrelationReport correlations(const std::vector<double>& predicted, const std::vector<double>& actual,
                                      std::size_t permutations = 10000, std::uint64_t seed = 0) {
  if (predicted.size() != actual.size()) throw ShapeError("correlations: length mismatch");
  if (predicted.size() < 3) throw ConfigError("correlations: need at least 3 pairs");
  for (const auto* v : {&predicted, &actual})
    if (std::all_of(v->begin(), v->end(), [&](double e) { return e == v->front(); }))
      throw ConstantInputError("correlations: constant input vector");
  CorrelationReport r;
  r.n = predicted.size();
  r.permutations = permutations;
  r.pearson_r = pearson(predicted, actual);
  const auto rx = midranks(predicted);
  auto ry = midranks(actual);
  r.spearman_rho = pearson(rx, ry);
  if (permutations > 0) {
    Rng rng(derive_seed(seed, 0x5eed));
    std::size_t extreme = 0;
    const double obs = std::abs(r.spearman_rho) - 1e-12;
    for (std::size_t k = 0; k < permutations; ++k) {
      rng.shuffle(ry.begin(), ry.end());
      if (std::abs(pearson(rx, ry)) >= obs) ++extreme;
    }
    r.p_value = static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
  }
  return r;
}

struct DepthMetrics {
  double rmse = 0.0;
  double delta1 = 0.0;
  std::size_t valid = 0;
};

// Over valid pixels only: RMSE and the fraction with max(p/g, g/p) < 1.25.
// Non-positive predictions never count as within the threshold.
template <class T, class M>
DepthMetrics depth_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<M>& valid) {
  if (pred.numel() != gt.numel() || valid.numel() != gt.numel())
    throw ShapeError("depth_metrics: pred/gt/mask sizes differ");
  DepthMetrics r;
  double se = 0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    if (valid[i] == M{0}) continue;
    const double g = static_cast<double>(gt[i]), p = static_cast<double>(pred[i]);
    if (!(g > 0)) throw InvalidMaskError("depth_metrics: ground truth must be positive on valid pixels");
    ++r.valid;
    se += (p - g) * (p - g);
    if (p > 0 && std::max(p / g, g / p) < 1.25) ++good;
  }
  if (r.valid == 0) throw InvalidMaskError("depth_metrics: no valid pixels");
  r.rmse = std::sqrt(se / static_cast<double>(r.valid));
  r.delta1 = static_cast<double>(good) / static_cast<double>(r.valid);
  return r;
}

}  // namespace slift
