// Empirical probability measures on the Heisenberg torus / R^3 and the
// Kantorovich-Rubinstein distance d_1 via an exact assignment solver.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hmfg/hgroup.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/rng.hpp"

namespace hmfg {

enum class GroundMetric { torus, euclidean };

struct EmpiricalMeasure {
  std::vector<HPoint> samples;
  std::vector<double> weights;  // empty means uniform 1/N

  std::size_t size() const { return samples.size(); }

  bool uniform() const { return weights.empty(); }

  double weight(std::size_t i) const {
    return weights.empty() ? 1.0 / static_cast<double>(samples.size()) : weights[i];
  }

  static EmpiricalMeasure dirac(const HPoint& a) { return {{a}, {}}; }

  void canonicalize() {
    for (auto& s : samples) s = canonical_rep(s);
  }
};

inline double second_moment(const EmpiricalMeasure& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto& p = mu.samples[i];
    s += mu.weight(i) * (p.x1 * p.x1 + p.x2 * p.x2 + p.x3 * p.x3);
  }
  return s;
}

// Systematic (stratified) resampling to n uniform-weight atoms. The offset u0
// lies in [0,1); atom j picks the sample whose cumulative weight covers
// (j + u0)/n. A uniform cloud resampled to its own size is reproduced exactly.
inline EmpiricalMeasure resample_with_offset(const EmpiricalMeasure& mu,
                                             std::size_t n, double u0) {
  if (n == 0) throw std::invalid_argument("resample: n must be >= 1");
  if (mu.size() == 0) throw std::invalid_argument("resample: empty measure");
  EmpiricalMeasure out;
  out.samples.reserve(n);
  std::size_t i = 0;
  double cum = mu.weight(0);
  for (std::size_t j = 0; j < n; ++j) {
    const double target = (static_cast<double>(j) + u0) / static_cast<double>(n);
    while (cum < target && i + 1 < mu.size()) cum += mu.weight(++i);
    out.samples.push_back(mu.samples[i]);
  }
  return out;
}

inline EmpiricalMeasure resample(const EmpiricalMeasure& mu, std::size_t n,
                                 const CounterRng& rng, std::uint64_t counter = 0) {
  return resample_with_offset(mu, n, rng.uniform(counter));
}

namespace detail {

// Jonker-Volgenant style shortest augmenting path; exact O(n^3) assignment.
// Returns the minimal total cost of a perfect matching of rows to columns.
inline double assignment_cost(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
        if (minv[j] < delta) { delta = minv[j]; j1 = j; }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double cost = 0.0;
  for (int j = 1; j <= n; ++j) cost += a[p[j] - 1][j - 1];
  return cost;
}

struct PointLess {
  bool operator()(const HPoint& a, const HPoint& b) const {
    if (a.x1 != b.x1) return a.x1 < b.x1;
    if (a.x2 != b.x2) return a.x2 < b.x2;
    return a.x3 < b.x3;
  }
};

}  // namespace detail

inline double ground_distance(const HPoint& a, const HPoint& b, GroundMetric metric) {
  if (metric == GroundMetric::torus) return torus_distance(a, b);
  const double d1 = a.x1 - b.x1, d2 = a.x2 - b.x2, d3 = a.x3 - b.x3;
  return std::sqrt(d1 * d1 + d2 * d2 + d3 * d3);
}

inline constexpr std::size_t kAssignmentCap = 512;

// Exact Wasserstein-1 between uniform clouds of equal size (resampled to a
// common size <= 512 otherwise). Atoms at bit-identical positions are matched
// to themselves first -- optimal for a metric ground cost -- and the
// assignment cap applies to the cancelled remainder, so flows sharing most of
// their atoms are measured exactly however large they are.
inline double wasserstein1(const EmpiricalMeasure& mu_in, const EmpiricalMeasure& nu_in,
                           GroundMetric metric = GroundMetric::torus) {
  if (mu_in.size() == 0 || nu_in.size() == 0)
    throw std::invalid_argument("wasserstein1: empty measure");

  const EmpiricalMeasure* mu = &mu_in;
  const EmpiricalMeasure* nu = &nu_in;
  EmpiricalMeasure mu_rs, nu_rs;
  if (!(mu_in.uniform() && nu_in.uniform() && mu_in.size() == nu_in.size())) {
    const std::size_t n = std::min<std::size_t>(kAssignmentCap,
                                                std::max(mu_in.size(), nu_in.size()));
    mu_rs = resample_with_offset(mu_in, n, 0.5);
    nu_rs = resample_with_offset(nu_in, n, 0.5);
    mu = &mu_rs;
    nu = &nu_rs;
  }
  const std::size_t n = mu->size();

  std::vector<HPoint> xs(mu->samples), ys(nu->samples);
  if (metric == GroundMetric::torus) {
    for (auto& p : xs) p = canonical_rep(p);
    for (auto& p : ys) p = canonical_rep(p);
  }

  // Cancel bitwise-common atoms pairwise.
  std::sort(xs.begin(), xs.end(), detail::PointLess{});
  std::sort(ys.begin(), ys.end(), detail::PointLess{});
  std::vector<HPoint> rx, ry;
  std::size_t i = 0, j = 0;
  while (i < xs.size() && j < ys.size()) {
    if (xs[i] == ys[j]) { ++i; ++j; }
    else if (detail::PointLess{}(xs[i], ys[j])) rx.push_back(xs[i++]);
    else ry.push_back(ys[j++]);
  }
  for (; i < xs.size(); ++i) rx.push_back(xs[i]);
  for (; j < ys.size(); ++j) ry.push_back(ys[j]);
  if (rx.empty()) return 0.0;

  // The cancelled mass fraction rides for free; solve the remainder, thinned
  // to the assignment cap if needed.
  const double mass_fraction = static_cast<double>(rx.size()) / n;
  if (rx.size() > kAssignmentCap) {
    EmpiricalMeasure mx, my;
    mx.samples = std::move(rx);
    my.samples = std::move(ry);
    rx = resample_with_offset(mx, kAssignmentCap, 0.5).samples;
    ry = resample_with_offset(my, kAssignmentCap, 0.5).samples;
  }
  const std::size_t k = rx.size();
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  parallel_for(k, [&](std::size_t r) {
    for (std::size_t c = 0; c < k; ++c)
      cost[r][c] = ground_distance(rx[r], ry[c], metric);
  });
  return mass_fraction * detail::assignment_cost(cost) / static_cast<double>(k);
}

}  // namespace hmfg
