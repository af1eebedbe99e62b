#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "hmfg/measures.hpp"

using namespace hmfg;

namespace {

const CounterRng rng{7, 0x3e5u};

EmpiricalMeasure random_cloud(std::size_t n, std::uint64_t tag, double lo = 0.0,
                              double hi = 1.0) {
  EmpiricalMeasure mu;
  mu.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    mu.samples.push_back({rng.uniform((tag << 24) + 3 * i, lo, hi),
                          rng.uniform((tag << 24) + 3 * i + 1, lo, hi),
                          rng.uniform((tag << 24) + 3 * i + 2, lo, hi)});
  return mu;
}

// Exhaustive minimum over all permutations; the independent oracle for the
// assignment solver.
double brute_force_w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                      GroundMetric metric) {
  const std::size_t n = mu.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += ground_distance(mu.samples[i], nu.samples[perm[i]], metric);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

}  // namespace

TEST_CASE("identity and dirac distances") {
  const EmpiricalMeasure mu = random_cloud(32, 1);
  CHECK(wasserstein1(mu, mu) == 0.0);

  for (int i = 0; i < 30; ++i) {
    const HPoint a{rng.uniform(900 + 6 * i), rng.uniform(901 + 6 * i),
                   rng.uniform(902 + 6 * i)};
    const HPoint b{rng.uniform(903 + 6 * i), rng.uniform(904 + 6 * i),
                   rng.uniform(905 + 6 * i)};
    CHECK(wasserstein1(EmpiricalMeasure::dirac(a), EmpiricalMeasure::dirac(b)) ==
          Catch::Approx(torus_distance(a, b)).margin(1e-14));
  }
}

TEST_CASE("assignment matches brute force on small clouds") {
  // 120 random instances of size <= 7, both ground metrics.
  int instance = 0;
  for (std::size_t n = 2; n <= 7; ++n) {
    for (int rep = 0; rep < 20; ++rep, ++instance) {
      const EmpiricalMeasure mu = random_cloud(n, 100 + instance);
      const EmpiricalMeasure nu = random_cloud(n, 4000 + instance);
      const GroundMetric metric =
          instance % 2 == 0 ? GroundMetric::torus : GroundMetric::euclidean;
      const double solver = wasserstein1(mu, nu, metric);
      const double brute = brute_force_w1(mu, nu, metric);
      REQUIRE(solver == Catch::Approx(brute).margin(1e-12));
    }
  }
  CHECK(instance == 120);
}

TEST_CASE("three-atom hand-built instance") {
  EmpiricalMeasure mu, nu;
  mu.samples = {{0.1, 0.1, 0.1}, {0.5, 0.5, 0.5}, {0.9, 0.2, 0.7}};
  nu.samples = {{0.2, 0.1, 0.1}, {0.45, 0.55, 0.5}, {0.1, 0.8, 0.3}};
  CHECK(wasserstein1(mu, nu, GroundMetric::euclidean) ==
        Catch::Approx(brute_force_w1(mu, nu, GroundMetric::euclidean)).margin(1e-14));
  CHECK(wasserstein1(mu, nu, GroundMetric::torus) ==
        Catch::Approx(brute_force_w1(mu, nu, GroundMetric::torus)).margin(1e-14));
}

TEST_CASE("metric axioms") {
  for (int i = 0; i < 10; ++i) {
    const EmpiricalMeasure a = random_cloud(24, 300 + 3 * i);
    const EmpiricalMeasure b = random_cloud(24, 301 + 3 * i);
    const EmpiricalMeasure c = random_cloud(24, 302 + 3 * i);
    const double dab = wasserstein1(a, b);
    const double dba = wasserstein1(b, a);
    const double dac = wasserstein1(a, c);
    const double dcb = wasserstein1(c, b);
    CHECK(dab == Catch::Approx(dba).margin(1e-12));
    CHECK(dab >= 0.0);
    CHECK(dab <= dac + dcb + 1e-9);
  }
}

TEST_CASE("torus cost never exceeds raw gauge cost") {
  for (int i = 0; i < 20; ++i) {
    EmpiricalMeasure a = random_cloud(16, 500 + 2 * i, -2.0, 2.0);
    EmpiricalMeasure b = random_cloud(16, 501 + 2 * i, -2.0, 2.0);
    EmpiricalMeasure ca = a, cb = b;
    ca.canonicalize();
    cb.canonicalize();
    const double torus = wasserstein1(ca, cb, GroundMetric::torus);
    const std::size_t n = ca.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        cost[r][c] = h_distance(ca.samples[r], cb.samples[c]);
    const double raw = detail::assignment_cost(cost) / n;
    CHECK(torus <= raw + 1e-12);
  }
}

TEST_CASE("resampling") {
  const EmpiricalMeasure mu = random_cloud(64, 700);
  const EmpiricalMeasure rs = resample(mu, 64, rng, 99);
  REQUIRE(rs.size() == 64);
  CHECK(rs.uniform());
  // Same-size uniform resample reproduces the cloud as a multiset.
  std::vector<HPoint> a = mu.samples, b = rs.samples;
  auto less = [](const HPoint& p, const HPoint& q) {
    return std::tie(p.x1, p.x2, p.x3) < std::tie(q.x1, q.x2, q.x3);
  };
  std::sort(a.begin(), a.end(), less);
  std::sort(b.begin(), b.end(), less);
  CHECK(a == b);

  // Weighted input: expected mean preserved within 3 sigma / sqrt(trials * n).
  EmpiricalMeasure wm;
  double wsum = 0.0;
  for (int i = 0; i < 100; ++i) {
    wm.samples.push_back({rng.uniform(8000 + 2 * i), 0.0, 0.0});
    wm.weights.push_back(rng.uniform(8001 + 2 * i, 0.1, 1.0));
    wsum += wm.weights.back();
  }
  for (auto& w : wm.weights) w /= wsum;
  double mean_w = 0.0, var_w = 0.0;
  for (std::size_t i = 0; i < wm.size(); ++i) mean_w += wm.weights[i] * wm.samples[i].x1;
  for (std::size_t i = 0; i < wm.size(); ++i) {
    const double d = wm.samples[i].x1 - mean_w;
    var_w += wm.weights[i] * d * d;
  }
  double drift_sum = 0.0;
  const int trials = 100;
  const std::size_t n = 256;
  for (int t = 0; t < trials; ++t) {
    const EmpiricalMeasure r = resample(wm, n, rng, 12345 + t);
    double m = 0.0;
    for (const auto& p : r.samples) m += p.x1;
    drift_sum += m / n - mean_w;
  }
  const double mean_drift = std::abs(drift_sum / trials);
  CHECK(mean_drift <= 3.0 * std::sqrt(var_w / (n * trials)));
}

TEST_CASE("second moment") {
  CHECK(second_moment(EmpiricalMeasure::dirac({0, 0, 0})) == 0.0);
  CHECK(second_moment(EmpiricalMeasure::dirac({1, 1, 1})) == 3.0);
  const EmpiricalMeasure mu = random_cloud(20000, 900);
  // Uniform cell: E|x|^2 = 3 * 1/3 = 1.
  CHECK(second_moment(mu) == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("errors") {
  EmpiricalMeasure empty;
  CHECK_THROWS_AS(wasserstein1(empty, empty), std::invalid_argument);
  CHECK_THROWS_AS(resample(empty, 4, rng), std::invalid_argument);
}
