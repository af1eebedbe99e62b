#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hmfg/control.hpp"
#include "hmfg/grid.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/rng.hpp"

using namespace hmfg;

namespace {

const CounterRng rng{23, 0xAB1u};

const TimeScalarField kZeroF = [](const HPoint&, double) { return 0.0; };
const ScalarField kZeroG = [](const HPoint&) { return 0.0; };
const TimeVec3Field kZeroGradF = [](const HPoint&, double) { return Vec3{0, 0, 0}; };
const Vec3Field kZeroGradG = [](const HPoint&) { return Vec3{0, 0, 0}; };

// Smooth gentle decoupled instances with analytic gradients.
struct Instance {
  double a1, a2, a3, b1, b2, p1, p2;
  HPoint x0;

  double f(const HPoint& x, double) const {
    return a1 * std::cos(x.x1 + p1) + a2 * std::sin(x.x2) + a3 * std::cos(x.x3);
  }
  Vec3 grad_f(const HPoint& x, double) const {
    return {-a1 * std::sin(x.x1 + p1), a2 * std::cos(x.x2), -a3 * std::sin(x.x3)};
  }
  double g(const HPoint& x) const {
    return b1 * std::sin(x.x1 + p2) + b2 * std::cos(x.x2 + x.x3);
  }
  Vec3 grad_g(const HPoint& x) const {
    const double s = -b2 * std::sin(x.x2 + x.x3);
    return {b1 * std::cos(x.x1 + p2), s, s};
  }
};

Instance make_instance(int i) {
  Instance in;
  const std::uint64_t t = static_cast<std::uint64_t>(i) << 16;
  in.a1 = rng.uniform(t + 0, 0.05, 0.25);
  in.a2 = rng.uniform(t + 1, 0.05, 0.25);
  in.a3 = rng.uniform(t + 2, 0.02, 0.12);
  in.b1 = rng.uniform(t + 3, 0.05, 0.25);
  in.b2 = rng.uniform(t + 4, 0.02, 0.15);
  in.p1 = rng.uniform(t + 5, 0.0, 6.28);
  in.p2 = rng.uniform(t + 6, 0.0, 6.28);
  in.x0 = {rng.uniform(t + 7, -0.5, 0.5), rng.uniform(t + 8, -0.5, 0.5),
           rng.uniform(t + 9, -0.5, 0.5)};
  return in;
}

ControlPath constant_path(double a1, double a2, int K, double t0 = 0.0, double T = 1.0) {
  ControlPath p;
  p.t0 = t0;
  p.T = T;
  p.values.assign(K, Vec3{a1, a2, 0.0});
  return p;
}

}  // namespace

TEST_CASE("trajectory integration on chosen controls") {
  {
    const Trajectory tr = integrate_trajectory({0, 0, 0}, constant_path(1, 0, 8));
    CHECK(tr.terminal().x1 == Catch::Approx(1.0).margin(1e-14));
    CHECK(tr.terminal().x2 == 0.0);
    CHECK(tr.terminal().x3 == 0.0);
  }
  {
    ControlPath p;
    p.t0 = 0.0;
    p.T = 1.0;
    p.values.assign(8, Vec3{2, 0, 0});
    for (int k = 4; k < 8; ++k) p.values[k] = {0, 2, 0};
    const Trajectory tr = integrate_trajectory({0, 0, 0}, p);
    CHECK(tr.terminal().x1 == Catch::Approx(1.0).margin(1e-14));
    CHECK(tr.terminal().x2 == Catch::Approx(1.0).margin(1e-14));
    CHECK(tr.terminal().x3 == Catch::Approx(1.0).margin(1e-14));
  }
  {
    const HPoint x0{0.4, -0.3, 0.8};
    const Trajectory tr = integrate_trajectory(x0, constant_path(0, 0, 16));
    for (const auto& s : tr.states) {
      CHECK(s.x1 == x0.x1);
      CHECK(s.x2 == x0.x2);
      CHECK(s.x3 == x0.x3);
    }
  }
}

TEST_CASE("exact-step refinement invariance") {
  // Refining K for a fixed piecewise-constant control leaves the path on the
  // shared time grid unchanged: each leg is closed-form.
  for (int trial = 0; trial < 10; ++trial) {
    const int K = 8;
    ControlPath coarse;
    coarse.t0 = 0.0;
    coarse.T = 1.0;
    for (int k = 0; k < K; ++k)
      coarse.values.push_back({rng.uniform(5000 + 16 * trial + 2 * k, -2, 2),
                               rng.uniform(5001 + 16 * trial + 2 * k, -2, 2), 0.0});
    ControlPath fine;
    fine.t0 = 0.0;
    fine.T = 1.0;
    for (int k = 0; k < K; ++k)
      for (int r = 0; r < 4; ++r) fine.values.push_back(coarse.values[k]);
    const HPoint x0{rng.uniform(6000 + trial), rng.uniform(6001 + trial),
                    rng.uniform(6002 + trial)};
    const Trajectory tc = integrate_trajectory(x0, coarse);
    const Trajectory tf = integrate_trajectory(x0, fine);
    for (int k = 0; k <= K; ++k) {
      CHECK(tf.states[4 * k].x1 == Catch::Approx(tc.states[k].x1).margin(1e-13));
      CHECK(tf.states[4 * k].x2 == Catch::Approx(tc.states[k].x2).margin(1e-13));
      CHECK(tf.states[4 * k].x3 == Catch::Approx(tc.states[k].x3).margin(1e-13));
    }
  }
}

TEST_CASE("translation covariance of the dynamics") {
  for (int trial = 0; trial < 20; ++trial) {
    ControlPath p = constant_path(rng.uniform(7000 + trial, -2, 2),
                                  rng.uniform(7100 + trial, -2, 2), 16);
    const HPoint x0{rng.uniform(7200 + trial), rng.uniform(7300 + trial),
                    rng.uniform(7400 + trial)};
    const HPoint z{static_cast<double>(trial % 4 - 2), static_cast<double>(trial % 3 - 1),
                   static_cast<double>(trial % 5 - 2)};
    const Trajectory base = integrate_trajectory(x0, p);
    const Trajectory shifted = integrate_trajectory(group_mul(z, x0), p);
    for (std::size_t k = 0; k < base.states.size(); ++k) {
      const HPoint want = group_mul(z, base.states[k]);
      CHECK(shifted.states[k].x1 == Catch::Approx(want.x1).margin(1e-12));
      CHECK(shifted.states[k].x2 == Catch::Approx(want.x2).margin(1e-12));
      CHECK(shifted.states[k].x3 == Catch::Approx(want.x3).margin(1e-12));
    }
  }
}

TEST_CASE("cost values") {
  const int K = 16;
  {
    const ControlPath p = constant_path(0, 0, K);
    const Trajectory tr = integrate_trajectory({0, 0, 0}, p);
    CHECK(cost(tr, p, kZeroF, kZeroG) == 0.0);
  }
  {
    const ControlPath p = constant_path(1, 0, K);
    const Trajectory tr = integrate_trajectory({0, 0, 0}, p);
    CHECK(cost(tr, p, kZeroF, kZeroG) == Catch::Approx(0.5).margin(1e-14));
  }
  {
    const ControlPath p = constant_path(0, 0, K, 0.0, 2.0);
    const Trajectory tr = integrate_trajectory({0.2, 0.1, 0.4}, p);
    const TimeScalarField one = [](const HPoint&, double) { return 1.0; };
    CHECK(cost(tr, p, one, kZeroG) == Catch::Approx(2.0).margin(1e-13));
  }
}

TEST_CASE("pmp right-hand side") {
  Vec3 dx, dp;
  pmp_rhs({0.3, -0.7, 0.2}, {0, 0, 0}, {0, 0, 0}, 0.0, dx, dp);
  for (int c = 0; c < 3; ++c) {
    CHECK(dx[c] == 0.0);
    CHECK(dp[c] == 0.0);
  }
  pmp_rhs({0, 0, 0}, {1, 1, 1}, {0, 0, 0}, 0.0, dx, dp);
  CHECK(dx[0] == 1.0);
  CHECK(dx[1] == 1.0);
  CHECK(dx[2] == 0.0);
  CHECK(dp[0] == -1.0);
  CHECK(dp[1] == 1.0);
  CHECK(dp[2] == 0.0);
}

TEST_CASE("p3 is conserved when f ignores x3") {
  const TimeVec3Field grad_f = [](const HPoint& x, double) {
    return Vec3{0.2 * std::cos(x.x1), -0.1 * std::sin(x.x2), 0.0};
  };
  std::vector<HPoint> xs;
  std::vector<Vec3> ps;
  detail::pmp_integrate({0.1, 0.2, -0.3}, {0.4, -0.2, 0.7}, 0.0, 1.0, 64, grad_f, 0.0,
                        xs, ps);
  for (const auto& p : ps) CHECK(p[2] == Catch::Approx(0.7).margin(1e-12));
}

TEST_CASE("shooting on the trivial problem") {
  const ShootResult r = pmp_shoot({0.2, -0.1, 0.3}, 0.0, {0, 0, 0}, kZeroF,
                                  kZeroGradF, kZeroG, kZeroGradG);
  CHECK(r.residual <= 1e-12);
  CHECK(r.converged);
  for (const auto& s : r.trajectory.states) {
    CHECK(s.x1 == 0.2);
    CHECK(s.x2 == -0.1);
    CHECK(s.x3 == 0.3);
  }
  CHECK(r.value == 0.0);
}

TEST_CASE("shooting with terminal x3 cost recovers the feedback form") {
  // g = x3: p(T) = (0,0,-1) is forced; the recovered control must satisfy
  // alpha = (p1 - x2 p3, p2 + x1 p3) along the shot path.
  const ScalarField g = [](const HPoint& x) { return x.x3; };
  const Vec3Field grad_g = [](const HPoint&) { return Vec3{0, 0, 1}; };
  const ShootResult r =
      pmp_shoot({0.3, 0.2, 0.0}, 0.0, {0, 0, 0}, kZeroF, kZeroGradF, g, grad_g);
  CHECK(r.converged);
  CHECK(r.costate.p.back()[2] == Catch::Approx(-1.0).margin(1e-8));
  for (std::size_t k = 0; k < r.controls.values.size(); ++k) {
    const HPoint& x = r.trajectory.states[k];
    const Vec3& p = r.costate.p[k];
    CHECK(r.controls.values[k][0] ==
          Catch::Approx(p[0] - x.x2 * p[2]).margin(1e-12));
    CHECK(r.controls.values[k][1] ==
          Catch::Approx(p[1] + x.x1 * p[2]).margin(1e-12));
  }
}

TEST_CASE("direct optimizer on the trivial problem") {
  const DirectResult r = direct_optimize({0.3, 0.3, 0.3}, 0.0, kZeroF, kZeroG, 0.0,
                                         16, 1.0, 1.0, {4, 100, 1e-12, 7});
  CHECK(r.value <= 1e-10);
  CHECK(r.controls.sup_norm() <= 1e-4);
}

TEST_CASE("direct optimizer dominates hand-built candidates") {
  const Instance in = make_instance(77);
  const TimeScalarField f = [&](const HPoint& x, double t) { return in.f(x, t); };
  const ScalarField g = [&](const HPoint& x) { return in.g(x); };
  const int K = 32;
  const DirectResult r = direct_optimize(in.x0, 0.0, f, g, 0.0, K, 2.0);
  for (int c = 0; c < 12; ++c) {
    ControlPath cand = constant_path(rng.uniform(9000 + 2 * c, -0.6, 0.6),
                                     rng.uniform(9001 + 2 * c, -0.6, 0.6), K);
    const Trajectory tr = integrate_trajectory(in.x0, cand);
    CHECK(r.value <= cost(tr, cand, f, g) + 1e-9);
  }
}

TEST_CASE("direct value is invariant under integer translations with periodic data") {
  // Q_H-periodic running and terminal costs: cos(2 pi x1), sin(2 pi x2).
  const TimeScalarField f = [](const HPoint& x, double) {
    return 0.15 * std::cos(kTau * x.x1);
  };
  const ScalarField g = [](const HPoint& x) { return 0.1 * std::sin(kTau * x.x2); };
  const HPoint x0{0.3, 0.6, 0.2};
  const DirectOptions opts{6, 300, 1e-12, 11};
  const double v0 = direct_optimize(x0, 0.0, f, g, 0.0, 32, 1.5, 1.0, opts).value;
  for (const auto& z : {HPoint{1, 0, 0}, HPoint{0, 1, 0}, HPoint{1, -1, 2}}) {
    const double vz =
        direct_optimize(group_mul(z, x0), 0.0, f, g, 0.0, 32, 1.5, 1.0, opts).value;
    CHECK(vz == Catch::Approx(v0).margin(1e-6));
  }
}

TEST_CASE("direct and shooting values agree on smooth instances") {
  const int n = 20;
  std::vector<double> gap(n);
  parallel_for(n, [&](std::size_t i) {
    const Instance in = make_instance(static_cast<int>(i));
    const TimeScalarField f = [&](const HPoint& x, double t) { return in.f(x, t); };
    const TimeVec3Field gf = [&](const HPoint& x, double t) { return in.grad_f(x, t); };
    const ScalarField g = [&](const HPoint& x) { return in.g(x); };
    const Vec3Field gg = [&](const HPoint& x) { return in.grad_g(x); };
    const ShootResult sh = pmp_shoot(in.x0, 0.0, {0, 0, 0}, f, gf, g, gg);
    const DirectResult dr = direct_optimize(in.x0, 0.0, f, g, 0.0, 64, 1.5);
    gap[i] = std::abs(sh.value - dr.value);
  });
  for (int i = 0; i < n; ++i) {
    INFO("instance " << i);
    CHECK(gap[i] <= 1e-3);
  }
}

TEST_CASE("pmp residual of the direct optimum decays like 1/K") {
  const Instance in = make_instance(55);
  const TimeScalarField f = [&](const HPoint& x, double t) { return in.f(x, t); };
  const ScalarField g = [&](const HPoint& x) { return in.g(x); };

  auto residual_at = [&](int K) {
    const DirectResult r =
        direct_optimize(in.x0, 0.0, f, g, 0.0, K, 1.5, 1.0, {6, 800, 1e-13, 3});
    const double h = 1.0 / K;
    // Reconstruct the costate from the controls: p3 integrates f_x3 backward
    // from -g_x3(x(T)); p1, p2 follow from the feedback identities.
    std::vector<Vec3> p(K);
    const Vec3 dgT = in.grad_g(r.trajectory.states[K]);
    double p3 = -dgT[2];
    for (int k = K - 1; k >= 0; --k) {
      const HPoint& xm = r.trajectory.states[k];
      p3 -= h * in.grad_f(xm, k * h)[2];
      // p at the step midpoint uses the step's state start.
      p[k] = {r.controls.values[k][0] + xm.x2 * p3,
              r.controls.values[k][1] - xm.x1 * p3, p3};
    }
    double res = 0.0;
    for (int k = 0; k + 1 < K; ++k) {
      const HPoint& x = r.trajectory.states[k + 1];
      const Vec3 gfk = in.grad_f(x, (k + 1) * h);
      const double a1 = p[k + 1][0] - x.x2 * p[k + 1][2];
      const double a2 = p[k + 1][1] + x.x1 * p[k + 1][2];
      res = std::max(res, std::abs((p[k + 1][0] - p[k][0]) / h -
                                   (-a2 * p[k + 1][2] + gfk[0])));
      res = std::max(res, std::abs((p[k + 1][1] - p[k][1]) / h -
                                   (a1 * p[k + 1][2] + gfk[1])));
    }
    return res;
  };

  const double r32 = residual_at(32);
  const double r64 = residual_at(64);
  const double r128 = residual_at(128);
  INFO("residuals " << r32 << " " << r64 << " " << r128);
  CHECK(r64 <= r32);
  CHECK(r128 <= r64);
  CHECK(r32 / r128 >= 2.0);
}

TEST_CASE("dynamic programming consistency of the direct value") {
  const Instance in = make_instance(3);
  const TimeScalarField f = [&](const HPoint& x, double t) { return in.f(x, t); };
  const ScalarField g = [&](const HPoint& x) { return in.g(x); };
  const int K = 16;
  const double h = 1.0 / K;
  const DirectOptions opts{4, 300, 1e-12, 5};
  for (int s = 0; s < 5; ++s) {
    const HPoint x{rng.uniform(20000 + 3 * s, -0.4, 0.4),
                   rng.uniform(20001 + 3 * s, -0.4, 0.4),
                   rng.uniform(20002 + 3 * s, -0.4, 0.4)};
    const double t = 0.5;
    const int Kt = static_cast<int>(std::lround((1.0 - t) / h));
    const double uxt = direct_optimize(x, t, f, g, 0.0, Kt, 1.5, 1.0, opts).value;
    double best = 1e300;
    for (int d = 0; d < 12; ++d)
      for (int m = 0; m <= 4; ++m) {
        const double r = 1.5 * m / 4.0;
        const double a1 = r * std::cos(kTau * d / 12.0);
        const double a2 = r * std::sin(kTau * d / 12.0);
        const HPoint y = exact_step(x, a1, a2, h);
        const double tail =
            direct_optimize(y, t + h, f, g, 0.0, Kt - 1, 1.5, 1.0, opts).value;
        best = std::min(best, h * (0.5 * r * r + f(x, t)) + tail);
        if (m == 0) break;
      }
    CHECK(uxt == Catch::Approx(best).margin(2e-3));
  }
}

TEST_CASE("optimal tails are recovered after restart when eps > 0") {
  const double eps = 0.5;
  const int n = 20;
  std::vector<double> dev(n);
  parallel_for(n, [&](std::size_t i) {
    const Instance in = make_instance(100 + static_cast<int>(i));
    const TimeScalarField f = [&](const HPoint& x, double t) { return in.f(x, t); };
    const ScalarField g = [&](const HPoint& x) { return in.g(x); };
    const int K = 32;
    const DirectOptions opts{6, 600, 1e-13, 29};
    const DirectResult full = direct_optimize(in.x0, 0.0, f, g, eps, K, 1.5, 1.0, opts);
    const int half = K / 2;
    const HPoint xm = full.trajectory.states[half];
    const DirectResult tail =
        direct_optimize(xm, 0.5, f, g, eps, K - half, 1.5, 1.0, opts);
    double worst = 0.0;
    for (int k = 0; k <= K - half; ++k) {
      const HPoint& a = full.trajectory.states[half + k];
      const HPoint& b = tail.trajectory.states[k];
      worst = std::max({worst, std::abs(a.x1 - b.x1), std::abs(a.x2 - b.x2),
                        std::abs(a.x3 - b.x3)});
    }
    dev[i] = worst;
  });
  for (int i = 0; i < n; ++i) {
    INFO("instance " << i);
    CHECK(dev[i] <= 1e-3);
  }
}

TEST_CASE("synthesis field fixtures") {
  // Spatially constant grid: zero field.
  GridSpec gs;
  gs.mode = GridMode::periodic;
  gs.n1 = gs.n2 = gs.n3 = 8;
  gs.M = 4;
  ValueGrid u(gs);
  for (int j = 0; j <= gs.M; ++j) {
    for (int i1 = 0; i1 < 8; ++i1)
      for (int i2 = 0; i2 < 8; ++i2)
        for (int i3 = 0; i3 < 8; ++i3) u.at(j, i1, i2, i3) = 2.5;
    u.seal_slice(j);
  }
  const Vec3 v = synthesis_field(u, {0.4, 0.3, 0.7}, 0.5);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 0.0);
  CHECK(v[2] == 0.0);

  // u = x3 on a box grid: field = (x2, -x1, -(x1^2 + x2^2 + eps^2)).
  GridSpec bs;
  bs.mode = GridMode::box;
  bs.n1 = bs.n2 = 17;
  bs.n3 = 33;
  bs.lo = {-2, -2, -2};
  bs.hi = {2, 2, 2};
  bs.M = 4;
  ValueGrid ub(bs);
  for (int j = 0; j <= bs.M; ++j)
    for (int i1 = 0; i1 < bs.n1; ++i1)
      for (int i2 = 0; i2 < bs.n2; ++i2)
        for (int i3 = 0; i3 < bs.n3; ++i3)
          ub.at(j, i1, i2, i3) = bs.node(i1, i2, i3).x3;
  const HPoint a{0, 1, 0};
  const Vec3 vb = synthesis_field(ub, a, 0.5, 0.0);
  CHECK(vb[0] == Catch::Approx(1.0).margin(1e-9));
  CHECK(vb[1] == Catch::Approx(0.0).margin(1e-9));
  CHECK(vb[2] == Catch::Approx(-1.0).margin(1e-9));
  CHECK_THROWS_AS(synthesis_field(ub, {5, 0, 0}, 0.5), std::domain_error);
}
