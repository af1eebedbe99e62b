// Lagrangian solution of the continuity equation: push-forward of the initial
// cloud along the optimal-synthesis field (frozen per substep, exact
// horizontal legs), the viscous Euler-Maruyama ensemble, the weak-form
// residual, the Holder-1/4 fit and density snapshots.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hmfg/control.hpp"
#include "hmfg/coupling.hpp"
#include "hmfg/grid.hpp"
#include "hmfg/measures.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/rng.hpp"

namespace hmfg {

struct PathEnsemble {
  std::vector<double> times;                  // M+1
  std::vector<std::vector<HPoint>> paths;     // per particle, M+1 states
  std::vector<std::vector<Vec3>> controls;    // per particle, M realized controls
  std::size_t exits = 0;                      // box-mode leave events (particles)
  std::size_t clamped_steps = 0;              // steps where the cap was active

  std::size_t size() const { return paths.size(); }
};

// Project a control onto the admissible ball of radius cap.
inline bool clamp_control(Vec3& a, double cap) {
  const double nrm = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  if (!(nrm > cap)) return false;
  const double s = cap / nrm;
  a[0] *= s;
  a[1] *= s;
  a[2] *= s;
  return true;
}

struct MeasureFlow {
  std::vector<double> times;
  std::vector<EmpiricalMeasure> snapshots;  // canonical reps in periodic mode

  std::size_t steps() const { return times.size(); }
};

// Rebuild the measure flow from an ensemble (the e_t # eta identity).
inline MeasureFlow flow_from_ensemble(const PathEnsemble& ens, bool periodic) {
  MeasureFlow flow;
  flow.times = ens.times;
  flow.snapshots.resize(ens.times.size());
  for (std::size_t j = 0; j < ens.times.size(); ++j) {
    auto& snap = flow.snapshots[j];
    snap.samples.resize(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i)
      snap.samples[i] = periodic ? canonical_rep(ens.paths[i][j]) : ens.paths[i][j];
  }
  return flow;
}

struct PushForwardResult {
  PathEnsemble ensemble;
  MeasureFlow flow;
};

// Integrate every start along gamma' = synthesis_field(u, gamma, t); the
// field is frozen per substep so each substep is one exact horizontal leg.
// Box mode counts particles that leave the box (field evaluations clamp).
inline PushForwardResult push_forward_from(
    const ValueGrid& u, const std::vector<HPoint>& starts, double eps = 0.0,
    double control_cap = std::numeric_limits<double>::infinity()) {
  const int M = u.spec().M;
  const double dt = u.dt();
  const bool periodic = u.spec().mode == GridMode::periodic;
  PushForwardResult out;
  auto& ens = out.ensemble;
  ens.times.resize(M + 1);
  for (int j = 0; j <= M; ++j) ens.times[j] = u.time_of_slice(j);
  ens.paths.assign(starts.size(), {});
  ens.controls.assign(starts.size(), {});
  std::vector<char> exited(starts.size(), 0);
  std::vector<std::size_t> clamped(starts.size(), 0);

  parallel_for(starts.size(), [&](std::size_t i) {
    auto& path = ens.paths[i];
    auto& ctrl = ens.controls[i];
    path.resize(M + 1);
    ctrl.resize(M);
    path[0] = starts[i];
    for (int j = 0; j < M; ++j) {
      HPoint x = path[j];
      if (!periodic && !u.spec().contains(x)) {
        exited[i] = 1;
        x = HPoint{std::clamp(x.x1, u.spec().lo[0], u.spec().hi[0]),
                   std::clamp(x.x2, u.spec().lo[1], u.spec().hi[1]),
                   std::clamp(x.x3, u.spec().lo[2], u.spec().hi[2])};
      }
      Vec3 a = synthesis_control(u, x, ens.times[j], eps);
      if (clamp_control(a, control_cap)) ++clamped[i];
      ctrl[j] = a;
      path[j + 1] = exact_step(path[j], a[0], a[1], dt, eps, a[2]);
    }
  });
  for (const char e : exited) ens.exits += e;
  for (const std::size_t cl : clamped) ens.clamped_steps += cl;
  out.flow = flow_from_ensemble(ens, periodic);
  return out;
}

inline PushForwardResult push_forward(const ValueGrid& u, const InitialDensity& m0,
                                      std::size_t N, double eps = 0.0) {
  const EmpiricalMeasure starts = m0.sample(N);
  return push_forward_from(u, starts.samples, eps);
}

// A smooth test function on the torus together with its analytic horizontal
// gradient.
struct TestFunction {
  ScalarField value;
  HorizontalField hgrad;
  const char* name = "";
};

// Genuinely Q_H-periodic test basis. Functions of (x1 mod 1, x2 mod 1) are
// periodic outright; x3-sensitive members combine a planar bump supported
// inside the cell with cos(2 pi q3), smooth across every identification.
inline std::vector<TestFunction> default_test_functions() {
  std::vector<TestFunction> fns;
  fns.push_back({[](const HPoint&) { return 1.0; },
                 [](const HPoint&) { return HVector2{0.0, 0.0}; }, "one"});
  fns.push_back({[](const HPoint& x) { return std::cos(kTau * x.x1); },
                 [](const HPoint& x) {
                   return HVector2{-kTau * std::sin(kTau * x.x1), 0.0};
                 },
                 "cos_x1"});
  fns.push_back({[](const HPoint& x) { return std::sin(kTau * x.x2); },
                 [](const HPoint& x) {
                   return HVector2{0.0, kTau * std::cos(kTau * x.x2)};
                 },
                 "sin_x2"});
  // w(q1) w(q2) cos(2 pi q3) with w a C^2 bump vanishing at the cell faces:
  // X1 q3 = -q2, X2 q3 = q1 in the pavage chart.
  auto bump = [](double s) {
    const double c = std::sin(kTau * 0.5 * s);  // sin(pi s), zero at faces
    return c * c;
  };
  auto dbump = [](double s) {
    const double p = kTau * 0.5;
    return 2.0 * std::sin(p * s) * std::cos(p * s) * p;
  };
  fns.push_back(
      {[bump](const HPoint& x) {
         const HPoint q = canonical_rep(x);
         return bump(q.x1) * bump(q.x2) * std::cos(kTau * q.x3);
       },
       [bump, dbump](const HPoint& x) {
         const HPoint q = canonical_rep(x);
         const double c3 = std::cos(kTau * q.x3), s3 = std::sin(kTau * q.x3);
         const double w12 = bump(q.x1) * bump(q.x2);
         const double g1 = dbump(q.x1) * bump(q.x2) * c3 -
                           w12 * kTau * s3 * (-q.x2);
         const double g2 = bump(q.x1) * dbump(q.x2) * c3 -
                           w12 * kTau * s3 * (q.x1);
         return HVector2{g1, g2};
       },
       "bump_cos_q3"});
  return fns;
}

// Max over test functions and interior time midpoints of the discrete
// residual of d/dt int zeta dm = -int D_H u . D_H zeta dm.
inline double weak_residual(const MeasureFlow& flow, const ValueGrid& u,
                            const std::vector<TestFunction>& fns, double eps = 0.0) {
  const std::size_t S = flow.steps();
  if (S < 2) throw std::invalid_argument("weak_residual: need >= 2 snapshots");
  double worst = 0.0;
  for (const auto& fn : fns) {
    std::vector<double> integral(S), flux(S);
    parallel_for(S, [&](std::size_t j) {
      const auto& snap = flow.snapshots[j];
      double iv = 0.0, fv = 0.0;
      for (std::size_t i = 0; i < snap.size(); ++i) {
        const HPoint& p = snap.samples[i];
        iv += fn.value(p);
        // synthesis_field = -D_H u B^T: its first two components are
        // (-X1 u, -X2 u).
        const Vec3 field = synthesis_field(u, p, flow.times[j], eps);
        const HVector2 dz = fn.hgrad(p);
        fv += (-field[0]) * dz.v1 + (-field[1]) * dz.v2;  // D_H u . D_H zeta
      }
      integral[j] = iv / snap.size();
      flux[j] = fv / snap.size();
    });
    for (std::size_t j = 0; j + 1 < S; ++j) {
      const double dtj = flow.times[j + 1] - flow.times[j];
      const double lhs = (integral[j + 1] - integral[j]) / dtj;
      worst = std::max(worst, std::abs(lhs + 0.5 * (flux[j] + flux[j + 1])));
    }
  }
  return worst;
}

// One Euler-Maruyama step per particle of
//   dY = -D_H u B^T dt + sqrt(2 sigma) B(Y) dW,   W a 2-d Wiener process.
// sigma = 0 takes exactly the deterministic branch of push_forward.
inline void sde_step_ensemble(const ValueGrid& u, double sigma,
                              std::vector<HPoint>& particles, double dt, double t,
                              const CounterRng& rng, std::uint64_t step_index,
                              double control_cap = std::numeric_limits<double>::infinity()) {
  if (sigma < 0.0 || dt <= 0.0) throw std::invalid_argument("sde_step_ensemble: sigma/dt");
  parallel_for(particles.size(), [&](std::size_t i) {
    HPoint& y = particles[i];
    Vec3 a = synthesis_control(u, y, t);
    clamp_control(a, control_cap);
    if (sigma == 0.0) {
      y = exact_step(y, a[0], a[1], dt);
      return;
    }
    const std::uint64_t base = (static_cast<std::uint64_t>(i) << 20) + 2 * step_index;
    const double xi1 = rng.normal(base);
    const double xi2 = rng.normal(base + 1);
    const double amp = std::sqrt(2.0 * sigma * dt);
    const double y1 = y.x1, y2 = y.x2;
    y.x1 += a[0] * dt + amp * xi1;
    y.x2 += a[1] * dt + amp * xi2;
    y.x3 += (y1 * a[1] - y2 * a[0]) * dt + amp * (-y2 * xi1 + y1 * xi2);
  });
}

inline MeasureFlow run_sde(const ValueGrid& u, const std::vector<HPoint>& starts,
                           double sigma, std::uint64_t seed) {
  const int M = u.spec().M;
  const double dt = u.dt();
  MeasureFlow flow;
  flow.times.resize(M + 1);
  flow.snapshots.resize(M + 1);
  std::vector<HPoint> ys = starts;
  const CounterRng rng{seed, 0x5DEu};
  const bool periodic = u.spec().mode == GridMode::periodic;
  for (int j = 0; j <= M; ++j) {
    flow.times[j] = u.time_of_slice(j);
    auto& snap = flow.snapshots[j];
    snap.samples.resize(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i)
      snap.samples[i] = periodic ? canonical_rep(ys[i]) : ys[i];
    if (j < M) sde_step_ensemble(u, sigma, ys, dt, flow.times[j], rng, j);
  }
  return flow;
}

// Smallest C with d_1(m_s, m_t) <= C (t-s)^{1/4} over snapshot pairs; the
// flow is thinned to at most `max_snapshots` and clouds to `cloud` atoms.
inline double holder_quarter_check(const MeasureFlow& flow,
                                   GroundMetric metric = GroundMetric::torus,
                                   int max_snapshots = 9, std::size_t cloud = 256) {
  if (flow.steps() < 8) throw std::invalid_argument("holder_quarter_check: need >= 8 snapshots");
  std::vector<std::size_t> pick;
  const std::size_t S = flow.steps();
  const std::size_t count = std::min<std::size_t>(max_snapshots, S);
  for (std::size_t k = 0; k < count; ++k)
    pick.push_back(k * (S - 1) / (count - 1));
  std::vector<EmpiricalMeasure> clouds(pick.size());
  for (std::size_t k = 0; k < pick.size(); ++k) {
    const auto& snap = flow.snapshots[pick[k]];
    clouds[k] = snap.size() > cloud ? resample_with_offset(snap, cloud, 0.5) : snap;
  }
  double C = 0.0;
  for (std::size_t a = 0; a < pick.size(); ++a)
    for (std::size_t b = a + 1; b < pick.size(); ++b) {
      const double gap = flow.times[pick[b]] - flow.times[pick[a]];
      if (gap <= 0.0) continue;
      const double d = wasserstein1(clouds[a], clouds[b], metric);
      C = std::max(C, d / std::pow(gap, 0.25));
    }
  return C;
}

struct DensityGrid {
  int bins = 0;
  std::array<double, 3> lo{}, hi{};
  std::vector<double> mass;  // probability mass per bin, sums to 1

  double max_density() const {
    double vol = 1.0;
    for (int d = 0; d < 3; ++d) vol *= (hi[d] - lo[d]) / bins;
    double m = 0.0;
    for (const double v : mass) m = std::max(m, v);
    return m / vol;
  }
  double total_mass() const {
    double s = 0.0;
    for (const double v : mass) s += v;
    return s;
  }
};

inline DensityGrid density_snapshot(const EmpiricalMeasure& mu, int bins,
                                    bool periodic = true,
                                    std::array<double, 3> lo = {0.0, 0.0, 0.0},
                                    std::array<double, 3> hi = {1.0, 1.0, 1.0}) {
  if (bins < 1) throw std::invalid_argument("density_snapshot: bins");
  DensityGrid g;
  g.bins = bins;
  g.lo = lo;
  g.hi = hi;
  g.mass.assign(static_cast<std::size_t>(bins) * bins * bins, 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    HPoint p = periodic ? canonical_rep(mu.samples[i]) : mu.samples[i];
    int b[3];
    const double c[3] = {p.x1, p.x2, p.x3};
    for (int d = 0; d < 3; ++d) {
      const double f = (c[d] - lo[d]) / (hi[d] - lo[d]);
      b[d] = std::clamp(static_cast<int>(f * bins), 0, bins - 1);
    }
    g.mass[(static_cast<std::size_t>(b[0]) * bins + b[1]) * bins + b[2]] += mu.weight(i);
  }
  return g;
}

}  // namespace hmfg
