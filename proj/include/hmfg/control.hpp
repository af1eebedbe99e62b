// Horizontal dynamics, the running cost, Pontryagin necessary conditions with
// a damped shooting solver, direct trajectory optimization over
// piecewise-constant controls, and the optimal-synthesis feedback field.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hmfg/grid.hpp"
#include "hmfg/hgroup.hpp"
#include "hmfg/rng.hpp"

namespace hmfg {

using TimeScalarField = std::function<double(const HPoint&, double)>;
using TimeVec3Field = std::function<Vec3(const HPoint&, double)>;
using Vec3Field = std::function<Vec3(const HPoint&)>;

// Piecewise-constant control on a uniform grid of K steps over [t0, T].
// Two components drive the horizontal frame; the third is active only in the
// eps-regularized dynamics.
struct ControlPath {
  double t0 = 0.0, T = 1.0;
  std::vector<Vec3> values;  // size K

  int steps() const { return static_cast<int>(values.size()); }
  double dt() const { return (T - t0) / steps(); }

  double sup_norm() const {
    double m = 0.0;
    for (const auto& a : values)
      m = std::max(m, std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]));
    return m;
  }
};

struct Trajectory {
  std::vector<double> times;   // K+1 grid times
  std::vector<HPoint> states;  // K+1 states

  const HPoint& terminal() const { return states.back(); }
};

struct Costate {
  std::vector<double> times;
  std::vector<Vec3> p;
};

// One exact leg of the horizontal dynamics: with constant (a1,a2,a3) on a
// step of length h, x3' = x1 a2 - x2 a1 (+ eps a3) is constant along the leg,
// so the update is the group translation by (a1 h, a2 h, eps a3 h).
inline HPoint exact_step(const HPoint& x, double a1, double a2, double h,
                         double eps = 0.0, double a3 = 0.0) {
  return group_mul(x, {a1 * h, a2 * h, eps * a3 * h});
}

inline Trajectory integrate_trajectory(const HPoint& x0, const ControlPath& alpha,
                                       double eps = 0.0) {
  if (alpha.steps() < 1) throw std::invalid_argument("integrate_trajectory: empty control");
  const int K = alpha.steps();
  const double h = alpha.dt();
  Trajectory tr;
  tr.times.resize(K + 1);
  tr.states.resize(K + 1);
  tr.states[0] = x0;
  tr.times[0] = alpha.t0;
  for (int k = 0; k < K; ++k) {
    const auto& a = alpha.values[k];
    tr.states[k + 1] = exact_step(tr.states[k], a[0], a[1], h, eps, a[2]);
    tr.times[k + 1] = alpha.t0 + (k + 1) * h;
  }
  return tr;
}

// J = sum_k h (|a_k|^2/2 + f trapezoid) + g(x(T)); the kinetic term is exact
// for piecewise-constant controls.
inline double cost(const Trajectory& tr, const ControlPath& alpha,
                   const TimeScalarField& f, const ScalarField& g) {
  if (static_cast<int>(tr.states.size()) != alpha.steps() + 1)
    throw std::invalid_argument("cost: trajectory/control grids differ");
  const int K = alpha.steps();
  const double h = alpha.dt();
  double J = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& a = alpha.values[k];
    const double kin = 0.5 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double frun =
        0.5 * (f(tr.states[k], tr.times[k]) + f(tr.states[k + 1], tr.times[k + 1]));
    J += h * (kin + frun);
  }
  return J + g(tr.terminal());
}

// Right-hand side of the Hamiltonian system (costate form); eps = 0 recovers
// the intrinsic case.
inline void pmp_rhs(const HPoint& x, const Vec3& p, const Vec3& grad_f, double eps,
                    Vec3& dx, Vec3& dp) {
  const double a1 = p[0] - x.x2 * p[2];
  const double a2 = p[1] + x.x1 * p[2];
  dx = {a1, a2,
        (x.x1 * x.x1 + x.x2 * x.x2 + eps * eps) * p[2] + x.x1 * p[1] - x.x2 * p[0]};
  dp = {-a2 * p[2] + grad_f[0], a1 * p[2] + grad_f[1], grad_f[2]};
}

struct ShootResult {
  Trajectory trajectory;
  Costate costate;
  ControlPath controls;
  double residual = 0.0;  // |p(T) + Dg(x(T))|
  double value = 0.0;     // cost along the shot trajectory
  bool converged = false;
  int iterations = 0;
};

namespace detail {

// RK4 integration of the coupled (x, p) system from (x0, p0) at t0.
inline void pmp_integrate(const HPoint& x0, const Vec3& p0, double t0, double T,
                          int K, const TimeVec3Field& grad_f, double eps,
                          std::vector<HPoint>& xs, std::vector<Vec3>& ps) {
  const double h = (T - t0) / K;
  xs.assign(K + 1, x0);
  ps.assign(K + 1, p0);
  auto add = [](const HPoint& x, const Vec3& d, double s) {
    return HPoint{x.x1 + s * d[0], x.x2 + s * d[1], x.x3 + s * d[2]};
  };
  auto addv = [](const Vec3& p, const Vec3& d, double s) {
    return Vec3{p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]};
  };
  for (int k = 0; k < K; ++k) {
    const double t = t0 + k * h;
    Vec3 k1x, k1p, k2x, k2p, k3x, k3p, k4x, k4p;
    pmp_rhs(xs[k], ps[k], grad_f(xs[k], t), eps, k1x, k1p);
    pmp_rhs(add(xs[k], k1x, 0.5 * h), addv(ps[k], k1p, 0.5 * h),
            grad_f(add(xs[k], k1x, 0.5 * h), t + 0.5 * h), eps, k2x, k2p);
    pmp_rhs(add(xs[k], k2x, 0.5 * h), addv(ps[k], k2p, 0.5 * h),
            grad_f(add(xs[k], k2x, 0.5 * h), t + 0.5 * h), eps, k3x, k3p);
    pmp_rhs(add(xs[k], k3x, h), addv(ps[k], k3p, h),
            grad_f(add(xs[k], k3x, h), t + h), eps, k4x, k4p);
    for (int c = 0; c < 3; ++c) {
      const double dx = (k1x[c] + 2.0 * k2x[c] + 2.0 * k3x[c] + k4x[c]) / 6.0;
      const double dp = (k1p[c] + 2.0 * k2p[c] + 2.0 * k3p[c] + k4p[c]) / 6.0;
      if (c == 0) xs[k + 1].x1 = xs[k].x1 + h * dx;
      if (c == 1) xs[k + 1].x2 = xs[k].x2 + h * dx;
      if (c == 2) xs[k + 1].x3 = xs[k].x3 + h * dx;
      ps[k + 1][c] = ps[k][c] + h * dp;
    }
  }
}

inline Vec3 boundary_residual(const std::vector<HPoint>& xs, const std::vector<Vec3>& ps,
                              const Vec3Field& grad_g) {
  const Vec3 dg = grad_g(xs.back());
  return {ps.back()[0] + dg[0], ps.back()[1] + dg[1], ps.back()[2] + dg[2]};
}

inline double norm3(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

}  // namespace detail

// Damped (Levenberg-style) Gauss-Newton shooting on the initial costate.
inline ShootResult pmp_shoot(const HPoint& x0, double t0, Vec3 p_guess,
                             const TimeScalarField& f, const TimeVec3Field& grad_f,
                             const ScalarField& g, const Vec3Field& grad_g,
                             double T = 1.0, double eps = 0.0, int K = 128,
                             int max_iters = 60, double tol = 1e-10) {
  std::vector<HPoint> xs;
  std::vector<Vec3> ps;
  Vec3 p = p_guess;
  detail::pmp_integrate(x0, p, t0, T, K, grad_f, eps, xs, ps);
  Vec3 r = detail::boundary_residual(xs, ps, grad_g);
  double rn = detail::norm3(r);
  double lambda = 1e-3;
  int it = 0;
  for (; it < max_iters && rn > tol; ++it) {
    // Finite-difference Jacobian of the residual in p_guess.
    double Jm[3][3];
    const double dfd = 1e-6 * (1.0 + detail::norm3(p));
    for (int c = 0; c < 3; ++c) {
      Vec3 pc = p;
      pc[c] += dfd;
      std::vector<HPoint> xs2;
      std::vector<Vec3> ps2;
      detail::pmp_integrate(x0, pc, t0, T, K, grad_f, eps, xs2, ps2);
      const Vec3 rc = detail::boundary_residual(xs2, ps2, grad_g);
      for (int rr = 0; rr < 3; ++rr) Jm[rr][c] = (rc[rr] - r[rr]) / dfd;
    }
    bool stepped = false;
    for (int tries = 0; tries < 12 && !stepped; ++tries) {
      // Solve (J^T J + lambda I) dp = -J^T r via explicit 3x3 elimination.
      double A[3][3], b[3];
      for (int i = 0; i < 3; ++i) {
        b[i] = 0.0;
        for (int j = 0; j < 3; ++j) {
          A[i][j] = 0.0;
          for (int k = 0; k < 3; ++k) A[i][j] += Jm[k][i] * Jm[k][j];
        }
        A[i][i] += lambda;
        for (int k = 0; k < 3; ++k) b[i] -= Jm[k][i] * r[k];
      }
      // Gaussian elimination with partial pivoting.
      int piv[3] = {0, 1, 2};
      for (int cdx = 0; cdx < 3; ++cdx) {
        int best = cdx;
        for (int rdx = cdx + 1; rdx < 3; ++rdx)
          if (std::abs(A[piv[rdx]][cdx]) > std::abs(A[piv[best]][cdx])) best = rdx;
        std::swap(piv[cdx], piv[best]);
        const double d = A[piv[cdx]][cdx];
        if (d == 0.0) break;
        for (int rdx = cdx + 1; rdx < 3; ++rdx) {
          const double fac = A[piv[rdx]][cdx] / d;
          for (int k = cdx; k < 3; ++k) A[piv[rdx]][k] -= fac * A[piv[cdx]][k];
          b[piv[rdx]] -= fac * b[piv[cdx]];
        }
      }
      Vec3 dp{};
      for (int cdx = 2; cdx >= 0; --cdx) {
        double s = b[piv[cdx]];
        for (int k = cdx + 1; k < 3; ++k) s -= A[piv[cdx]][k] * dp[k];
        dp[cdx] = A[piv[cdx]][cdx] != 0.0 ? s / A[piv[cdx]][cdx] : 0.0;
      }
      const Vec3 pc{p[0] + dp[0], p[1] + dp[1], p[2] + dp[2]};
      std::vector<HPoint> xs2;
      std::vector<Vec3> ps2;
      detail::pmp_integrate(x0, pc, t0, T, K, grad_f, eps, xs2, ps2);
      const Vec3 rc = detail::boundary_residual(xs2, ps2, grad_g);
      const double rcn = detail::norm3(rc);
      if (rcn < rn) {
        p = pc;
        xs.swap(xs2);
        ps.swap(ps2);
        r = rc;
        rn = rcn;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) break;
  }

  ShootResult out;
  out.iterations = it;
  out.residual = rn;
  out.converged = rn <= tol;
  const int Kc = K;
  out.trajectory.times.resize(Kc + 1);
  out.trajectory.states = xs;
  out.costate.times.resize(Kc + 1);
  out.costate.p = ps;
  out.controls.t0 = t0;
  out.controls.T = T;
  out.controls.values.resize(Kc);
  const double h = (T - t0) / Kc;
  for (int k = 0; k <= Kc; ++k) {
    out.trajectory.times[k] = t0 + k * h;
    out.costate.times[k] = t0 + k * h;
  }
  // Feedback recovery alpha = (p1 - x2 p3, p2 + x1 p3, eps p3) at step starts.
  for (int k = 0; k < Kc; ++k) {
    const HPoint& x = xs[k];
    const Vec3& pk = ps[k];
    out.controls.values[k] = {pk[0] - x.x2 * pk[2], pk[1] + x.x1 * pk[2], eps * pk[2]};
  }
  // Cost along the RK4 solution, trapezoid in time with node controls.
  double J = 0.0;
  for (int k = 0; k < Kc; ++k) {
    auto kin = [&](int idx) {
      const HPoint& x = xs[idx];
      const Vec3& pk = ps[idx];
      const double a1 = pk[0] - x.x2 * pk[2];
      const double a2 = pk[1] + x.x1 * pk[2];
      const double a3 = eps * pk[2];
      return 0.5 * (a1 * a1 + a2 * a2 + a3 * a3);
    };
    J += h * 0.5 *
         (kin(k) + f(xs[k], t0 + k * h) + kin(k + 1) + f(xs[k + 1], t0 + (k + 1) * h));
  }
  out.value = J + g(xs.back());
  return out;
}

struct DirectOptions {
  int multi_starts = 8;
  int max_sweeps = 400;
  double value_tol = 1e-11;
  std::uint64_t seed = 2024;
};

struct DirectResult {
  ControlPath controls;
  Trajectory trajectory;
  double value = 0.0;
};

// Multi-start coordinatewise descent with a projected parabolic line search
// over piecewise-constant controls, sup-norm bounded by `bound`.
inline DirectResult direct_optimize(const HPoint& x0, double t0,
                                    const TimeScalarField& f, const ScalarField& g,
                                    double eps, int K, double bound, double T = 1.0,
                                    const DirectOptions& opts = {}) {
  if (!(bound > 0.0)) throw std::invalid_argument("direct_optimize: bound must be > 0");
  const int ncomp = eps > 0.0 ? 3 : 2;
  const double h = (T - t0) / K;

  struct Workspace {
    std::vector<HPoint> states;   // K+1
    std::vector<double> fvals;    // K+1
    std::vector<Vec3> alpha;      // K
    double gval = 0.0;
  };

  auto recompute_from = [&](Workspace& w, int k0) {
    for (int k = k0; k < K; ++k) {
      const auto& a = w.alpha[k];
      w.states[k + 1] = exact_step(w.states[k], a[0], a[1], h, eps, a[2]);
      w.fvals[k + 1] = f(w.states[k + 1], t0 + (k + 1) * h);
    }
    w.gval = g(w.states[K]);
  };
  auto total_cost = [&](const Workspace& w) {
    double J = 0.0;
    for (int k = 0; k < K; ++k) {
      const auto& a = w.alpha[k];
      J += h * (0.5 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) +
                0.5 * (w.fvals[k] + w.fvals[k + 1]));
    }
    return J + w.gval;
  };

  DirectResult best;
  best.value = std::numeric_limits<double>::infinity();
  const CounterRng rng{opts.seed, 0x5eedu};

  for (int start = 0; start < opts.multi_starts; ++start) {
    Workspace w;
    w.states.assign(K + 1, x0);
    w.fvals.assign(K + 1, 0.0);
    w.alpha.assign(K, Vec3{0.0, 0.0, 0.0});
    if (start > 0) {
      const double amp = bound * 0.3 * (start % 4 + 1) / 4.0;
      for (int k = 0; k < K; ++k)
        for (int c = 0; c < ncomp; ++c)
          w.alpha[k][c] = rng.uniform((static_cast<std::uint64_t>(start) << 32) +
                                          3 * k + c,
                                      -amp, amp);
    }
    w.fvals[0] = f(x0, t0);
    recompute_from(w, 0);
    double J = total_cost(w);

    double step = bound / 4.0;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      double improved = 0.0;
      for (int k = 0; k < K; ++k) {
        for (int c = 0; c < ncomp; ++c) {
          const double a0 = w.alpha[k][c];
          auto eval_at = [&](double av) {
            w.alpha[k][c] = av;
            recompute_from(w, k);
            return total_cost(w);
          };
          const double vp = eval_at(a0 + step);
          const double vm = eval_at(a0 - step);
          double cand = a0;
          const double curv = vp - 2.0 * J + vm;
          if (curv > 1e-300) {
            cand = a0 - step * (vp - vm) / (2.0 * curv);
          } else if (vp < vm) {
            cand = a0 + 2.0 * step;
          } else if (vm < vp) {
            cand = a0 - 2.0 * step;
          }
          // Project the full control vector onto the sup-norm ball.
          Vec3 trial = w.alpha[k];
          trial[c] = cand;
          const double nrm = std::sqrt(trial[0] * trial[0] + trial[1] * trial[1] +
                                       trial[2] * trial[2]);
          if (nrm > bound) trial[c] = cand * bound / nrm;
          const double vc = eval_at(trial[c]);
          double bestv = J, besta = a0;
          if (vp < bestv && std::abs(a0 + step) <= bound * 1.0000001) { bestv = vp; besta = a0 + step; }
          if (vm < bestv && std::abs(a0 - step) <= bound * 1.0000001) { bestv = vm; besta = a0 - step; }
          if (vc < bestv) { bestv = vc; besta = trial[c]; }
          improved += J - bestv;
          J = eval_at(besta);
        }
      }
      if (improved < opts.value_tol * (1.0 + std::abs(J))) {
        if (step < 1e-7 * bound) break;
        step *= 0.25;
      }
    }
    if (J < best.value) {
      best.value = J;
      best.controls.t0 = t0;
      best.controls.T = T;
      best.controls.values = w.alpha;
      best.trajectory.times.resize(K + 1);
      for (int k = 0; k <= K; ++k) best.trajectory.times[k] = t0 + k * h;
      best.trajectory.states = w.states;
    }
  }
  return best;
}

// Feedback field of the optimal synthesis. Periodic/intrinsic mode:
// -D_H u B^T from horizontal central differences of the interpolated grid;
// eps mode: -Du B^eps (B^eps)^T from Euclidean central differences.
inline Vec3 synthesis_field(const ValueGrid& u, const HPoint& a, double t,
                            double eps = 0.0, double fd_step = 0.0) {
  const double hfd = fd_step > 0.0 ? fd_step : 0.5 * u.spec().min_spacing();
  if (u.spec().mode == GridMode::box && !u.spec().contains(a))
    throw std::domain_error("synthesis_field: point outside box");
  if (u.spec().mode == GridMode::periodic) {
    const double g1 =
        (u.value(group_mul(a, {hfd, 0.0, 0.0}), t) - u.value(group_mul(a, {-hfd, 0.0, 0.0}), t)) /
        (2.0 * hfd);
    const double g2 =
        (u.value(group_mul(a, {0.0, hfd, 0.0}), t) - u.value(group_mul(a, {0.0, -hfd, 0.0}), t)) /
        (2.0 * hfd);
    return {-g1, -g2, a.x2 * g1 - a.x1 * g2};
  }
  Vec3 du{};
  const HPoint dx1p{a.x1 + hfd, a.x2, a.x3}, dx1m{a.x1 - hfd, a.x2, a.x3};
  const HPoint dx2p{a.x1, a.x2 + hfd, a.x3}, dx2m{a.x1, a.x2 - hfd, a.x3};
  const HPoint dx3p{a.x1, a.x2, a.x3 + hfd}, dx3m{a.x1, a.x2, a.x3 - hfd};
  du[0] = (u.value(dx1p, t) - u.value(dx1m, t)) / (2.0 * hfd);
  du[1] = (u.value(dx2p, t) - u.value(dx2m, t)) / (2.0 * hfd);
  du[2] = (u.value(dx3p, t) - u.value(dx3m, t)) / (2.0 * hfd);
  const double s = a.x1 * a.x1 + a.x2 * a.x2 + eps * eps;
  return {-(du[0] - a.x2 * du[2]), -(du[1] + a.x1 * du[2]),
          -(a.x1 * du[1] - a.x2 * du[0] + s * du[2])};
}

// The realized feedback control (2 horizontal components, plus eps p3-like
// third in eps mode), consistent with the synthesis field.
inline Vec3 synthesis_control(const ValueGrid& u, const HPoint& a, double t,
                              double eps = 0.0, double fd_step = 0.0) {
  const Vec3 v = synthesis_field(u, a, t, eps, fd_step);
  if (u.spec().mode == GridMode::periodic) return {v[0], v[1], 0.0};
  // v = -Du B (B)^T; recover alpha = -Du B^eps from the first two components
  // and the vertical part.
  const double hfd = fd_step > 0.0 ? fd_step : 0.5 * u.spec().min_spacing();
  const HPoint dx3p{a.x1, a.x2, a.x3 + hfd}, dx3m{a.x1, a.x2, a.x3 - hfd};
  const double du3 = (u.value(dx3p, t) - u.value(dx3m, t)) / (2.0 * hfd);
  return {v[0], v[1], -eps * du3};
}

}  // namespace hmfg
