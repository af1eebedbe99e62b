// Backward semi-Lagrangian solver for the noncoercive Hamilton-Jacobi
// equation -du/dt + |D_H u|^2/2 = F (and its eps-regularized variant), plus
// periodicity, Lipschitz and semiconcavity diagnostics.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hmfg/control.hpp"
#include "hmfg/grid.hpp"
#include "hmfg/parallel.hpp"

namespace hmfg {

struct HjbConfig {
  GridSpec grid;
  double control_bound = 2.0;
  int n_directions = 32;
  int n_magnitudes = 4;
  double eps = 0.0;  // third-control channel in box mode

  void validate() const {
    grid.validate();
    if (!(control_bound > 0.0)) throw std::invalid_argument("HjbConfig: control_bound");
    if (n_directions < 4 || n_magnitudes < 1) throw std::invalid_argument("HjbConfig: control set");
    // Semi-Lagrangian feet must stay within a fraction of the domain per step.
    for (int d = 0; d < 2; ++d) {
      const double extent = grid.mode == GridMode::periodic ? 1.0 : grid.hi[d] - grid.lo[d];
      if (control_bound * grid.dt() > 0.5 * extent)
        throw std::invalid_argument("HjbConfig: control_bound * dt exceeds half extent");
    }
  }
};

namespace detail {

struct Candidate {
  double a1, a2, a3;
  double run;  // dt * |a|^2 / 2
};

// Fixed per-slice control set: {0} plus n_mags radii x n_dirs directions,
// rotated by the golden angle fraction each step so that direction error
// averages out along trajectories instead of locking.
inline std::vector<Candidate> control_set(const HjbConfig& cfg, int slice) {
  constexpr double golden = 0.6180339887498948482;
  const double dt = cfg.grid.dt();
  std::vector<Candidate> cs;
  const double step_angle = kTau / cfg.n_directions;
  const double offset = golden * slice * step_angle;
  std::vector<std::array<double, 2>> planar;
  planar.push_back({0.0, 0.0});
  for (int m = 1; m <= cfg.n_magnitudes; ++m) {
    const double r = cfg.control_bound * m / cfg.n_magnitudes;
    for (int d = 0; d < cfg.n_directions; ++d) {
      const double th = step_angle * d + offset;
      planar.push_back({r * std::cos(th), r * std::sin(th)});
    }
  }
  std::vector<double> thirds;
  if (cfg.eps > 0.0)
    thirds = {0.0, -0.5 * cfg.control_bound, 0.5 * cfg.control_bound};
  else
    thirds = {0.0};
  cs.reserve(planar.size() * thirds.size());
  for (const double a3 : thirds)
    for (const auto& pl : planar)
      cs.push_back({pl[0], pl[1], a3,
                    dt * 0.5 * (pl[0] * pl[0] + pl[1] * pl[1] + a3 * a3)});
  return cs;
}

}  // namespace detail

inline ValueGrid solve_hjb(const TimeScalarField& F, const ScalarField& G,
                           const HjbConfig& cfg) {
  cfg.validate();
  ValueGrid u(cfg.grid);
  const GridSpec& gs = cfg.grid;
  const int M = gs.M;
  const double dt = gs.dt();

  // Terminal slice.
  parallel_for(static_cast<std::size_t>(gs.n1), [&](std::size_t i1) {
    for (int i2 = 0; i2 < gs.n2; ++i2)
      for (int i3 = 0; i3 < gs.n3; ++i3)
        u.at(M, static_cast<int>(i1), i2, i3) = G(gs.node(static_cast<int>(i1), i2, i3));
  });
  u.seal_slice(M);

  for (int j = M - 1; j >= 0; --j) {
    const double t = dt * j;
    const auto candidates = detail::control_set(cfg, j);
    parallel_for(static_cast<std::size_t>(gs.n1), [&](std::size_t i1w) {
      const int i1 = static_cast<int>(i1w);
      for (int i2 = 0; i2 < gs.n2; ++i2)
        for (int i3 = 0; i3 < gs.n3; ++i3) {
          const HPoint x = gs.node(i1, i2, i3);
          double best = std::numeric_limits<double>::infinity();
          for (const auto& c : candidates) {
            const HPoint foot = exact_step(x, c.a1, c.a2, dt, cfg.eps, c.a3);
            const double v = c.run + u.interpolate(j + 1, foot);
            if (v < best) best = v;
          }
          u.at(j, i1, i2, i3) = dt * F(x, t) + best;
        }
    });
    u.seal_slice(j);
  }
  return u;
}

// Max interpolated deviation |u(z (+) x, t) - u(x, t)| over random samples and
// translates z in {-1,0,1}^3. Exact by the pavage construction; this guards
// the canonicalization-interpolation path.
inline double check_periodicity(const ValueGrid& u, int samples = 200,
                                std::uint64_t seed = 7) {
  if (u.spec().mode != GridMode::periodic)
    throw std::invalid_argument("check_periodicity: periodic grids only");
  const CounterRng rng{seed, 0xC0DEu};
  double dev = 0.0;
  for (int s = 0; s < samples; ++s) {
    const HPoint x{rng.uniform(4 * s), rng.uniform(4 * s + 1), rng.uniform(4 * s + 2)};
    const double t = rng.uniform(4 * s + 3) * u.spec().T;
    const double ux = u.value(x, t);
    for (int z1 = -1; z1 <= 1; ++z1)
      for (int z2 = -1; z2 <= 1; ++z2)
        for (int z3 = -1; z3 <= 1; ++z3) {
          const HPoint zx = group_mul(lattice_point(z1, z2, z3), x);
          dev = std::max(dev, std::abs(u.value(zx, t) - ux));
        }
  }
  return dev;
}

struct LipschitzEstimate {
  double Lx = 0.0;
  double Lt = 0.0;  // scaled by 1/(1+x1^2+x2^2) in box mode
};

inline LipschitzEstimate estimate_lipschitz(const ValueGrid& u) {
  const GridSpec& gs = u.spec();
  LipschitzEstimate est;
  const bool box = gs.mode == GridMode::box;
  for (int j = 0; j <= gs.M; ++j) {
    for (int i1 = 0; i1 < gs.n1; ++i1)
      for (int i2 = 0; i2 < gs.n2; ++i2)
        for (int i3 = 0; i3 < gs.n3; ++i3) {
          const double v = u.at(j, i1, i2, i3);
          const int lim1 = box ? gs.n1 - 1 : gs.n1;
          const int lim2 = box ? gs.n2 - 1 : gs.n2;
          const int lim3 = box ? gs.n3 - 1 : gs.n3;
          if (i1 + 1 <= lim1)
            est.Lx = std::max(est.Lx,
                              std::abs(u.chart_value(j, i1 + 1, i2, i3) - v) / gs.spacing(0));
          if (i2 + 1 <= lim2)
            est.Lx = std::max(est.Lx,
                              std::abs(u.chart_value(j, i1, i2 + 1, i3) - v) / gs.spacing(1));
          if (i3 + 1 <= lim3)
            est.Lx = std::max(est.Lx,
                              std::abs(u.chart_value(j, i1, i2, i3 + 1) - v) / gs.spacing(2));
          if (j + 1 <= gs.M) {
            double rt = std::abs(u.at(j + 1, i1, i2, i3) - v) / gs.dt();
            if (box) {
              const HPoint x = gs.node(i1, i2, i3);
              rt /= 1.0 + x.x1 * x.x1 + x.x2 * x.x2;
            }
            est.Lt = std::max(est.Lt, rt);
          }
        }
  }
  return est;
}

// Largest axis-direction second difference quotient at a time slice; the
// empirical semiconcavity constant in the standard linear-modulus form.
inline double estimate_semiconcavity(const ValueGrid& u, double t) {
  const GridSpec& gs = u.spec();
  const int j = u.slice_of_time(t);
  double c = -std::numeric_limits<double>::infinity();
  const bool box = gs.mode == GridMode::box;
  for (int i1 = box ? 1 : 0; i1 < (box ? gs.n1 - 1 : gs.n1); ++i1)
    for (int i2 = box ? 1 : 0; i2 < (box ? gs.n2 - 1 : gs.n2); ++i2)
      for (int i3 = box ? 1 : 0; i3 < (box ? gs.n3 - 1 : gs.n3); ++i3) {
        const double v = u.at(j, i1, i2, i3);
        auto second = [&](int d1, int d2, int d3, double h) {
          const double vp = u.chart_value(j, i1 + d1, i2 + d2, i3 + d3);
          const double vm = u.chart_value(j, i1 - d1, i2 - d2, i3 - d3);
          return (vp + vm - 2.0 * v) / (h * h);
        };
        c = std::max(c, second(1, 0, 0, gs.spacing(0)));
        c = std::max(c, second(0, 1, 0, gs.spacing(1)));
        c = std::max(c, second(0, 0, 1, gs.spacing(2)));
      }
  return c;
}

}  // namespace hmfg
