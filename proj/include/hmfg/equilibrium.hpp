// Constructive equilibrium driver: damped Picard / fictitious-play iteration
// on measure flows, with mild-solution certification of the final ensemble.
//
// The averaging step realizes (1-theta) m^k + theta m_hat on particle clouds
// by a per-index subsampled union: every iteration pushes the same initial
// particles, so index i refers to the same agent across iterations and the
// mixed flow swaps exactly a theta-fraction of indices. d_1 between
// consecutive flows then scales with theta instead of the 1/N^(1/3)
// resampling noise floor.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hmfg/config.hpp"
#include "hmfg/control.hpp"
#include "hmfg/coupling.hpp"
#include "hmfg/hjb.hpp"
#include "hmfg/measures.hpp"
#include "hmfg/transport.hpp"

namespace hmfg {

struct GapStats {
  double mean = 0.0;
  double p95 = 0.0;
  double max = -1e300;
  double min = 1e300;
  std::size_t count = 0;
};

// Build per-slice coupling fields F[m_t] from a measure flow, thinning each
// snapshot to `cloud` atoms by a fixed stride (the same indices every
// iteration, so the thinning is a deterministic perturbation of the map).
inline std::vector<CouplingField> fields_from_flow(const MeasureFlow& flow,
                                                   const GaugeKernel& kernel,
                                                   CouplingMode mode, double strength,
                                                   std::size_t cloud) {
  std::vector<CouplingField> fields(flow.steps());
  parallel_for(flow.steps(), [&](std::size_t j) {
    const auto& snap = flow.snapshots[j];
    const EmpiricalMeasure thin =
        snap.size() > cloud ? resample_with_offset(snap, cloud, 0.5) : snap;
    fields[j] = CouplingField(kernel, mode, strength, thin);
  });
  return fields;
}

// Cost of a realized arc against the time-indexed running coupling and the
// terminal coupling, minus the grid value at the start: the mild-solution gap.
inline GapStats certify_mild(const PathEnsemble& ens, const ValueGrid& u,
                             const std::vector<CouplingField>& F_slices,
                             const CouplingField& G_field,
                             std::size_t sample = 512) {
  if (ens.size() == 0) throw std::invalid_argument("certify_mild: empty ensemble");
  if (F_slices.size() != ens.times.size())
    throw std::invalid_argument("certify_mild: field/ensemble grids differ");
  const std::size_t stride = std::max<std::size_t>(1, ens.size() / sample);
  std::vector<double> gaps;
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; i < ens.size(); i += stride) picks.push_back(i);
  gaps.resize(picks.size());
  const int M = static_cast<int>(ens.times.size()) - 1;
  const double dt = ens.times[1] - ens.times[0];
  parallel_for(picks.size(), [&](std::size_t w) {
    const std::size_t i = picks[w];
    const auto& path = ens.paths[i];
    const auto& ctrl = ens.controls[i];
    double J = 0.0;
    double f_prev = F_slices[0].value(path[0]);
    for (int k = 0; k < M; ++k) {
      const auto& a = ctrl[k];
      const double f_next = F_slices[k + 1].value(path[k + 1]);
      J += dt * (0.5 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) +
                 0.5 * (f_prev + f_next));
      f_prev = f_next;
    }
    J += G_field.value(path[M]);
    gaps[w] = J - u.value(path[0], 0.0);
  });
  GapStats st;
  st.count = gaps.size();
  for (const double g : gaps) {
    st.mean += g;
    st.max = std::max(st.max, g);
    st.min = std::min(st.min, g);
  }
  st.mean /= gaps.size();
  std::vector<double> sorted(gaps);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t idx =
      std::min(sorted.size() - 1,
               static_cast<std::size_t>(std::ceil(0.95 * sorted.size())) - 1);
  st.p95 = sorted[idx];
  return st;
}

struct EquilibriumReport {
  int schema_version = 1;
  std::vector<double> residuals;  // r_k per iteration
  bool converged = false;
  int iterations = 0;
  GapStats mild;
  LipschitzEstimate lipschitz;
  double semiconcavity = 0.0;
  double holder_C = 0.0;
  double density_sup = 0.0;  // empirical C0 over snapshots
  std::size_t exits = 0;
  double second_moment_max = 0.0;
  double trunc_violations = 0.0;  // fraction of samples with |x1|,|x2| > n_trunc
  double control_sup = 0.0;   // max realized |alpha|; audits the safe radius
  double clamp_fraction = 0.0;  // fraction of steps where the cap was active
};

struct EquilibriumResult {
  EquilibriumReport report;
  ValueGrid u;
  MeasureFlow flow;  // final push-forward flow, e_t # eta
  PathEnsemble ensemble;
  std::vector<MeasureFlow> flow_archive;  // iterates m^0, m^1, ... when enabled
};

inline EquilibriumResult solve_equilibrium(const RunConfig& cfg) {
  cfg.validate();
  const bool periodic = cfg.mode == CouplingMode::periodic;
  const GroundMetric metric = periodic ? GroundMetric::torus : GroundMetric::euclidean;

  InitialDensity m0;
  m0.mode = cfg.mode;
  m0.seed = cfg.seed;
  const EmpiricalMeasure starts_mu = m0.sample(cfg.N);
  const std::vector<HPoint>& starts = starts_mu.samples;

  HjbConfig hjb;
  hjb.grid = cfg.grid_spec();
  hjb.control_bound = cfg.control_bound;
  hjb.n_directions = cfg.control_dirs;
  hjb.n_magnitudes = cfg.control_mags;
  hjb.eps = cfg.eps;

  // Solver-internal kernels: tabulated exp with a tighter cutoff; relative
  // field error ~1e-5, far below the scheme error.
  GaugeKernel kernel_f{cfg.kernel_eps_f};
  GaugeKernel kernel_g{cfg.kernel_eps_g};
  kernel_f.fast_exp = kernel_g.fast_exp = true;
  kernel_f.cutoff_exponent = kernel_g.cutoff_exponent = 22.0;

  // m^0: every snapshot is the initial cloud.
  MeasureFlow current;
  current.times.resize(cfg.M + 1);
  current.snapshots.assign(cfg.M + 1, EmpiricalMeasure{});
  for (int j = 0; j <= cfg.M; ++j) {
    current.times[j] = cfg.T * j / cfg.M;
    current.snapshots[j].samples.resize(cfg.N);
    for (std::size_t i = 0; i < cfg.N; ++i)
      current.snapshots[j].samples[i] =
          periodic ? canonical_rep(starts[i]) : starts[i];
  }

  EquilibriumResult out;
  const double dt = cfg.T / cfg.M;
  if (cfg.archive_flows) out.flow_archive.push_back(current);

  std::vector<CouplingField> F_fields;
  CouplingField G_field;
  PushForwardResult pushed;

  for (int k = 1; k <= cfg.fp_max_iters; ++k) {
    F_fields = fields_from_flow(current, kernel_f, cfg.mode, cfg.strength_f,
                                cfg.coupling_cloud);
    {
      const auto& snapT = current.snapshots[cfg.M];
      const EmpiricalMeasure thin =
          snapT.size() > cfg.coupling_cloud
              ? resample_with_offset(snapT, cfg.coupling_cloud, 0.5)
              : snapT;
      G_field = CouplingField(kernel_g, cfg.mode, cfg.strength_g, thin);
    }
    const auto F = [&](const HPoint& x, double t) {
      const int j = static_cast<int>(std::lround(t / dt));
      return F_fields[std::min<std::size_t>(j, F_fields.size() - 1)].value(x);
    };
    const auto G = [&](const HPoint& x) { return G_field.value(x); };

    out.u = solve_hjb(F, G, hjb);
    pushed = push_forward_from(out.u, starts, cfg.eps, cfg.control_bound);
    if (!periodic && pushed.ensemble.exits > cfg.N / 1000)
      throw std::runtime_error("solve_equilibrium: box exits exceed 0.1% of particles");

    const double theta = cfg.fp_damping == DampingSchedule::fictitious
                             ? 1.0 / (k + 1.0)
                             : cfg.fp_damping_factor;
    // Low-discrepancy index selection: a Weyl sequence spreads the swapped
    // theta-fraction evenly over particle indices, iteration by iteration.
    MeasureFlow next = current;
    constexpr double kGolden = 0.6180339887498948482;
    const double shift = std::fmod(k * kGolden * kGolden, 1.0);
    for (std::size_t i = 0; i < cfg.N; ++i) {
      const double s = std::fmod(static_cast<double>(i) * kGolden + shift, 1.0);
      if (s >= theta) continue;
      for (int j = 0; j <= cfg.M; ++j)
        next.snapshots[j].samples[i] = pushed.flow.snapshots[j].samples[i];
    }

    double r = 0.0;
    std::vector<double> rj(cfg.M + 1, 0.0);
    parallel_for(static_cast<std::size_t>(cfg.M + 1), [&](std::size_t j) {
      rj[j] = wasserstein1(next.snapshots[j], current.snapshots[j], metric);
    });
    for (const double v : rj) r = std::max(r, v);

    current = std::move(next);
    if (cfg.archive_flows) out.flow_archive.push_back(current);
    out.report.residuals.push_back(r);
    out.report.iterations = k;
    if (r <= cfg.fp_tol) {
      out.report.converged = true;
      break;
    }
  }

  out.flow = std::move(pushed.flow);
  out.ensemble = std::move(pushed.ensemble);
  out.report.exits = out.ensemble.exits;
  for (const auto& ctrl : out.ensemble.controls)
    for (const auto& a : ctrl)
      out.report.control_sup =
          std::max(out.report.control_sup,
                   std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]));
  out.report.clamp_fraction = static_cast<double>(out.ensemble.clamped_steps) /
                              (static_cast<double>(cfg.N) * cfg.M);
  out.report.mild =
      certify_mild(out.ensemble, out.u, F_fields, G_field, cfg.certify_sample);
  out.report.lipschitz = estimate_lipschitz(out.u);
  out.report.semiconcavity = estimate_semiconcavity(out.u, 0.0);
  out.report.holder_C = holder_quarter_check(out.flow, metric);
  for (const auto& snap : out.flow.snapshots) {
    if (periodic) {
      out.report.density_sup =
          std::max(out.report.density_sup, density_snapshot(snap, 8).max_density());
    } else {
      out.report.density_sup = std::max(
          out.report.density_sup,
          density_snapshot(snap, 8, false, cfg.box_lo, cfg.box_hi).max_density());
      out.report.second_moment_max =
          std::max(out.report.second_moment_max, second_moment(snap));
      std::size_t bad = 0;
      for (const auto& p : snap.samples)
        if (std::abs(p.x1) > cfg.n_trunc || std::abs(p.x2) > cfg.n_trunc) ++bad;
      out.report.trunc_violations = std::max(
          out.report.trunc_violations, static_cast<double>(bad) / snap.size());
    }
  }
  return out;
}

}  // namespace hmfg
