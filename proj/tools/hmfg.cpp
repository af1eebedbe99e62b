// hmfg: mean field games on the Heisenberg group.
//
// Subcommands:
//   solve        full equilibrium run from a config file
//   hjb          single Hamilton-Jacobi solve against a frozen measure file
//   transport    push-forward of m0 under a stored value grid
//   sde          viscous ensembles for a sigma list under a stored value grid
//   verify       group/convolution identity suites (pass/fail table)
//   wasserstein  d_1 between two sample files
//
// Exit codes: 0 ok, 1 configuration/input error, 2 certification failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmfg/config.hpp"
#include "hmfg/equilibrium.hpp"
#include "hmfg/hjb.hpp"
#include "hmfg/io.hpp"
#include "hmfg/transport.hpp"

namespace {

using namespace hmfg;

KeyValueMap load_config(const std::string& path,
                        const std::vector<std::string>& overrides) {
  KeyValueMap kv = path.empty() ? KeyValueMap{} : KeyValueMap::from_file(path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got: " + ov);
    kv.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  return kv;
}

int cmd_solve(const RunConfig& cfg) {
  const EquilibriumResult res = solve_equilibrium(cfg);
  ensure_dir(cfg.output_dir);
  write_report(cfg.output_dir + "/report.txt", cfg, res.report);
  write_residuals_csv(cfg.output_dir + "/residuals.csv", res.report.residuals);
  write_diagnostics_csv(cfg.output_dir + "/diagnostics.csv", res.report);
  const bool periodic = cfg.mode == CouplingMode::periodic;
  write_flow_density_csv(cfg.output_dir, res.flow, periodic,
                         periodic ? std::array<double, 3>{0, 0, 0} : cfg.box_lo,
                         periodic ? std::array<double, 3>{1, 1, 1} : cfg.box_hi);
  write_ensemble_csv(cfg.output_dir + "/ensemble.csv", res.ensemble);
  write_grid_binary(cfg.output_dir + "/value_grid.bin", res.u);
  write_grid_csv(cfg.output_dir + "/value_grid.csv", res.u);

  std::printf("iterations: %d  converged: %d  r_final: %.6g\n",
              res.report.iterations, res.report.converged ? 1 : 0,
              res.report.residuals.empty() ? 0.0 : res.report.residuals.back());
  std::printf("mild gaps: mean %.4g  p95 %.4g  min %.4g  max %.4g\n",
              res.report.mild.mean, res.report.mild.p95, res.report.mild.min,
              res.report.mild.max);
  const bool certified =
      res.report.mild.min >= -2e-2 && res.report.mild.p95 <= cfg.mild_eps;
  if (!certified) {
    std::printf("certification FAILED (tolerances: min >= -2e-2, p95 <= %g)\n",
                cfg.mild_eps);
    return 2;
  }
  std::printf("certification ok; artifacts in %s/\n", cfg.output_dir.c_str());
  return 0;
}

int cmd_hjb(const RunConfig& cfg, const std::string& measure_path,
            const std::string& out_grid, const std::string& out_csv) {
  const EmpiricalMeasure mu = read_measure_csv(measure_path);
  const GaugeKernel kf{cfg.kernel_eps_f}, kg{cfg.kernel_eps_g};
  const CouplingField F(kf, cfg.mode, cfg.strength_f, mu);
  const CouplingField G(kg, cfg.mode, cfg.strength_g, mu);
  HjbConfig hjb;
  hjb.grid = cfg.grid_spec();
  hjb.control_bound = cfg.control_bound;
  hjb.n_directions = cfg.control_dirs;
  hjb.n_magnitudes = cfg.control_mags;
  hjb.eps = cfg.eps;
  const ValueGrid u = solve_hjb(
      [&](const HPoint& x, double) { return F.value(x); },
      [&](const HPoint& x) { return G.value(x); }, hjb);
  const LipschitzEstimate lip = estimate_lipschitz(u);
  std::printf("lipschitz_x: %.6g  lipschitz_t: %.6g  semiconcavity: %.6g\n", lip.Lx,
              lip.Lt, estimate_semiconcavity(u, 0.0));
  if (cfg.mode == CouplingMode::periodic)
    std::printf("periodicity deviation: %.3g\n", check_periodicity(u));
  if (!out_grid.empty()) write_grid_binary(out_grid, u);
  if (!out_csv.empty()) write_grid_csv(out_csv, u);
  return 0;
}

int cmd_transport(const RunConfig& cfg, const std::string& grid_path) {
  const ValueGrid u = read_grid_binary(grid_path);
  InitialDensity m0;
  m0.mode = cfg.mode;
  m0.seed = cfg.seed;
  const PushForwardResult res = push_forward(u, m0, cfg.N, cfg.eps);
  ensure_dir(cfg.output_dir);
  const bool periodic = cfg.mode == CouplingMode::periodic;
  write_flow_density_csv(cfg.output_dir, res.flow, periodic,
                         periodic ? std::array<double, 3>{0, 0, 0} : cfg.box_lo,
                         periodic ? std::array<double, 3>{1, 1, 1} : cfg.box_hi);
  write_ensemble_csv(cfg.output_dir + "/ensemble.csv", res.ensemble);
  const double wr = weak_residual(res.flow, u, default_test_functions(), cfg.eps);
  std::printf("particles: %zu  exits: %zu  weak residual: %.4g\n", res.ensemble.size(),
              res.ensemble.exits, wr);
  return 0;
}

int cmd_sde(const RunConfig& cfg, const std::string& grid_path) {
  const ValueGrid u = read_grid_binary(grid_path);
  if (u.spec().mode != GridMode::periodic) {
    std::fprintf(stderr, "sde: periodic grids only\n");
    return 1;
  }
  InitialDensity m0;
  m0.mode = CouplingMode::periodic;
  m0.seed = cfg.seed;
  const EmpiricalMeasure starts = m0.sample(cfg.N);
  ensure_dir(cfg.output_dir);
  std::ofstream out(cfg.output_dir + "/sde_holder.csv");
  out << "sigma,holder_c\n";
  for (const double sigma : cfg.sde_sigmas) {
    const MeasureFlow flow = run_sde(u, starts.samples, sigma, cfg.seed);
    const double C = holder_quarter_check(flow);
    out << sigma << "," << C << "\n";
    std::printf("sigma %.3g: holder C = %.6g\n", sigma, C);
  }
  return 0;
}

struct Check {
  const char* name;
  bool pass;
  double worst;
};

int cmd_verify(std::uint64_t seed) {
  std::vector<Check> checks;
  const CounterRng rng{seed, 0xF00Du};
  auto rp = [&](std::uint64_t c, double lo = -2.0, double hi = 2.0) {
    return HPoint{rng.uniform(3 * c, lo, hi), rng.uniform(3 * c + 1, lo, hi),
                  rng.uniform(3 * c + 2, lo, hi)};
  };

  {  // associativity, inverse, left-invariance, homogeneity, pavage
    double w1 = 0, w2 = 0, w3 = 0, w4 = 0, w5 = 0;
    for (int i = 0; i < 10000; ++i) {
      const HPoint a = rp(9 * i), b = rp(9 * i + 3), z = rp(9 * i + 6);
      const HPoint lhs = group_mul(group_mul(a, b), z);
      const HPoint rhs = group_mul(a, group_mul(b, z));
      w1 = std::max({w1, std::abs(lhs.x1 - rhs.x1), std::abs(lhs.x2 - rhs.x2),
                     std::abs(lhs.x3 - rhs.x3)});
      const HPoint e = group_mul(a, group_inv(a));
      w2 = std::max({w2, std::abs(e.x1), std::abs(e.x2), std::abs(e.x3)});
      const HPoint zi{std::floor(z.x1), std::floor(z.x2), std::floor(z.x3)};
      w3 = std::max(w3, std::abs(h_distance(group_mul(zi, a), group_mul(zi, b)) -
                                 h_distance(a, b)));
      const double lam = 0.25 + 2.0 * rng.uniform(90000 + i);
      w4 = std::max(w4, std::abs(gauge_norm(dilate(lam, a)) - lam * gauge_norm(a)));
      const auto pv = pavage(a);
      const HPoint rec = group_mul(lattice_point(pv.z[0], pv.z[1], pv.z[2]), pv.q);
      w5 = std::max({w5, std::abs(rec.x1 - a.x1), std::abs(rec.x2 - a.x2),
                     std::abs(rec.x3 - a.x3)});
    }
    checks.push_back({"group associativity (1e4)", w1 <= 1e-12, w1});
    checks.push_back({"group inverse (1e4)", w2 <= 1e-12, w2});
    checks.push_back({"d_H left invariance (1e4)", w3 <= 1e-12, w3});
    checks.push_back({"gauge dilation homogeneity (1e4)", w4 <= 1e-12, w4});
    checks.push_back({"pavage round-trip (1e4)", w5 <= 1e-12, w5});
  }
  {  // Lemma identities for the squared gauge under the frame fields
    double worst = 0.0;
    const auto f = [](const HPoint& p) {
      const double n = gauge_norm(p);
      return n * n;
    };
    for (int i = 0; i < 100; ++i) {
      HPoint a = rp(40000 + 3 * i);
      if (gauge_norm(a) < 0.3) a.x1 += 1.0;
      const double n2 = f(a);
      const double r2 = a.x1 * a.x1 + a.x2 * a.x2;
      const HVector2 g = horizontal_gradient_fd(f, a, 1e-4);
      const double g1 = (2.0 * a.x1 * r2 - a.x2 * a.x3) / n2;
      const double g2 = (2.0 * a.x2 * r2 + a.x1 * a.x3) / n2;
      const double lap = horizontal_laplacian_fd(f, a, 1e-4);
      const double lap_ref = 9.0 * r2 / n2 - (g1 * g1 + g2 * g2) / n2;
      worst = std::max({worst, std::abs(g.v1 - g1), std::abs(g.v2 - g2),
                        std::abs(lap - lap_ref)});
    }
    checks.push_back({"squared-gauge frame identities (100 pts)", worst <= 1e-5, worst});
  }
  {  // distance upper bound by Euclidean terms
    double worst = -1e300;
    for (int i = 0; i < 10000; ++i) {
      const HPoint x = rp(70000 + 6 * i), y = rp(70000 + 6 * i + 3);
      const double dist = h_distance(x, y);
      const double de = std::sqrt((x.x1 - y.x1) * (x.x1 - y.x1) +
                                  (x.x2 - y.x2) * (x.x2 - y.x2) +
                                  (x.x3 - y.x3) * (x.x3 - y.x3));
      const double bound =
          de + (1.0 + std::sqrt(std::abs(x.x1)) + std::sqrt(std::abs(x.x2))) *
                   std::sqrt(de);
      worst = std::max(worst, dist - bound);
    }
    checks.push_back({"distance vs Euclidean bound (1e4)", worst <= 1e-12, worst});
  }
  {  // convolution identities
    const GaugeKernel k{0.25};
    EmpiricalMeasure mu;
    for (int i = 0; i < 64; ++i) mu.samples.push_back(rp(110000 + 3 * i, 0.0, 1.0));
    double wper = 0.0, wpos = 1e300, wder = 0.0;
    const CouplingField F(k, CouplingMode::periodic, 1.0, mu);
    for (int i = 0; i < 50; ++i) {
      const HPoint x = rp(120000 + 3 * i, 0.0, 1.0);
      const double v = h_convolve_measure(k, mu, x);
      wpos = std::min(wpos, v);
      for (int z = -1; z <= 1; ++z)
        wper = std::max(wper,
                        std::abs(h_convolve_measure(
                                     k, mu, group_mul(lattice_point(z, 1, 0), x)) -
                                 v));
      const HVector2 ana = F.hgrad(x);
      const HVector2 num = horizontal_gradient_fd(
          [&](const HPoint& p) { return F.value(p); }, x, 1e-5);
      wder = std::max({wder, std::abs(ana.v1 - num.v1), std::abs(ana.v2 - num.v2)});
    }
    checks.push_back({"convolution periodicity (50 pts)", wper <= 1e-10, wper});
    checks.push_back({"convolution positivity (50 pts)", wpos > 0.0, wpos});
    checks.push_back({"derivative-convolution commutation", wder <= 1e-4, wder});
  }
  {  // Jensen inequality for the periodized convolution
    const GaugeKernel k{0.3};
    double worst = -1e300;
    for (int trial = 0; trial < 3; ++trial) {
      const double a = 0.3 + 0.2 * trial;
      const auto vf = [a](const HPoint& x) {
        return HVector2{std::sin(kTau * x.x1) + a, std::cos(kTau * x.x2)};
      };
      const auto md = [a](const HPoint& x) {
        return 1.0 + 0.4 * std::cos(kTau * x.x1) * std::cos(kTau * x.x2 + a);
      };
      for (const double p : {1.0, 2.0}) {
        const JensenResult r = jensen_convolution_check(vf, md, k, p, 10);
        worst = std::max(worst, r.lhs - r.rhs);
      }
    }
    checks.push_back({"convolution Jensen inequality", worst <= 1e-6, worst});
  }

  std::printf("%-44s %-6s %s\n", "check", "status", "worst");
  bool all = true;
  for (const auto& c : checks) {
    std::printf("%-44s %-6s %.3g\n", c.name, c.pass ? "PASS" : "FAIL", c.worst);
    all = all && c.pass;
  }
  return all ? 0 : 1;
}

int cmd_wasserstein(const std::string& a, const std::string& b,
                    const std::string& metric) {
  const EmpiricalMeasure mu = read_measure_csv(a);
  const EmpiricalMeasure nu = read_measure_csv(b);
  const GroundMetric gm =
      metric == "euclidean" ? GroundMetric::euclidean : GroundMetric::torus;
  std::printf("%.17g\n", wasserstein1(mu, nu, gm));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean field games on the Heisenberg group"};
  app.require_subcommand(1);

  std::string config_path, measure_path, grid_path, out_grid, out_csv;
  std::string file_a, file_b, metric = "torus";
  std::vector<std::string> overrides;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file");
    sub->add_option("--set", overrides, "override key=value (repeatable)");
    sub->add_option("--threads", threads, "worker thread count (0 = hardware)");
  };

  auto* solve = app.add_subcommand("solve", "full equilibrium run");
  add_common(solve);
  auto* hjb = app.add_subcommand("hjb", "single HJ solve with a frozen measure");
  add_common(hjb);
  hjb->add_option("--measure", measure_path, "sample cloud CSV")->required();
  hjb->add_option("--out-grid", out_grid, "write value grid (binary)");
  hjb->add_option("--out-csv", out_csv, "write value grid (CSV)");
  auto* transport = app.add_subcommand("transport", "push-forward under a value grid");
  add_common(transport);
  transport->add_option("--grid", grid_path, "value grid (binary)")->required();
  auto* sde = app.add_subcommand("sde", "viscous ensembles for the sigma list");
  add_common(sde);
  sde->add_option("--grid", grid_path, "value grid (binary)")->required();
  auto* verify = app.add_subcommand("verify", "identity suites");
  add_common(verify);
  auto* wass = app.add_subcommand("wasserstein", "d_1 between two sample files");
  wass->add_option("--a", file_a, "first sample CSV")->required();
  wass->add_option("--b", file_b, "second sample CSV")->required();
  wass->add_option("--metric", metric, "torus|euclidean");

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0) hmfg::worker_count() = threads;
    if (wass->parsed()) return cmd_wasserstein(file_a, file_b, metric);
    const hmfg::KeyValueMap kv = load_config(config_path, overrides);
    if (verify->parsed())
      return cmd_verify(static_cast<std::uint64_t>(kv.get("seeds.master", 1LL)));
    const hmfg::RunConfig cfg = hmfg::RunConfig::from_map(kv);
    if (solve->parsed()) return cmd_solve(cfg);
    if (hjb->parsed()) return cmd_hjb(cfg, measure_path, out_grid, out_csv);
    if (transport->parsed()) return cmd_transport(cfg, grid_path);
    if (sde->parsed()) return cmd_sde(cfg, grid_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
