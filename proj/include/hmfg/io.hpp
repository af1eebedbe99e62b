// File interfaces: report summary (key = value), residuals/diagnostics CSVs,
// density and trajectory dumps, value-grid export (CSV) and a compact binary
// grid format for round-trips, sample-cloud CSV read/write.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmfg/equilibrium.hpp"
#include "hmfg/grid.hpp"
#include "hmfg/measures.hpp"
#include "hmfg/transport.hpp"

namespace hmfg {

inline void ensure_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

inline void write_report(const std::string& path, const RunConfig& cfg,
                         const EquilibriumReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  out << "schema_version = " << rep.schema_version << "\n";
  out << "mode = " << (cfg.mode == CouplingMode::periodic ? "periodic" : "nonperiodic")
      << "\n";
  out << "iterations = " << rep.iterations << "\n";
  out << "converged = " << (rep.converged ? 1 : 0) << "\n";
  out << "residual_final = "
      << (rep.residuals.empty() ? 0.0 : rep.residuals.back()) << "\n";
  out << "mild.mean = " << rep.mild.mean << "\n";
  out << "mild.p95 = " << rep.mild.p95 << "\n";
  out << "mild.max = " << rep.mild.max << "\n";
  out << "mild.min = " << rep.mild.min << "\n";
  out << "mild.count = " << rep.mild.count << "\n";
  out << "lipschitz.x = " << rep.lipschitz.Lx << "\n";
  out << "lipschitz.t = " << rep.lipschitz.Lt << "\n";
  out << "semiconcavity = " << rep.semiconcavity << "\n";
  out << "holder_c = " << rep.holder_C << "\n";
  out << "density_sup = " << rep.density_sup << "\n";
  out << "exits = " << rep.exits << "\n";
  out << "second_moment_max = " << rep.second_moment_max << "\n";
  out << "trunc_violations = " << rep.trunc_violations << "\n";
  out << "control_sup = " << rep.control_sup << "\n";
  out << "clamp_fraction = " << rep.clamp_fraction << "\n";
}

inline void write_residuals_csv(const std::string& path,
                                const std::vector<double>& residuals) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17) << "iter,residual\n";
  for (std::size_t k = 0; k < residuals.size(); ++k)
    out << (k + 1) << "," << residuals[k] << "\n";
}

inline void write_diagnostics_csv(const std::string& path,
                                  const EquilibriumReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17) << "quantity,value\n";
  out << "lipschitz_x," << rep.lipschitz.Lx << "\n";
  out << "lipschitz_t," << rep.lipschitz.Lt << "\n";
  out << "semiconcavity," << rep.semiconcavity << "\n";
  out << "holder_c," << rep.holder_C << "\n";
  out << "density_sup," << rep.density_sup << "\n";
  out << "mild_mean," << rep.mild.mean << "\n";
  out << "mild_p95," << rep.mild.p95 << "\n";
  out << "mild_max," << rep.mild.max << "\n";
  out << "mild_min," << rep.mild.min << "\n";
  out << "control_sup," << rep.control_sup << "\n";
  out << "clamp_fraction," << rep.clamp_fraction << "\n";
}

// Density snapshot files flow_t<idx>.csv: bin centers and density.
inline void write_flow_density_csv(const std::string& dir, const MeasureFlow& flow,
                                   bool periodic,
                                   std::array<double, 3> lo = {0, 0, 0},
                                   std::array<double, 3> hi = {1, 1, 1},
                                   int bins = 16, int count = 5) {
  ensure_dir(dir);
  const std::size_t S = flow.steps();
  for (int c = 0; c < count; ++c) {
    const std::size_t j = c * (S - 1) / (count - 1);
    const DensityGrid g =
        density_snapshot(flow.snapshots[j], bins, periodic, lo, hi);
    std::ostringstream name;
    name << dir << "/flow_t" << j << ".csv";
    std::ofstream out(name.str());
    if (!out) throw std::runtime_error("cannot write " + name.str());
    out << std::setprecision(17) << "x1,x2,x3,mass\n";
    for (int b1 = 0; b1 < bins; ++b1)
      for (int b2 = 0; b2 < bins; ++b2)
        for (int b3 = 0; b3 < bins; ++b3) {
          const double c1 = lo[0] + (b1 + 0.5) * (hi[0] - lo[0]) / bins;
          const double c2 = lo[1] + (b2 + 0.5) * (hi[1] - lo[1]) / bins;
          const double c3 = lo[2] + (b3 + 0.5) * (hi[2] - lo[2]) / bins;
          out << c1 << "," << c2 << "," << c3 << ","
              << g.mass[(static_cast<std::size_t>(b1) * bins + b2) * bins + b3]
              << "\n";
        }
  }
}

inline void write_ensemble_csv(const std::string& path, const PathEnsemble& ens,
                               std::size_t max_particles = 256) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17) << "particle,t,x1,x2,x3\n";
  const std::size_t stride = std::max<std::size_t>(1, ens.size() / max_particles);
  for (std::size_t i = 0; i < ens.size(); i += stride)
    for (std::size_t j = 0; j < ens.times.size(); ++j)
      out << i << "," << ens.times[j] << "," << ens.paths[i][j].x1 << ","
          << ens.paths[i][j].x2 << "," << ens.paths[i][j].x3 << "\n";
}

// Value-grid CSV export (x1,x2,x3,t,u); slices thinned to at most t_count.
inline void write_grid_csv(const std::string& path, const ValueGrid& u,
                           int t_count = 3) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17) << "x1,x2,x3,t,u\n";
  const GridSpec& gs = u.spec();
  for (int c = 0; c < t_count; ++c) {
    const int j = t_count == 1 ? 0 : c * gs.M / (t_count - 1);
    for (int i1 = 0; i1 < gs.n1; ++i1)
      for (int i2 = 0; i2 < gs.n2; ++i2)
        for (int i3 = 0; i3 < gs.n3; ++i3) {
          const HPoint x = gs.node(i1, i2, i3);
          out << x.x1 << "," << x.x2 << "," << x.x3 << "," << u.time_of_slice(j)
              << "," << u.at(j, i1, i2, i3) << "\n";
        }
  }
}

// Compact binary grid: text header + raw little-endian doubles per slice.
inline void write_grid_binary(const std::string& path, const ValueGrid& u) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const GridSpec& gs = u.spec();
  out << "HMFGGRID 1 " << (gs.mode == GridMode::periodic ? "periodic" : "box") << " "
      << gs.n1 << " " << gs.n2 << " " << gs.n3 << " " << gs.M << " "
      << std::setprecision(17) << gs.T << " " << gs.lo[0] << " " << gs.lo[1] << " "
      << gs.lo[2] << " " << gs.hi[0] << " " << gs.hi[1] << " " << gs.hi[2] << "\n";
  for (int j = 0; j <= gs.M; ++j)
    for (int i1 = 0; i1 < gs.n1; ++i1)
      for (int i2 = 0; i2 < gs.n2; ++i2)
        for (int i3 = 0; i3 < gs.n3; ++i3) {
          const double v = u.at(j, i1, i2, i3);
          out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
}

inline ValueGrid read_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string magic, mode;
  int version;
  GridSpec gs;
  in >> magic >> version >> mode >> gs.n1 >> gs.n2 >> gs.n3 >> gs.M >> gs.T >>
      gs.lo[0] >> gs.lo[1] >> gs.lo[2] >> gs.hi[0] >> gs.hi[1] >> gs.hi[2];
  if (magic != "HMFGGRID" || version != 1)
    throw std::runtime_error("bad grid file " + path);
  gs.mode = mode == "periodic" ? GridMode::periodic : GridMode::box;
  in.ignore(1);  // newline
  ValueGrid u(gs);
  for (int j = 0; j <= gs.M; ++j) {
    for (int i1 = 0; i1 < gs.n1; ++i1)
      for (int i2 = 0; i2 < gs.n2; ++i2)
        for (int i3 = 0; i3 < gs.n3; ++i3) {
          double v;
          in.read(reinterpret_cast<char*>(&v), sizeof(double));
          u.at(j, i1, i2, i3) = v;
        }
    u.seal_slice(j);
  }
  if (!in) throw std::runtime_error("truncated grid file " + path);
  return u;
}

// Sample clouds: CSV with header x1,x2,x3[,w].
inline void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17) << (mu.uniform() ? "x1,x2,x3\n" : "x1,x2,x3,w\n");
  for (std::size_t i = 0; i < mu.size(); ++i) {
    out << mu.samples[i].x1 << "," << mu.samples[i].x2 << "," << mu.samples[i].x3;
    if (!mu.uniform()) out << "," << mu.weights[i];
    out << "\n";
  }
}

inline EmpiricalMeasure read_measure_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  EmpiricalMeasure mu;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) { header = false; continue; }
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() < 3) throw std::runtime_error("bad sample row in " + path);
    mu.samples.push_back({vals[0], vals[1], vals[2]});
    if (vals.size() > 3) mu.weights.push_back(vals[3]);
  }
  if (mu.samples.empty()) throw std::runtime_error("empty measure file " + path);
  if (!mu.weights.empty() && mu.weights.size() != mu.samples.size())
    throw std::runtime_error("inconsistent weights in " + path);
  return mu;
}

}  // namespace hmfg
