// Flat key-value run configuration: `key = value` lines, '#' comments,
// dotted namespaces (fixed_point.max_iters = 30). CLI flags override file
// entries through the same map.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmfg/coupling.hpp"
#include "hmfg/grid.hpp"

namespace hmfg {

class KeyValueMap {
 public:
  static KeyValueMap from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    KeyValueMap kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw std::runtime_error("config: bad line " + std::to_string(lineno));
        continue;
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw std::runtime_error("config: empty key");
    map_[key] = value;
  }

  bool has(const std::string& key) const { return map_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& dflt) const {
    const auto it = map_.find(key);
    return it == map_.end() ? dflt : it->second;
  }
  double get(const std::string& key, double dflt) const {
    const auto it = map_.find(key);
    return it == map_.end() ? dflt : std::stod(it->second);
  }
  long long get(const std::string& key, long long dflt) const {
    const auto it = map_.find(key);
    return it == map_.end() ? dflt : std::stoll(it->second);
  }
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& dflt) const {
    const auto it = map_.find(key);
    if (it == map_.end()) return dflt;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::string t = trim(tok);
      if (!t.empty()) out.push_back(std::stod(t));
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return map_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> map_;
};

enum class DampingSchedule { fictitious, fixed };

struct RunConfig {
  CouplingMode mode = CouplingMode::periodic;
  double T = 1.0;
  int n1 = 32, n2 = 32, n3 = 32;
  int M = 64;
  std::array<double, 3> box_lo{-3.0, -3.0, -6.0};
  std::array<double, 3> box_hi{3.0, 3.0, 6.0};
  std::size_t N = 4096;

  double kernel_eps_f = 0.3, kernel_eps_g = 0.3;
  double strength_f = 0.1, strength_g = 0.1;
  std::size_t coupling_cloud = 384;

  double eps = 0.0;       // regularization (positive iff nonperiodic)
  double n_trunc = 4.0;   // truncation audit radius for |x1|, |x2|

  std::vector<double> sde_sigmas{0.0, 0.05, 0.2};

  int fp_max_iters = 30;
  double fp_tol = 5e-3;
  DampingSchedule fp_damping = DampingSchedule::fictitious;
  double fp_damping_factor = 0.5;

  // Safe control radius replacing the loose constructive bound; the run
  // audits that realized controls stay well inside (report control_sup).
  double control_bound = 1.6;
  int control_dirs = 32;
  int control_mags = 6;

  double mild_eps = 5e-2;
  std::size_t certify_sample = 512;

  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool archive_flows = false;  // keep every iterate's flow (tests, audits)

  static RunConfig from_map(const KeyValueMap& kv) {
    RunConfig c;
    const std::string mode = kv.get("mode", std::string("periodic"));
    if (mode == "periodic") c.mode = CouplingMode::periodic;
    else if (mode == "nonperiodic") c.mode = CouplingMode::nonperiodic;
    else throw std::runtime_error("config: mode must be periodic|nonperiodic");
    c.T = kv.get("T", c.T);
    c.n1 = static_cast<int>(kv.get("grid.n1", (long long)c.n1));
    c.n2 = static_cast<int>(kv.get("grid.n2", (long long)c.n2));
    c.n3 = static_cast<int>(kv.get("grid.n3", (long long)c.n3));
    c.M = static_cast<int>(kv.get("grid.M", (long long)c.M));
    c.box_lo = {kv.get("box.lo1", c.box_lo[0]), kv.get("box.lo2", c.box_lo[1]),
                kv.get("box.lo3", c.box_lo[2])};
    c.box_hi = {kv.get("box.hi1", c.box_hi[0]), kv.get("box.hi2", c.box_hi[1]),
                kv.get("box.hi3", c.box_hi[2])};
    c.N = static_cast<std::size_t>(kv.get("particles.N", (long long)c.N));
    c.kernel_eps_f = kv.get("kernel.eps_f", c.kernel_eps_f);
    c.kernel_eps_g = kv.get("kernel.eps_g", c.kernel_eps_g);
    c.strength_f = kv.get("coupling.strength_f", c.strength_f);
    c.strength_g = kv.get("coupling.strength_g", c.strength_g);
    c.coupling_cloud =
        static_cast<std::size_t>(kv.get("coupling.cloud", (long long)c.coupling_cloud));
    c.eps = kv.get("reg.eps", c.mode == CouplingMode::nonperiodic ? 0.05 : 0.0);
    c.n_trunc = kv.get("reg.n_trunc", c.n_trunc);
    c.sde_sigmas = kv.get_list("sde.sigmas", c.sde_sigmas);
    c.fp_max_iters = static_cast<int>(kv.get("fixed_point.max_iters", (long long)c.fp_max_iters));
    c.fp_tol = kv.get("fixed_point.tol", c.fp_tol);
    const std::string damp = kv.get("fixed_point.damping", std::string("fictitious"));
    if (damp == "fictitious") c.fp_damping = DampingSchedule::fictitious;
    else if (damp == "fixed") c.fp_damping = DampingSchedule::fixed;
    else throw std::runtime_error("config: fixed_point.damping must be fictitious|fixed");
    c.fp_damping_factor = kv.get("fixed_point.damping_factor", c.fp_damping_factor);
    c.control_bound = kv.get("control.bound", c.control_bound);
    c.control_dirs = static_cast<int>(kv.get("control.dirs", (long long)c.control_dirs));
    c.control_mags = static_cast<int>(kv.get("control.mags", (long long)c.control_mags));
    c.mild_eps = kv.get("mild.eps", c.mild_eps);
    c.certify_sample =
        static_cast<std::size_t>(kv.get("certify.sample", (long long)c.certify_sample));
    c.seed = static_cast<std::uint64_t>(kv.get("seeds.master", (long long)c.seed));
    c.output_dir = kv.get("output.dir", c.output_dir);
    c.archive_flows = kv.get("debug.archive_flows", 0LL) != 0;
    c.validate();
    return c;
  }

  void validate() const {
    if (!(T > 0.0) || M < 1 || N < 1) throw std::runtime_error("config: T/M/N");
    if (mode == CouplingMode::periodic && eps != 0.0)
      throw std::runtime_error("config: periodic mode requires reg.eps = 0");
    if (mode == CouplingMode::nonperiodic && !(eps > 0.0))
      throw std::runtime_error("config: nonperiodic mode requires reg.eps > 0");
    if (!(kernel_eps_f > 0.0) || !(kernel_eps_g > 0.0))
      throw std::runtime_error("config: kernel widths must be positive");
    if (fp_max_iters < 1 || !(fp_tol > 0.0)) throw std::runtime_error("config: fixed_point");
    if (!(fp_damping_factor > 0.0) || fp_damping_factor > 1.0)
      throw std::runtime_error("config: damping factor in (0,1]");
    grid_spec().validate();
  }

  GridSpec grid_spec() const {
    GridSpec gs;
    gs.mode = mode == CouplingMode::periodic ? GridMode::periodic : GridMode::box;
    gs.n1 = n1; gs.n2 = n2; gs.n3 = n3;
    gs.lo = box_lo; gs.hi = box_hi;
    gs.T = T; gs.M = M;
    return gs;
  }
};

}  // namespace hmfg
