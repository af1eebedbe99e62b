// Regularizing gauge kernels, convolution on the group, the coupling
// operators F[m], G[m] and the initial distributions m0.
//
// Convolution orientation: kernel arguments are y^{-1} (+) x, the
// left-invariant form, so that periodized sums of a Q_H-periodic input are
// exactly Q_H-periodic and X_i commutes with the convolution.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hmfg/hgroup.hpp"
#include "hmfg/measures.hpp"
#include "hmfg/parallel.hpp"
#include "hmfg/rng.hpp"

namespace hmfg {

constexpr double kPi = 3.14159265358979323846264338327950288;

// rho_eps(x) = C(eps) exp(-||delta_{1/eps} x||_H^4); the intrinsic dilation
// gives ||x||^4/eps^4 and the closed-form mass integral
// int exp(-||y||^4) dy = pi^2/2. A Euclidean x/eps reading is kept behind a
// flag; its mass integral is pi^2 eps^3 / 2.
struct GaugeKernel {
  double eps = 0.25;
  bool euclidean_scaling = false;
  // Contributions with exponent beyond this are dropped by the accelerated
  // field evaluators (exp(-36) ~ 2e-16); raise to 745 for exact sums.
  double cutoff_exponent = 36.0;
  // Tabulated exp(-phi) in field evaluations (relative error ~4e-5); for
  // solver-internal kernels where the scheme error dominates.
  bool fast_exp = false;

  double normalization() const {
    const double e = eps;
    return euclidean_scaling ? 2.0 / (kPi * kPi * e * e * e)
                             : 2.0 / (kPi * kPi * e * e * e * e);
  }

  double exponent(const HPoint& w) const {
    const double r2 = w.x1 * w.x1 + w.x2 * w.x2;
    if (euclidean_scaling)
      return r2 * r2 / (eps * eps * eps * eps) + w.x3 * w.x3 / (eps * eps);
    return (r2 * r2 + w.x3 * w.x3) / (eps * eps * eps * eps);
  }

  // Gauge radius beyond which contributions are dropped.
  double cutoff_radius() const { return std::pow(cutoff_exponent, 0.25) * eps; }
};

inline double kernel_eval(const GaugeKernel& k, const HPoint& a) {
  return k.normalization() * std::exp(-k.exponent(a));
}

namespace detail {

// Derivatives of phi = ||w||^4 / eps^4 along the frame.
struct KernelJet {
  double rho;           // kernel value
  double x1phi, x2phi;  // X_i phi
  double x11phi, x12phi, x21phi, x22phi;
  Vec3 dphi;            // Euclidean gradient of phi
};

inline KernelJet kernel_jet(const GaugeKernel& k, const HPoint& w) {
  const double ie4 = 1.0 / (k.eps * k.eps * k.eps * k.eps);
  const double r2 = w.x1 * w.x1 + w.x2 * w.x2;
  KernelJet j;
  j.rho = kernel_eval(k, w);
  j.x1phi = (4.0 * w.x1 * r2 - 2.0 * w.x2 * w.x3) * ie4;
  j.x2phi = (4.0 * w.x2 * r2 + 2.0 * w.x1 * w.x3) * ie4;
  j.x11phi = (4.0 * r2 + 8.0 * w.x1 * w.x1 + 2.0 * w.x2 * w.x2) * ie4;
  j.x22phi = (4.0 * r2 + 8.0 * w.x2 * w.x2 + 2.0 * w.x1 * w.x1) * ie4;
  j.x12phi = (6.0 * w.x1 * w.x2 + 2.0 * w.x3) * ie4;
  j.x21phi = (6.0 * w.x1 * w.x2 - 2.0 * w.x3) * ie4;
  j.dphi = {4.0 * w.x1 * r2 * ie4, 4.0 * w.x2 * r2 * ie4, 2.0 * w.x3 * ie4};
  return j;
}

}  // namespace detail

enum class CouplingMode { periodic, nonperiodic };

// Translate window for periodized kernel sums, enlarged until the next shell
// contributes less than `tail` anywhere on the cell. The window is wider
// along z3: tiles with z1, z2 != 0 are sheared vertically by up to |z1|+|z2|,
// and the in-ball shear -w2 x1 + w1 x2 adds up to 2R more.
struct PeriodizationWindow {
  int w12 = 1;
  int w3 = 4;
};

inline PeriodizationWindow periodization_window(const GaugeKernel& k,
                                                double tail = 1e-12) {
  PeriodizationWindow w;
  const double e4 = std::pow(k.eps, 4.0);
  const double C = k.normalization();
  // |z1| = w12+1 forces a first-coordinate gap >= w12, hence exponent
  // >= w12^4 / eps^4.
  while (w.w12 < 5) {
    const double gap = static_cast<double>(w.w12);
    if (200.0 * C * std::exp(-gap * gap * gap * gap / e4) < tail) break;
    ++w.w12;
  }
  // |z3| = w3+1 leaves a vertical gap >= w3 - 2 w12 - 2R, entering the gauge
  // through its square root: exponent >= gap^2 / eps^4.
  const double R = k.cutoff_radius();
  w.w3 = w.w12;
  while (w.w3 < 12) {
    const double gap = w.w3 - 2.0 * w.w12 - 2.0 * R;
    if (gap > 0.0 && 200.0 * C * std::exp(-gap * gap / e4) < tail) break;
    ++w.w3;
  }
  return w;
}

// Exact periodized kernel sum of a particle measure (no cutoff): the spec's
// convolution in the group evaluated at a.
inline double h_convolve_measure(const GaugeKernel& k, const EmpiricalMeasure& mu,
                                 const HPoint& a,
                                 CouplingMode mode = CouplingMode::periodic) {
  if (mu.size() == 0) throw std::invalid_argument("h_convolve_measure: empty measure");
  double s = 0.0;
  if (mode == CouplingMode::nonperiodic) {
    for (std::size_t i = 0; i < mu.size(); ++i)
      s += mu.weight(i) * kernel_eval(k, group_mul(group_inv(mu.samples[i]), a));
    return s;
  }
  const PeriodizationWindow w = periodization_window(k);
  const HPoint q = canonical_rep(a);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const HPoint y = canonical_rep(mu.samples[i]);
    double si = 0.0;
    for (int z1 = -w.w12; z1 <= w.w12; ++z1)
      for (int z2 = -w.w12; z2 <= w.w12; ++z2)
        for (int z3 = -w.w3; z3 <= w.w3; ++z3) {
          const HPoint t = group_mul(lattice_point(z1, z2, z3), y);
          si += kernel_eval(k, group_mul(group_inv(t), q));
        }
    s += mu.weight(i) * si;
  }
  return s;
}

// Precomputed kernel-sum field: translated atoms in a uniform spatial bin
// structure. Evaluations agree with strength * h_convolve_measure up to the
// kernel cutoff (< 1e-12 by default).
class CouplingField {
 public:
  CouplingField() = default;

  CouplingField(const GaugeKernel& k, CouplingMode mode, double strength,
                const EmpiricalMeasure& mu)
      : kernel_(k), mode_(mode), strength_(strength) {
    if (mu.size() == 0) throw std::invalid_argument("CouplingField: empty measure");
    const double R = k.cutoff_radius();
    if (mode == CouplingMode::periodic) {
      const PeriodizationWindow w = periodization_window(k);
      atoms_.reserve(mu.size() * 27);
      // t3 of a relevant translate satisfies |x3 - t3| <= R^2 + 2R for some
      // cell point x.
      const double reach = R * R + 2.0 * R;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        const HPoint y = canonical_rep(mu.samples[i]);
        const double wt = mu.weight(i);
        for (int z1 = -w.w12; z1 <= w.w12; ++z1)
          for (int z2 = -w.w12; z2 <= w.w12; ++z2)
            for (int z3 = -w.w3; z3 <= w.w3; ++z3) {
              const HPoint t = group_mul(lattice_point(z1, z2, z3), y);
              if (t.x1 < -R || t.x1 > 1.0 + R) continue;
              if (t.x2 < -R || t.x2 > 1.0 + R) continue;
              if (t.x3 < -reach || t.x3 > 1.0 + reach) continue;
              atoms_.push_back({t, wt});
            }
      }
    } else {
      atoms_.reserve(mu.size());
      for (std::size_t i = 0; i < mu.size(); ++i)
        atoms_.push_back({mu.samples[i], mu.weight(i)});
    }
    lo_ = {1e300, 1e300, 1e300};
    hi_ = {-1e300, -1e300, -1e300};
    for (const auto& at : atoms_) {
      lo_[0] = std::min(lo_[0], at.p.x1); hi_[0] = std::max(hi_[0], at.p.x1);
      lo_[1] = std::min(lo_[1], at.p.x2); hi_[1] = std::max(hi_[1], at.p.x2);
      lo_[2] = std::min(lo_[2], at.p.x3); hi_[2] = std::max(hi_[2], at.p.x3);
    }
    if (kernel_.fast_exp) {
      exp_table_.resize(kTableSize + 1);
      table_scale_ = kTableSize / kernel_.cutoff_exponent;
      for (std::size_t i = 0; i <= kTableSize; ++i)
        exp_table_[i] = std::exp(-static_cast<double>(i) / table_scale_);
    }
    build_bins();
  }

  double strength() const { return strength_; }
  const GaugeKernel& kernel() const { return kernel_; }
  CouplingMode mode() const { return mode_; }

  double value(const HPoint& x) const {
    double s = 0.0;
    const double norm = kernel_.normalization();
    visit(x, [&](const Atom& at, const HPoint&, double ex) {
      s += at.weight * norm * exp_neg(ex);
    });
    return strength_ * s;
  }

  // (X1 F, X2 F) by analytic kernel differentiation.
  HVector2 hgrad(const HPoint& x) const {
    double g1 = 0.0, g2 = 0.0;
    visit(x, [&](const Atom& at, const HPoint& w, double) {
      const auto j = detail::kernel_jet(kernel_, w);
      g1 += at.weight * (-j.rho * j.x1phi);
      g2 += at.weight * (-j.rho * j.x2phi);
    });
    return {strength_ * g1, strength_ * g2};
  }

  // Second horizontal derivatives (X1X1, X1X2, X2X1, X2X2) F.
  std::array<double, 4> hsecond(const HPoint& x) const {
    std::array<double, 4> s{0.0, 0.0, 0.0, 0.0};
    visit(x, [&](const Atom& at, const HPoint& w, double) {
      const auto j = detail::kernel_jet(kernel_, w);
      s[0] += at.weight * j.rho * (j.x1phi * j.x1phi - j.x11phi);
      s[1] += at.weight * j.rho * (j.x1phi * j.x2phi - j.x12phi);
      s[2] += at.weight * j.rho * (j.x2phi * j.x1phi - j.x21phi);
      s[3] += at.weight * j.rho * (j.x2phi * j.x2phi - j.x22phi);
    });
    for (auto& v : s) v *= strength_;
    return s;
  }

  // Euclidean gradient (for the PMP right-hand side). The left translation
  // x -> t^{-1} (+) x has Jacobian rows (1,0,0), (0,1,0), (t2,-t1,1); in
  // periodic mode the pavage chart adds a further shear by the lattice part.
  Vec3 egrad(const HPoint& x) const {
    Vec3 g{0.0, 0.0, 0.0};
    visit(x, [&](const Atom& at, const HPoint& w, double) {
      const auto j = detail::kernel_jet(kernel_, w);
      const HPoint t = at.p;
      g[0] += at.weight * (-j.rho) * (j.dphi[0] + t.x2 * j.dphi[2]);
      g[1] += at.weight * (-j.rho) * (j.dphi[1] - t.x1 * j.dphi[2]);
      g[2] += at.weight * (-j.rho) * j.dphi[2];
    });
    for (auto& v : g) v *= strength_;
    if (mode_ == CouplingMode::periodic) {
      const auto z = pavage(x).z;
      g[0] += static_cast<double>(z[1]) * g[2];
      g[1] -= static_cast<double>(z[0]) * g[2];
    }
    return g;
  }

 private:
  struct Atom {
    HPoint p;
    double weight;
  };

  template <class Fn>
  void visit(const HPoint& x_in, Fn&& fn) const {
    const HPoint x = mode_ == CouplingMode::periodic ? canonical_rep(x_in) : x_in;
    const double R = kernel_.cutoff_radius();
    const double R2 = R * R;  // vertical extent of the gauge ball
    int i0, i1, j0, j1, l0, l1;
    bin_range(x.x1 - R, x.x1 + R, lo_[0], hi_[0], nb_[0], i0, i1);
    bin_range(x.x2 - R, x.x2 + R, lo_[1], hi_[1], nb_[1], j0, j1);
    // w3 = x3 - t3 + t2 x1 - t1 x2: the shear term is bounded by the atom
    // coordinate range, not by R.
    const double t12 = std::max({std::abs(lo_[0]), std::abs(hi_[0]),
                                 std::abs(lo_[1]), std::abs(hi_[1])});
    const double reach3 = R2 + t12 * (std::abs(x.x1) + std::abs(x.x2));
    bin_range(x.x3 - reach3, x.x3 + reach3, lo_[2], hi_[2], nb_[2], l0, l1);
    const double cut = kernel_.cutoff_exponent;
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j)
        for (int l = l0; l <= l1; ++l) {
          const std::size_t b = static_cast<std::size_t>((i * nb_[1] + j) * nb_[2] + l);
          for (std::size_t idx = bin_start_[b]; idx < bin_start_[b + 1]; ++idx) {
            const Atom& at = atoms_sorted_[idx];
            const HPoint w = group_mul(group_inv(at.p), x);
            const double ex = kernel_.exponent(w);
            if (ex > cut) continue;
            fn(at, w, ex);
          }
        }
  }

  static void bin_range(double lo_val, double hi_val, double lo, double hi, int nb,
                        int& b0, int& b1) {
    const double width = (hi - lo) / nb;
    b0 = std::max(0, std::min(nb - 1, static_cast<int>(std::floor((lo_val - lo) / width))));
    b1 = std::max(0, std::min(nb - 1, static_cast<int>(std::floor((hi_val - lo) / width))));
  }

  void build_bins() {
    const double R = std::max(kernel_.cutoff_radius(), 1e-6);
    for (int d = 0; d < 3; ++d) {
      if (hi_[d] <= lo_[d]) { lo_[d] -= 0.5; hi_[d] += 0.5; }
      const double extent = hi_[d] - lo_[d];
      const double target = 0.6 * (d < 2 ? R : std::max(R * R, 0.05));
      nb_[d] = std::max(1, std::min(32, static_cast<int>(extent / target)));
    }
    const std::size_t nbins = static_cast<std::size_t>(nb_[0]) * nb_[1] * nb_[2];
    std::vector<std::size_t> count(nbins, 0);
    auto bin_of = [&](const HPoint& p) {
      int i = bin_index(p.x1, lo_[0], hi_[0], nb_[0]);
      int j = bin_index(p.x2, lo_[1], hi_[1], nb_[1]);
      int l = bin_index(p.x3, lo_[2], hi_[2], nb_[2]);
      return static_cast<std::size_t>((i * nb_[1] + j) * nb_[2] + l);
    };
    for (const auto& at : atoms_) ++count[bin_of(at.p)];
    bin_start_.assign(nbins + 1, 0);
    for (std::size_t b = 0; b < nbins; ++b) bin_start_[b + 1] = bin_start_[b] + count[b];
    atoms_sorted_.resize(atoms_.size());
    std::vector<std::size_t> cursor(bin_start_.begin(), bin_start_.end() - 1);
    for (const auto& at : atoms_) atoms_sorted_[cursor[bin_of(at.p)]++] = at;
  }

  static int bin_index(double v, double lo, double hi, int nb) {
    const double width = (hi - lo) / nb;
    return std::max(0, std::min(nb - 1, static_cast<int>(std::floor((v - lo) / width))));
  }

  static constexpr std::size_t kTableSize = 4096;

  double exp_neg(double ex) const {
    if (exp_table_.empty()) return std::exp(-ex);
    const double t = ex * table_scale_;
    const std::size_t i = static_cast<std::size_t>(t);
    const double f = t - i;
    return exp_table_[i] + f * (exp_table_[i + 1] - exp_table_[i]);
  }

  GaugeKernel kernel_;
  CouplingMode mode_ = CouplingMode::periodic;
  double strength_ = 0.0;
  std::vector<Atom> atoms_;
  std::vector<Atom> atoms_sorted_;
  std::vector<double> exp_table_;
  double table_scale_ = 1.0;
  std::vector<std::size_t> bin_start_;
  std::array<double, 3> lo_{}, hi_{};
  std::array<int, 3> nb_{1, 1, 1};
};

struct CouplingOperator {
  GaugeKernel kernel;
  CouplingMode mode = CouplingMode::periodic;
  double strength = 1.0;

  CouplingField operator()(const EmpiricalMeasure& mu) const {
    return CouplingField(kernel, mode, strength, mu);
  }
};

inline CouplingField coupling_F(const CouplingOperator& op, const EmpiricalMeasure& mu) {
  return op(mu);
}

inline CouplingField coupling_G(const CouplingOperator& op, const EmpiricalMeasure& mu) {
  return op(mu);
}

// ---------------------------------------------------------------------------
// Initial distributions.

struct InitialDensity {
  CouplingMode mode = CouplingMode::periodic;
  double support_radius = 0.5;  // gauge radius of the nonperiodic bump
  std::uint64_t seed = 1;

  // Periodic default: product density prod_i (1 + cos(2 pi q_i)/2) on the
  // canonical cell (unit mass); nonperiodic default: C^1 bump
  // c (1 - ||x||_H^4 / r^4)_+^2 with unit mass on R^3.
  double density(const HPoint& x) const {
    if (mode == CouplingMode::periodic) {
      const HPoint q = canonical_rep(x);
      return (1.0 + 0.5 * std::cos(2.0 * kPi * q.x1)) *
             (1.0 + 0.5 * std::cos(2.0 * kPi * q.x2)) *
             (1.0 + 0.5 * std::cos(2.0 * kPi * q.x3));
    }
    const double r = support_radius;
    const double g4 = std::pow(gauge_norm(x), 4.0);
    const double t = 1.0 - g4 / (r * r * r * r);
    if (t <= 0.0) return 0.0;
    const double c = 6.0 / (kPi * kPi * r * r * r * r);
    // normalization of (1-||y||^4)_+^2 is pi^2/6 after dilation by r
    return c * t * t;
  }

  EmpiricalMeasure sample(std::size_t n) const {
    EmpiricalMeasure mu;
    mu.samples.resize(n);
    const CounterRng rng{seed, 0x6d0u};
    if (mode == CouplingMode::periodic) {
      parallel_for(n, [&](std::size_t i) {
        HPoint p;
        p.x1 = sample_coord(rng.uniform(3 * i));
        p.x2 = sample_coord(rng.uniform(3 * i + 1));
        p.x3 = sample_coord(rng.uniform(3 * i + 2));
        mu.samples[i] = p;
      });
      return mu;
    }
    const double r = support_radius;
    const double peak = 6.0 / (kPi * kPi * r * r * r * r);
    parallel_for(n, [&](std::size_t i) {
      const CounterRng prng{seed, 0x700u + i};
      HPoint p;
      for (std::uint64_t trial = 0;; ++trial) {
        p.x1 = prng.uniform(4 * trial, -r, r);
        p.x2 = prng.uniform(4 * trial + 1, -r, r);
        p.x3 = prng.uniform(4 * trial + 2, -r * r, r * r);
        if (prng.uniform(4 * trial + 3) * peak <= density(p)) break;
      }
      mu.samples[i] = p;
    });
    return mu;
  }

 private:
  // Inverse CDF of 1 + cos(2 pi t)/2 on [0,1): F(t) = t + sin(2 pi t)/(4 pi).
  static double sample_coord(double u) {
    double t = u;
    for (int it = 0; it < 50; ++it) {
      const double f = t + std::sin(2.0 * kPi * t) / (4.0 * kPi) - u;
      const double fp = 1.0 + 0.5 * std::cos(2.0 * kPi * t);
      const double step = f / fp;
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
    if (t < 0.0) t += 1.0;
    if (t >= 1.0) t -= 1.0;
    return t;
  }
};

// ---------------------------------------------------------------------------
// Jensen inequality for the periodized convolution (quadrature form).
//
// Returns (lhs, rhs) of
//   int |E*rho / m*rho|^p (m*rho) dx  <=  int |E/m|^p dm
// over one periodicity cell. The discrete kernel column sums are normalized
// to one, which makes the discrete inequality exact for any grid size.
struct JensenResult {
  double lhs;
  double rhs;
};

using VectorField2 = std::function<HVector2(const HPoint&)>;

inline JensenResult jensen_convolution_check(const VectorField2& E_over_m,
                                             const ScalarField& m_density,
                                             const GaugeKernel& k, double p,
                                             int n = 12) {
  if (p < 1.0) throw std::invalid_argument("jensen_convolution_check: p must be >= 1");
  const double h = 1.0 / n;
  const double dv = h * h * h;
  std::vector<HPoint> grid;
  grid.reserve(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l)
        grid.push_back({(i + 0.5) * h, (j + 0.5) * h, (l + 0.5) * h});
  const std::size_t G = grid.size();

  std::vector<double> m(G), e1(G), e2(G);
  for (std::size_t g = 0; g < G; ++g) {
    m[g] = m_density(grid[g]);
    if (!(m[g] > 0.0))
      throw std::invalid_argument("jensen_convolution_check: density must be positive");
    const HVector2 v = E_over_m(grid[g]);
    e1[g] = v.v1 * m[g];
    e2[g] = v.v2 * m[g];
  }

  const PeriodizationWindow w = periodization_window(k);
  // Periodized discrete kernel weight omega(x, y) and its column mass.
  std::vector<double> omega(G * G);
  parallel_for(G, [&](std::size_t gy) {
    for (int z1 = -w.w12; z1 <= w.w12; ++z1)
      for (int z2 = -w.w12; z2 <= w.w12; ++z2)
        for (int z3 = -w.w3; z3 <= w.w3; ++z3) {
          const HPoint t_inv =
              group_inv(group_mul(lattice_point(z1, z2, z3), grid[gy]));
          for (std::size_t gx = 0; gx < G; ++gx) {
            const HPoint d = group_mul(t_inv, grid[gx]);
            const double ex = k.exponent(d);
            if (ex > k.cutoff_exponent) continue;
            omega[gx * G + gy] += k.normalization() * std::exp(-ex);
          }
        }
  });
  std::vector<double> col_mass(G, 0.0);
  for (std::size_t gy = 0; gy < G; ++gy) {
    double s = 0.0;
    for (std::size_t gx = 0; gx < G; ++gx) s += omega[gx * G + gy] * dv;
    col_mass[gy] = s;
  }

  double lhs = 0.0, rhs = 0.0;
  for (std::size_t gx = 0; gx < G; ++gx) {
    double mc = 0.0, c1 = 0.0, c2 = 0.0;
    for (std::size_t gy = 0; gy < G; ++gy) {
      const double wgt = omega[gx * G + gy] / col_mass[gy] * dv;
      mc += m[gy] * wgt;
      c1 += e1[gy] * wgt;
      c2 += e2[gy] * wgt;
    }
    const double ratio = std::hypot(c1, c2) / mc;
    lhs += std::pow(ratio, p) * mc * dv;
  }
  for (std::size_t gy = 0; gy < G; ++gy) {
    const double ratio = std::hypot(e1[gy], e2[gy]) / m[gy];
    rhs += std::pow(ratio, p) * m[gy] * dv;
  }
  return {lhs, rhs};
}

}  // namespace hmfg
