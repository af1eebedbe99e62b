// Heisenberg group algebra: group law, dilations, gauge geometry, pavage
// periodicity, horizontal frame matrices and group-translated finite
// differences. All operations are pure.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace hmfg {

inline constexpr double kTau = 6.28318530717958647692528676655900577;

struct HPoint {
  double x1 = 0.0, x2 = 0.0, x3 = 0.0;

  friend bool operator==(const HPoint&, const HPoint&) = default;
};

// A horizontal vector, i.e. coefficients on the frame (X1, X2).
struct HVector2 {
  double v1 = 0.0, v2 = 0.0;

  double norm() const { return std::hypot(v1, v2); }
};

using Vec3 = std::array<double, 3>;
using Mat32 = std::array<std::array<double, 2>, 3>;  // columns X1(x), X2(x)
using Mat33 = std::array<std::array<double, 3>, 3>;

inline HPoint group_mul(const HPoint& a, const HPoint& b) {
  return {a.x1 + b.x1, a.x2 + b.x2, a.x3 + b.x3 - a.x2 * b.x1 + a.x1 * b.x2};
}

inline HPoint group_inv(const HPoint& a) { return {-a.x1, -a.x2, -a.x3}; }

inline HPoint group_minus(const HPoint& a, const HPoint& b) {
  return group_mul(a, group_inv(b));
}

inline HPoint dilate(double lambda, const HPoint& a) {
  if (!(lambda > 0.0)) throw std::invalid_argument("dilate: lambda must be positive");
  return {lambda * a.x1, lambda * a.x2, lambda * lambda * a.x3};
}

// Homogeneous gauge ((x1^2+x2^2)^2 + x3^2)^(1/4).
inline double gauge_norm(const HPoint& a) {
  const double r2 = a.x1 * a.x1 + a.x2 * a.x2;
  return std::pow(r2 * r2 + a.x3 * a.x3, 0.25);
}

// Gauge distance. Written as ||b^{-1} (+) a|| so that left translations are
// isometries: d(z(+)a, z(+)b) = d(a, b).
inline double h_distance(const HPoint& a, const HPoint& b) {
  return gauge_norm(group_mul(group_inv(b), a));
}

struct PavageDecomposition {
  std::array<long long, 3> z{};  // lattice part
  HPoint q;                      // canonical representative in [0,1)^3
};

// Unique (z, q) with z in Z^3, q in [0,1)^3 and z (+) q = a. Ties at exact
// integers fall to the lower cell.
inline PavageDecomposition pavage(const HPoint& a) {
  PavageDecomposition d;
  const double f1 = std::floor(a.x1);
  const double f2 = std::floor(a.x2);
  d.q.x1 = a.x1 - f1;
  d.q.x2 = a.x2 - f2;
  // z (+) q = a requires q3 = a3 - z3 + z2 q1 - z1 q2 in [0,1).
  const double s = a.x3 + f2 * d.q.x1 - f1 * d.q.x2;
  const double f3 = std::floor(s);
  d.q.x3 = s - f3;
  d.z = {static_cast<long long>(f1), static_cast<long long>(f2),
         static_cast<long long>(f3)};
  // Guard against q landing exactly on 1 through rounding.
  if (d.q.x1 >= 1.0) { d.q.x1 -= 1.0; d.z[0] += 1; }
  if (d.q.x2 >= 1.0) { d.q.x2 -= 1.0; d.z[1] += 1; }
  if (d.q.x3 >= 1.0) { d.q.x3 -= 1.0; d.z[2] += 1; }
  return d;
}

inline HPoint lattice_point(long long z1, long long z2, long long z3) {
  return {static_cast<double>(z1), static_cast<double>(z2),
          static_cast<double>(z3)};
}

inline HPoint canonical_rep(const HPoint& a) { return pavage(a).q; }

// Distance on the Heisenberg torus H^1 / Z^3. Both arguments are
// canonicalized; the infimum over lattice translates is realized inside the
// window {-2,..,2}^3 for canonical representatives (asserted by an exhaustive
// window test in the suite).
inline double torus_distance(const HPoint& a, const HPoint& b) {
  const HPoint qa_inv = group_inv(pavage(a).q);
  const HPoint qb = pavage(b).q;
  double best = std::numeric_limits<double>::infinity();
  for (int z1 = -2; z1 <= 2; ++z1)
    for (int z2 = -2; z2 <= 2; ++z2)
      for (int z3 = -2; z3 <= 2; ++z3) {
        const HPoint v = lattice_point(z1, z2, z3);
        const double d = gauge_norm(group_mul(qa_inv, group_mul(v, qb)));
        if (d < best) best = d;
      }
  return best;
}

// Frame matrix B(x): columns X1(x) = (1,0,-x2), X2(x) = (0,1,x1).
inline Mat32 matrix_B(const HPoint& a) {
  return {{{1.0, 0.0}, {0.0, 1.0}, {-a.x2, a.x1}}};
}

// Regularized frame B^eps with third row (-x2, x1, eps).
inline Mat33 matrix_B_eps(const HPoint& a, double eps) {
  if (eps < 0.0) throw std::invalid_argument("matrix_B_eps: eps must be >= 0");
  return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {-a.x2, a.x1, eps}}};
}

// C^2 cutoff: identity on [-N,N], zero outside [-2N,2N], quintic-smoothstep
// blend in between (value and first two derivatives match at both ends).
inline double psi_cutoff(double xi, double N) {
  if (!(N > 0.0)) throw std::invalid_argument("psi_cutoff: N must be positive");
  const double axi = std::abs(xi);
  if (axi <= N) return xi;
  if (axi >= 2.0 * N) return 0.0;
  const double s = (axi - N) / N;  // in (0,1)
  // Quintic with h(0)=1, h'(0)=h''(0)=0 (matching psi=xi up to second order
  // after multiplication) is built on the blend psi = xi * w(s) with
  // w = 1 - s^3(6s^2 - 15s + 10).
  const double w = 1.0 - s * s * s * (6.0 * s * s - 15.0 * s + 10.0);
  return xi * w;
}

inline Mat33 matrix_B_trunc(const HPoint& a, double eps, double N) {
  if (!(eps > 0.0)) throw std::invalid_argument("matrix_B_trunc: eps must be > 0");
  if (!(N > 0.0)) throw std::invalid_argument("matrix_B_trunc: N must be > 0");
  return {{{1.0, 0.0, 0.0},
           {0.0, 1.0, 0.0},
           {-psi_cutoff(a.x2, N), psi_cutoff(a.x1, N), eps}}};
}

using ScalarField = std::function<double(const HPoint&)>;

// Central differences along the integral curves of X1, X2. The curve
// h -> a (+) (h,0,0) is the exact X1 flow, so these converge to (X1 f, X2 f)
// at second order in h.
inline HVector2 horizontal_gradient_fd(const ScalarField& f, const HPoint& a,
                                       double h = 1e-4) {
  if (!(h > 0.0)) throw std::invalid_argument("horizontal_gradient_fd: h must be > 0");
  const double g1 = (f(group_mul(a, {h, 0.0, 0.0})) - f(group_mul(a, {-h, 0.0, 0.0}))) / (2.0 * h);
  const double g2 = (f(group_mul(a, {0.0, h, 0.0})) - f(group_mul(a, {0.0, -h, 0.0}))) / (2.0 * h);
  return {g1, g2};
}

inline double horizontal_laplacian_fd(const ScalarField& f, const HPoint& a,
                                      double h = 1e-4) {
  if (!(h > 0.0)) throw std::invalid_argument("horizontal_laplacian_fd: h must be > 0");
  const double fc = f(a);
  const double d11 = f(group_mul(a, {h, 0.0, 0.0})) - 2.0 * fc + f(group_mul(a, {-h, 0.0, 0.0}));
  const double d22 = f(group_mul(a, {0.0, h, 0.0})) - 2.0 * fc + f(group_mul(a, {0.0, -h, 0.0}));
  return (d11 + d22) / (h * h);
}

using HorizontalField = std::function<HVector2(const HPoint&)>;

inline double horizontal_divergence_fd(const HorizontalField& v, const HPoint& a,
                                       double h = 1e-4) {
  if (!(h > 0.0)) throw std::invalid_argument("horizontal_divergence_fd: h must be > 0");
  const double d1 = (v(group_mul(a, {h, 0.0, 0.0})).v1 - v(group_mul(a, {-h, 0.0, 0.0})).v1) / (2.0 * h);
  const double d2 = (v(group_mul(a, {0.0, h, 0.0})).v2 - v(group_mul(a, {0.0, -h, 0.0})).v2) / (2.0 * h);
  return d1 + d2;
}

// Richardson-extrapolated variant (two-step central difference).
inline HVector2 horizontal_gradient_fd_richardson(const ScalarField& f,
                                                  const HPoint& a, double h = 1e-4) {
  const HVector2 gh = horizontal_gradient_fd(f, a, h);
  const HVector2 g2h = horizontal_gradient_fd(f, a, 2.0 * h);
  return {(4.0 * gh.v1 - g2h.v1) / 3.0, (4.0 * gh.v2 - g2h.v2) / 3.0};
}

}  // namespace hmfg
