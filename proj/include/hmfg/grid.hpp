// Space-time value grids. Periodic grids live on the pavage cell with the
// sheared identifications of the Heisenberg torus:
//   u(q1+1, q2, s) = u(q1, q2, s - q2),  u(q1, q2+1, s) = u(q1, q2, s + q1),
//   u(q1, q2, s+1) = u(q1, q2, s),
// realized exactly on nodes when n3 is a multiple of n1 and n2. Box grids use
// clamped trilinear interpolation.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hmfg/hgroup.hpp"

namespace hmfg {

enum class GridMode { periodic, box };

struct GridSpec {
  GridMode mode = GridMode::periodic;
  int n1 = 32, n2 = 32, n3 = 32;
  // Box bounds (ignored in periodic mode).
  std::array<double, 3> lo{-3.0, -3.0, -6.0};
  std::array<double, 3> hi{3.0, 3.0, 6.0};
  double T = 1.0;
  int M = 64;

  void validate() const {
    if (n1 < 2 || n2 < 2 || n3 < 2 || M < 1) throw std::invalid_argument("GridSpec: dims");
    if (mode == GridMode::periodic && (n3 % n1 != 0 || n3 % n2 != 0))
      throw std::invalid_argument(
          "GridSpec: periodic wrap needs n3 divisible by n1 and n2");
    if (mode == GridMode::box)
      for (int d = 0; d < 3; ++d)
        if (!(hi[d] > lo[d])) throw std::invalid_argument("GridSpec: box bounds");
  }

  double dt() const { return T / M; }
  double spacing(int d) const {
    if (mode == GridMode::periodic) return 1.0 / (d == 0 ? n1 : d == 1 ? n2 : n3);
    const int n = d == 0 ? n1 : d == 1 ? n2 : n3;
    return (hi[d] - lo[d]) / (n - 1);
  }
  double min_spacing() const {
    return std::min(spacing(0), std::min(spacing(1), spacing(2)));
  }
  std::size_t nodes() const {
    return static_cast<std::size_t>(n1) * n2 * n3;
  }
  HPoint node(int i1, int i2, int i3) const {
    if (mode == GridMode::periodic)
      return {i1 * spacing(0), i2 * spacing(1), i3 * spacing(2)};
    return {lo[0] + i1 * spacing(0), lo[1] + i2 * spacing(1), lo[2] + i3 * spacing(2)};
  }
  bool contains(const HPoint& p) const {
    if (mode == GridMode::periodic) return true;
    return p.x1 >= lo[0] && p.x1 <= hi[0] && p.x2 >= lo[1] && p.x2 <= hi[1] &&
           p.x3 >= lo[2] && p.x3 <= hi[2];
  }
};

class ValueGrid {
 public:
  ValueGrid() = default;

  explicit ValueGrid(const GridSpec& spec) : spec_(spec) {
    spec_.validate();
    // One ghost layer per axis in periodic mode removes wrap branches from
    // the interpolation hot path.
    p1_ = spec_.n1 + (spec_.mode == GridMode::periodic ? 1 : 0);
    p2_ = spec_.n2 + (spec_.mode == GridMode::periodic ? 1 : 0);
    p3_ = spec_.n3 + (spec_.mode == GridMode::periodic ? 1 : 0);
    slices_.assign(static_cast<std::size_t>(spec_.M + 1),
                   std::vector<double>(static_cast<std::size_t>(p1_) * p2_ * p3_, 0.0));
  }

  const GridSpec& spec() const { return spec_; }
  double dt() const { return spec_.dt(); }
  int slices() const { return spec_.M + 1; }

  double& at(int slice, int i1, int i2, int i3) {
    return slices_[slice][idx(i1, i2, i3)];
  }
  double at(int slice, int i1, int i2, int i3) const {
    return slices_[slice][idx(i1, i2, i3)];
  }

  // Chart value at node indices in [-1..n] per axis (periodic: one wrap via
  // the sheared identifications; the x3 axis wraps plainly).
  double chart_value(int slice, int j1, int j2, int j3) const {
    if (spec_.mode == GridMode::box) return at(slice, j1, j2, j3);
    const int s2 = spec_.n3 / spec_.n2;
    const int s1 = spec_.n3 / spec_.n1;
    int shift = 0;
    if (j1 == spec_.n1) { j1 = 0; shift -= j2 * s2; }
    else if (j1 == -1) { j1 = spec_.n1 - 1; shift += j2 * s2; }
    if (j2 == spec_.n2) { j2 = 0; shift += j1 * s1; }
    else if (j2 == -1) { j2 = spec_.n2 - 1; shift -= j1 * s1; }
    int j3w = (j3 + shift) % spec_.n3;
    if (j3w < 0) j3w += spec_.n3;
    return at(slice, j1, j2, j3w);
  }

  // Must be called after writing a slice's interior in periodic mode.
  void seal_slice(int slice) {
    if (spec_.mode == GridMode::box) return;
    for (int j1 = 0; j1 <= spec_.n1; ++j1)
      for (int j2 = 0; j2 <= spec_.n2; ++j2)
        for (int j3 = 0; j3 <= spec_.n3; ++j3) {
          if (j1 < spec_.n1 && j2 < spec_.n2 && j3 < spec_.n3) continue;
          slices_[slice][idx(j1, j2, j3)] = chart_value(slice, j1, j2, j3);
        }
  }

  // Trilinear interpolation in space at a given time slice.
  double interpolate(int slice, const HPoint& x) const {
    const std::vector<double>& v = slices_[slice];
    double f1, f2, f3;
    int i1, i2, i3;
    if (spec_.mode == GridMode::periodic) {
      const HPoint q = canonical_rep(x);
      locate(q.x1 * spec_.n1, spec_.n1, i1, f1);
      locate(q.x2 * spec_.n2, spec_.n2, i2, f2);
      locate(q.x3 * spec_.n3, spec_.n3, i3, f3);
    } else {
      locate((clampd(x.x1, spec_.lo[0], spec_.hi[0]) - spec_.lo[0]) / spec_.spacing(0),
             spec_.n1 - 1, i1, f1);
      locate((clampd(x.x2, spec_.lo[1], spec_.hi[1]) - spec_.lo[1]) / spec_.spacing(1),
             spec_.n2 - 1, i2, f2);
      locate((clampd(x.x3, spec_.lo[2], spec_.hi[2]) - spec_.lo[2]) / spec_.spacing(2),
             spec_.n3 - 1, i3, f3);
    }
    const std::size_t s23 = static_cast<std::size_t>(p2_) * p3_;
    const double* base = v.data() + i1 * s23 + static_cast<std::size_t>(i2) * p3_ + i3;
    const double c000 = base[0], c001 = base[1];
    const double c010 = base[p3_], c011 = base[p3_ + 1];
    const double c100 = base[s23], c101 = base[s23 + 1];
    const double c110 = base[s23 + p3_], c111 = base[s23 + p3_ + 1];
    const double a00 = c000 + f3 * (c001 - c000);
    const double a01 = c010 + f3 * (c011 - c010);
    const double a10 = c100 + f3 * (c101 - c100);
    const double a11 = c110 + f3 * (c111 - c110);
    const double b0 = a00 + f2 * (a01 - a00);
    const double b1 = a10 + f2 * (a11 - a10);
    return b0 + f1 * (b1 - b0);
  }

  // Space-time value, linear in t between slices.
  double value(const HPoint& x, double t) const {
    const double s = clampd(t, 0.0, spec_.T) / spec_.dt();
    int j = static_cast<int>(s);
    if (j >= spec_.M) j = spec_.M - 1;
    const double ft = s - j;
    const double v0 = interpolate(j, x);
    const double v1 = interpolate(j + 1, x);
    return v0 + ft * (v1 - v0);
  }

  double time_of_slice(int j) const { return spec_.dt() * j; }
  int slice_of_time(double t) const {
    int j = static_cast<int>(clampd(t, 0.0, spec_.T) / spec_.dt() + 0.5);
    return std::min(j, spec_.M);
  }

 private:
  static double clampd(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
  }
  // index + fraction with the index clamped to [0, max_idx-?]; in periodic
  // mode q*n is in [0, n) and the ghost layer absorbs i = n-1 + 1.
  static void locate(double u, int max_cell, int& i, double& f) {
    i = static_cast<int>(u);
    if (i > max_cell - 1) i = max_cell - 1;
    if (i < 0) i = 0;
    f = u - i;
    if (f < 0.0) f = 0.0;
    if (f > 1.0) f = 1.0;
  }

  std::size_t idx(int i1, int i2, int i3) const {
    return (static_cast<std::size_t>(i1) * p2_ + i2) * p3_ + i3;
  }

  GridSpec spec_;
  int p1_ = 0, p2_ = 0, p3_ = 0;
  std::vector<std::vector<double>> slices_;
};

}  // namespace hmfg
