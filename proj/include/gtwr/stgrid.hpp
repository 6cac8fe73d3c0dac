#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtwr/csv.hpp"
#include "gtwr/geometry.hpp"

namespace gtwr {

// One space-time location z = (t, u) with u in (0,1)^d.
struct SpaceTimePoint {
  double t = 0.0;
  Eigen::VectorXd u;
};

// max(|dt|, ||du||_2): the norm that defines the sampling neighborhoods.
inline double chebyshev_distance(const SpaceTimePoint& a, const SpaceTimePoint& b) {
  if (a.u.size() != b.u.size())
    throw std::invalid_argument("chebyshev_distance: spatial dimensions differ");
  return std::max(std::abs(a.t - b.t), (a.u - b.u).norm());
}

// Neighborhood radius delta_n: the unique radius for which each of the n
// space-time cells occupies volume 1/n, i.e. 2*delta^(d+1)*lambda_ball(d) = 1/n.
inline double delta_n(std::int64_t n_total, int d) {
  if (n_total < 1) throw std::invalid_argument("delta_n: need n >= 1");
  if (d < 1) throw std::invalid_argument("delta_n: need d >= 1");
  return std::pow(1.0 / (2.0 * static_cast<double>(n_total) * lambda_ball(d)), 1.0 / (d + 1));
}

// Pixel-center lattice on (0,1)^d: coordinates (i + 1/2)/nx per axis, sites
// enumerated with the first coordinate varying fastest.  Rows are sites.
inline Eigen::MatrixXd make_pixel_grid(int nx, int d) {
  if (nx < 1) throw std::invalid_argument("make_pixel_grid: need nx >= 1");
  if (d < 1) throw std::invalid_argument("make_pixel_grid: need d >= 1");
  std::int64_t ns = 1;
  for (int a = 0; a < d; ++a) ns *= nx;
  Eigen::MatrixXd sites(ns, d);
  for (std::int64_t j = 0; j < ns; ++j) {
    std::int64_t rem = j;
    for (int a = 0; a < d; ++a) {
      const auto idx = rem % nx;
      rem /= nx;
      sites(j, a) = (static_cast<double>(idx) + 0.5) / nx;
    }
  }
  return sites;
}

// The sampling design used throughout: nx^d pixel-center sites, nt time
// slices at pixel centers of [0,1], and the matching neighborhood radius.
// Cells are indexed time-major: cell = k*ns + j for slice k and site j.
struct RegularDesign {
  int nx = 0;
  int nt = 0;
  int d = 0;
  Eigen::MatrixXd sites;            // ns x d
  std::vector<double> time_points;  // size nt, (k + 1/2)/nt
  double delta = 0.0;               // delta_n for n = ns*nt

  std::int64_t ns() const { return sites.rows(); }
  std::int64_t n() const { return ns() * nt; }

  std::int64_t cell(int time_index, std::int64_t site) const {
    return static_cast<std::int64_t>(time_index) * ns() + site;
  }
  int cell_time(std::int64_t c) const { return static_cast<int>(c / ns()); }
  std::int64_t cell_site(std::int64_t c) const { return c % ns(); }

  SpaceTimePoint point(std::int64_t c) const {
    SpaceTimePoint z;
    z.t = time_points[static_cast<std::size_t>(cell_time(c))];
    z.u = sites.row(cell_site(c)).transpose();
    return z;
  }
};

inline RegularDesign make_design(int nx, int nt, int d = 2) {
  if (nt < 1) throw std::invalid_argument("make_design: need nt >= 1");
  RegularDesign g;
  g.nx = nx;
  g.nt = nt;
  g.d = d;
  g.sites = make_pixel_grid(nx, d);
  g.time_points.resize(nt);
  for (int k = 0; k < nt; ++k) g.time_points[k] = (k + 0.5) / nt;
  g.delta = delta_n(g.n(), d);
  return g;
}

inline void write_grid_csv(const RegularDesign& g, const std::string& path) {
  csv::Writer w(path);
  w.begin_row();
  w.field(std::string("site_id"));
  for (int a = 0; a < g.d; ++a) w.field("x_" + std::to_string(a + 1));
  w.end_row();
  for (std::int64_t j = 0; j < g.ns(); ++j) {
    w.begin_row();
    w.field(static_cast<long long>(j));
    for (int a = 0; a < g.d; ++a) w.field(g.sites(j, a));
    w.end_row();
  }
}

}  // namespace gtwr
