#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gtwr/geometry.hpp"
#include "gtwr/stgrid.hpp"

namespace gtwr {

enum class KernelFamily { gaussian, bisquare };

// Space-time kernel K(z) evaluated on the anisotropic metric
// d^2(z) = mu_t * dt^2 + mu_s * ||du||^2, with bandwidth applied as K(z/h).
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double h = 1.0;
  double mu_t = 1.0;
  double mu_s = 1.0;

  void check() const {
    if (h <= 0.0) throw std::invalid_argument("KernelSpec: bandwidth h must be > 0");
    if (mu_t <= 0.0 || mu_s <= 0.0) throw std::invalid_argument("KernelSpec: mu_t, mu_s must be > 0");
  }
};

// Squared anisotropic metric of a displacement (dt, du).
inline double st_metric_sq(double dt, const Eigen::VectorXd& du, double mu_t, double mu_s) {
  return mu_t * dt * dt + mu_s * du.squaredNorm();
}

// Kernel value as a function of the squared metric q = d^2(z):
//   gaussian: (2 pi)^{-1/2} exp(-q/2)
//   bisquare: (1 - q)^2 for q < 1, else 0
inline double kernel_profile(KernelFamily family, double q) {
  switch (family) {
    case KernelFamily::gaussian:
      return 0.3989422804014327 * std::exp(-0.5 * q);
    case KernelFamily::bisquare:
      return q < 1.0 ? (1.0 - q) * (1.0 - q) : 0.0;
  }
  throw std::invalid_argument("kernel_profile: unknown family");
}

inline double st_kernel(const KernelSpec& spec, double dt, const Eigen::VectorXd& du) {
  spec.check();
  return kernel_profile(spec.family, st_metric_sq(dt, du, spec.mu_t, spec.mu_s));
}

// K_h(z) = K(z/h); scaling the displacement, not the kernel height.
inline double k_h(const KernelSpec& spec, double dt, const Eigen::VectorXd& du) {
  spec.check();
  return kernel_profile(spec.family, st_metric_sq(dt, du, spec.mu_t, spec.mu_s) / (spec.h * spec.h));
}

inline double k_h(const KernelSpec& spec, const SpaceTimePoint& a, const SpaceTimePoint& b) {
  return k_h(spec, a.t - b.t, (a.u - b.u).eval());
}

// Total kernel mass Int_{R^{d+1}} K(z) dz.  The gaussian profile integrates to
// (2 pi)^{d/2} mu_t^{-1/2} mu_s^{-d/2} (it is not a probability density); the
// bisquare mass follows from the radial moment of (1-r^2)^2.
inline double kernel_mass(KernelFamily family, double mu_t, double mu_s, int d) {
  if (mu_t <= 0.0 || mu_s <= 0.0) throw std::invalid_argument("kernel_mass: mu_t, mu_s must be > 0");
  const double metric_jacobian = std::pow(mu_t, -0.5) * std::pow(mu_s, -0.5 * d);
  switch (family) {
    case KernelFamily::gaussian:
      return std::pow(2.0 * 3.14159265358979323846, 0.5 * d) * metric_jacobian;
    case KernelFamily::bisquare: {
      const int m = d + 1;  // space-time dimension
      const double radial = 1.0 / (m) - 2.0 / (m + 2) + 1.0 / (m + 4);
      return lambda_ball(m) * m * radial * metric_jacobian;
    }
  }
  throw std::invalid_argument("kernel_mass: unknown family");
}

// Weights of every observation cell relative to one target cell.
struct WeightVector {
  Eigen::VectorXd w;
  bool all_zero = false;  // degenerate: compactly supported kernel saw nothing
};

// Generic weight vector for arbitrary observation points.
inline WeightVector weight_vector(const KernelSpec& spec, const SpaceTimePoint& target,
                                  const std::vector<SpaceTimePoint>& obs) {
  spec.check();
  WeightVector out;
  out.w.resize(static_cast<Eigen::Index>(obs.size()));
  const double inv_h2 = 1.0 / (spec.h * spec.h);
  for (std::size_t l = 0; l < obs.size(); ++l) {
    const double q =
        st_metric_sq(target.t - obs[l].t, (target.u - obs[l].u).eval(), spec.mu_t, spec.mu_s);
    out.w[static_cast<Eigen::Index>(l)] = kernel_profile(spec.family, q * inv_h2);
  }
  out.all_zero = (out.w.maxCoeff() <= 0.0);
  return out;
}

// Precomputed pairwise weights on a regular design.  The metric splits into a
// time part and a space part; for the gaussian profile the kernel itself then
// factorizes, w = (2pi)^{-1/2} * T(kt,k) * S(jt,j), which turns the O(n^2)
// exp() cost of a full fit pass into O(nt^2 + ns^2).  The bisquare profile
// does not factorize, so the table keeps squared distances instead.
class GridKernelTable {
 public:
  GridKernelTable(const KernelSpec& spec, const RegularDesign& g) : spec_(spec) {
    spec.check();
    const auto nt = g.nt;
    const auto ns = g.ns();
    T_.resize(nt, nt);
    S_.resize(ns, ns);
    const double inv_h2 = 1.0 / (spec.h * spec.h);
    factorized_ = (spec.family == KernelFamily::gaussian);
    for (int k = 0; k < nt; ++k)
      for (int k2 = 0; k2 <= k; ++k2) {
        const double dt = g.time_points[k] - g.time_points[k2];
        const double q = spec.mu_t * dt * dt * inv_h2;
        T_(k, k2) = T_(k2, k) = factorized_ ? std::exp(-0.5 * q) : q;
      }
    for (std::int64_t j = 0; j < ns; ++j)
      for (std::int64_t j2 = 0; j2 <= j; ++j2) {
        const double q = spec.mu_s * (g.sites.row(j) - g.sites.row(j2)).squaredNorm() * inv_h2;
        S_(j, j2) = S_(j2, j) = factorized_ ? std::exp(-0.5 * q) : q;
      }
  }

  double weight(int kt, std::int64_t jt, int k, std::int64_t j) const {
    if (factorized_) return 0.3989422804014327 * T_(kt, k) * S_(jt, j);
    return kernel_profile(spec_.family, T_(kt, k) + S_(jt, j));
  }

  const KernelSpec& spec() const { return spec_; }

 private:
  KernelSpec spec_;
  bool factorized_ = false;
  Eigen::MatrixXd T_, S_;
};

// Weight vector over all cells of a regular design, ordered time-major to
// match the design's cell indexing.
inline WeightVector weight_vector(const KernelSpec& spec, const RegularDesign& g,
                                  std::int64_t target_cell) {
  spec.check();
  WeightVector out;
  out.w.resize(g.n());
  const double inv_h2 = 1.0 / (spec.h * spec.h);
  const int kt = g.cell_time(target_cell);
  const auto jt = g.cell_site(target_cell);
  const auto ns = g.ns();
  for (int k = 0; k < g.nt; ++k) {
    const double dt = g.time_points[kt] - g.time_points[k];
    const double qt = spec.mu_t * dt * dt;
    for (std::int64_t j = 0; j < ns; ++j) {
      const double q = qt + spec.mu_s * (g.sites.row(jt) - g.sites.row(j)).squaredNorm();
      out.w[g.cell(k, j)] = kernel_profile(spec.family, q * inv_h2);
    }
  }
  out.all_zero = (out.w.maxCoeff() <= 0.0);
  return out;
}

}  // namespace gtwr
