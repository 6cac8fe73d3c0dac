#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtwr/csv.hpp"
#include "gtwr/geometry.hpp"
#include "gtwr/rng.hpp"
#include "gtwr/stgrid.hpp"

namespace gtwr {


// ---------------------------------------------------------------------------
// Scalar building blocks
// ---------------------------------------------------------------------------

// Fractional Brownian motion covariance R_H(s,t) = (s^2H + t^2H - |s-t|^2H)/2.
inline double fbm_cov(double s, double t, double H) {
  if (H <= 0.0 || H >= 1.0) throw std::invalid_argument("fbm_cov: H must lie in (0,1)");
  if (s < 0.0 || t < 0.0) throw std::invalid_argument("fbm_cov: times must be >= 0");
  return 0.5 * (std::pow(s, 2.0 * H) + std::pow(t, 2.0 * H) - std::pow(std::abs(s - t), 2.0 * H));
}

// Covariance of fBm increments over the windows [t-delta, t+delta] and
// [t'-delta, t'+delta]: (|dt+2d|^2H + |dt-2d|^2H - 2|dt|^2H)/2.
inline double temporal_increment_cov(double t1, double t2, double delta, double H) {
  if (H <= 0.0 || H >= 1.0) throw std::invalid_argument("temporal_increment_cov: H must lie in (0,1)");
  if (delta <= 0.0) throw std::invalid_argument("temporal_increment_cov: delta must be > 0");
  const double dt = std::abs(t1 - t2);
  if (H == 0.5) return std::max(0.0, 2.0 * delta - dt);  // independent increments, exact
  const double p = 2.0 * H;
  return 0.5 * (std::pow(dt + 2.0 * delta, p) + std::pow(std::abs(dt - 2.0 * delta), p) -
                2.0 * std::pow(dt, p));
}

namespace detail {

// Riesz composition constant gamma_{alpha,d}; analytic on (-d,d) away from the
// poles of Gamma(alpha/2).  Positive for 0 < alpha < d, negative on (-1,0) --
// the sign flows through the continuation below and products stay covariances.
inline double riesz_gamma(double alpha, int d) {
  return std::pow(2.0, d - alpha) * std::pow(pi, 0.5 * d) * std::tgamma(0.5 * (d - alpha)) /
         std::tgamma(0.5 * alpha);
}

}  // namespace detail

// gamma_{alpha,d} = 2^{d-alpha} pi^{d/2} Gamma((d-alpha)/2) / Gamma(alpha/2),
// the normalization that makes ||u||^{-d+alpha} the spectral transform of
// ||xi||^{-alpha} d xi.  Defined here for 0 < alpha < d.
inline double riesz_constant(double alpha, int d) {
  if (d < 1) throw std::invalid_argument("riesz_constant: dimension must be >= 1");
  if (!(alpha > 0.0 && alpha < d))
    throw std::invalid_argument(
        "riesz_constant: alpha must lie in (0, d); alpha = 0 is the white-noise case handled "
        "without this constant");
  return detail::riesz_gamma(alpha, d);
}

// ---------------------------------------------------------------------------
// Unit-scale ball-pair integrals
// ---------------------------------------------------------------------------
//
// The spatial half of the noise covariance reduces, after rescaling by the
// neighborhood radius, to
//
//   C(r) = gamma_{alpha,d} * J(r),
//   J(r) = Int_{B(0,1) x B(r e1,1)} ||u - v||^{alpha-d} du dv,
//
// with C(r) = lens volume for alpha = 0.  J is computed from the radial form
//
//   J(r) = Int_0^{r+2} s^{alpha-1} A(s, r) ds,
//   A(s, r) = Int_{S^{d-1}} V_ov(|s w - r e1|) dw   (V_ov = ball overlap volume),
//
// which is exact for alpha > 0.  For alpha < 0 the real-space integrand is no
// longer locally integrable when the balls overlap, but both sides of the
// spectral identity are analytic in alpha, so the unique continuation is
// obtained by subtracting the s -> 0 expansion A0 + A1*s of A and integrating
// it in closed form:
//
//   J(r) = Int_0^{s0} s^{alpha-1} (A - A0 - A1 s) ds
//          + A0 s0^alpha/alpha + A1 s0^{alpha+1}/(alpha+1)
//          + Int_{s0}^{r+2} s^{alpha-1} A ds.
//
// Tests cross-check this against the d=1 closed form, a spectral Hankel
// evaluation, and plain Monte Carlo on disjoint balls.

namespace detail {

// A(s,r): surface integral over the unit sphere of the overlap volume at
// distance |s w - r e1|.  Total sphere measure, not an average.
inline double angular_overlap(int d, double s, double r) {
  if (s < 0.0 || r < 0.0) throw std::invalid_argument("angular_overlap: negative radius");
  if (s == 0.0 || r == 0.0) return sphere_surface(d) * ball_overlap_volume(d, std::max(s, r));
  if (std::abs(s - r) >= 2.0) return 0.0;
  switch (d) {
    case 1:
      return ball_overlap_volume(1, std::abs(s - r)) + ball_overlap_volume(1, s + r);
    case 2: {
      // Polar angle integral, cut where the pair distance reaches 2.
      double cut = pi;
      if (s + r > 2.0) {
        const double c = (s * s + r * r - 4.0) / (2.0 * s * r);
        cut = std::acos(std::clamp(c, -1.0, 1.0));
      }
      auto f = [&](double th) {
        const double d2 = s * s + r * r - 2.0 * s * r * std::cos(th);
        return ball_overlap_volume(2, std::sqrt(std::max(0.0, d2)));
      };
      // Modest depth: the integrand has at worst a (2-t)^{3/2} endpoint cusp,
      // and an unreachable relative tolerance on near-zero values would send
      // the nested quadrature into full-depth refinement.
      return 2.0 * boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, 0.0, cut, 8,
                                                                                 1e-9);
    }
    case 3: {
      // The overlap volume is polynomial, so the sphere average integrates in
      // closed form: A = (2 pi / (s r)) Int_{|s-r|}^{min(s+r,2)} V_ov(t) t dt.
      const double a = std::abs(s - r);
      const double b = std::min(s + r, 2.0);
      if (b <= a) return 0.0;
      auto P = [](double t) {  // antiderivative of V_ov3(t) * t
        return pi * (std::pow(t, 5) / 5.0 - 4.0 * t * t * t + 8.0 * t * t) / 12.0;
      };
      return 2.0 * pi / (s * r) * (P(b) - P(a));
    }
    default:
      throw std::invalid_argument("angular_overlap: only d in {1,2,3} is supported");
  }
}

inline double ball_pair_energy(double alpha, int d, double r) {
  if (r < 0.0) throw std::invalid_argument("ball_pair_energy: separation must be >= 0");
  if (d == 1) {
    // Second antiderivative of |x|^{alpha-1}; the combination below is the
    // closed form for all alpha in (-1,1)\{0} by analytic continuation.
    auto Psi = [&](double x) {
      return std::pow(std::abs(x), 1.0 + alpha) / (alpha * (1.0 + alpha));
    };
    return Psi(r + 2.0) + Psi(r - 2.0) - 2.0 * Psi(r);
  }

  const double hi = r + 2.0;
  const double lo = std::max(0.0, r - 2.0);
  auto outer = [&](double s) { return std::pow(s, alpha - 1.0) * angular_overlap(d, s, r); };

  // Piece boundaries where A(s, r) changes analytic form.
  std::vector<double> pts;
  for (double b : {std::abs(2.0 - r), r})
    if (b > lo + 1e-13 && b < hi - 1e-13) pts.push_back(b);
  pts.push_back(hi);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-13; }),
            pts.end());

  double total = 0.0;
  double cursor = lo;
  boost::math::quadrature::tanh_sinh<double> ts(10);

  if (lo == 0.0) {
    // Near s = 0 the raw integrand s^{alpha-1} A(s, r) either overflows
    // (tanh_sinh probes abscissae down to ~1e-320) or loses all precision,
    // so the leading Taylor terms of A are integrated in closed form and
    // only the remainder is quadratured; the remainder is O(s^{1+alpha}) or
    // better, so truncating it below s_min is an O(s_min) absolute error.
    constexpr double s_min = 1e-10;
    const double a0 = sphere_surface(d) * ball_overlap_volume(d, std::min(r, 2.0));
    const double a1 = (r == 0.0) ? sphere_surface(d) * ball_overlap_volume_slope0(d) : 0.0;
    const double s0 = (r == 0.0) ? 1.0 : 0.5 * std::min(r, 2.0 - r);
    if (s0 > 1e-12) {
      auto sub = [&](double s) {
        if (s < s_min) return 0.0;
        return std::pow(s, alpha - 1.0) * (angular_overlap(d, s, r) - a0 - a1 * s);
      };
      total += ts.integrate(sub, 0.0, s0, 1e-10);
      // The subtracted terms integrate in closed form; for alpha < 0 this is
      // the analytic continuation (the defining property of the model).
      total += a0 * std::pow(s0, alpha) / alpha;
      total += a1 * std::pow(s0, alpha + 1.0) / (alpha + 1.0);
      cursor = s0;
    } else {
      // r at (or next to) 2: A itself vanishes like s^{(d+1)/2} at the
      // origin, so the guarded raw integrand is integrable and tiny there.
      auto guarded = [&](double s) { return s < s_min ? 0.0 : outer(s); };
      const double first = pts.front();
      total += ts.integrate(guarded, 0.0, first, 1e-10);
      cursor = first;
      pts.erase(pts.begin());
      if (pts.empty()) return total;
    }
  }

  for (double b : pts) {
    if (b <= cursor + 1e-15) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(outer, cursor, b, 10,
                                                                           1e-10);
    cursor = b;
  }
  return total;
}

// C(r): unit-scale spatial increment covariance at normalized separation r.
inline double unit_cov(double alpha, int d, double r) {
  if (alpha == 0.0) return ball_overlap_volume(d, r);
  return riesz_gamma(alpha, d) * ball_pair_energy(alpha, d, r);
}

inline void check_alpha(double alpha, int d, const char* who) {
  if (d < 1 || d > 3) throw std::invalid_argument(std::string(who) + ": only d in {1,2,3} is supported");
  if (!(alpha > -1.0 && alpha < d))
    throw std::invalid_argument(std::string(who) + ": alpha must lie in (-1, d)");
}

}  // namespace detail

// Unit-scale spatial variance sigma^2 = C(0); exact lambda_ball for alpha = 0,
// numerical continuation quadrature otherwise.
inline double sigma_sq_quadrature(double alpha, int d) {
  detail::check_alpha(alpha, d, "sigma_sq_quadrature");
  return detail::unit_cov(alpha, d, 0.0);
}

// Spatial increment covariance between neighborhoods of radius delta centered
// a given distance apart: delta^{d+alpha} * C(dist/delta).
inline double spatial_increment_cov_dist(double dist, double delta, double alpha, int d) {
  detail::check_alpha(alpha, d, "spatial_increment_cov");
  if (delta <= 0.0) throw std::invalid_argument("spatial_increment_cov: delta must be > 0");
  if (dist < 0.0) throw std::invalid_argument("spatial_increment_cov: distance must be >= 0");
  return std::pow(delta, d + alpha) * detail::unit_cov(alpha, d, dist / delta);
}

inline double spatial_increment_cov(const Eigen::VectorXd& u1, const Eigen::VectorXd& u2,
                                    double delta, double alpha, int d) {
  if (u1.size() != d || u2.size() != d)
    throw std::invalid_argument("spatial_increment_cov: center dimension mismatch");
  return spatial_increment_cov_dist((u1 - u2).norm(), delta, alpha, d);
}

// ---------------------------------------------------------------------------
// Monte-Carlo estimate of sigma^2 (validation-grade, with standard error)
// ---------------------------------------------------------------------------

struct SigmaSqEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long long samples = 0;
};

namespace detail {

// |Fourier transform of the unit-ball indicator|^2 at radial frequency rho.
inline double ball_ft_sq(int d, double rho) {
  if (rho < 1e-4) {
    const double v = lambda_ball(d);
    return v * v;  // FT(0) = ball volume; quadratic term negligible below 1e-4
  }
  switch (d) {
    case 1: {
      const double f = 2.0 * std::sin(rho) / rho;
      return f * f;
    }
    case 2: {
      const double f = 2.0 * pi * std::cyl_bessel_j(1, rho) / rho;
      return f * f;
    }
    case 3: {
      const double f = 4.0 * pi * (std::sin(rho) - rho * std::cos(rho)) / (rho * rho * rho);
      return f * f;
    }
    default:
      throw std::invalid_argument("ball_ft_sq: only d in {1,2,3} is supported");
  }
}

inline Eigen::VectorXd uniform_in_unit_ball(int d, Rng& rng) {
  Eigen::VectorXd x(d);
  for (int a = 0; a < d; ++a) x[a] = rng.next_gaussian();
  const double nrm = x.norm();
  const double radius = std::pow(rng.next_double_pos(), 1.0 / d);
  if (nrm == 0.0) return Eigen::VectorXd::Zero(d);
  return x * (radius / nrm);
}

}  // namespace detail

// Monte-Carlo sigma^2 with a standard error.  For alpha > 0 this is the plain
// two-ball estimate of gamma * Int Int ||u-v||^{alpha-d}; for alpha in (-1,0)
// the same quantity is estimated on the spectral side, sigma^2 =
// Int |F 1_B|^2 ||xi||^{-alpha} d xi, with an importance-sampled radius
// (the real-space integrand is not locally integrable for alpha <= 0).
inline SigmaSqEstimate sigma_sq(double alpha, int d, long long mc_samples, std::uint64_t seed) {
  detail::check_alpha(alpha, d, "sigma_sq");
  if (alpha == 0.0)
    throw std::invalid_argument(
        "sigma_sq: alpha = 0 is white noise in space; sigma^2 = lambda_ball(d) exactly");
  if (mc_samples < 10000) throw std::invalid_argument("sigma_sq: need at least 1e4 samples");

  Rng rng(Rng::derive(seed, rng_stream::mc_oracle));
  double sum = 0.0, sum_sq = 0.0;

  if (alpha > 0.0) {
    const double gamma = detail::riesz_gamma(alpha, d);
    const double vol2 = lambda_ball(d) * lambda_ball(d);
    for (long long i = 0; i < mc_samples; ++i) {
      const Eigen::VectorXd u = detail::uniform_in_unit_ball(d, rng);
      const Eigen::VectorXd v = detail::uniform_in_unit_ball(d, rng);
      const double dist = (u - v).norm();
      const double phi = gamma * vol2 * std::pow(dist, alpha - d);
      sum += phi;
      sum_sq += phi * phi;
    }
  } else {
    // Radial proposal f(rho) = (q-1)(1+rho)^{-q} with q = 2 + alpha in (1,2).
    const double q = 2.0 + alpha;
    const double surf = sphere_surface(d);
    for (long long i = 0; i < mc_samples; ++i) {
      const double u01 = rng.next_double();
      const double rho = std::pow(1.0 - u01, -1.0 / (q - 1.0)) - 1.0;
      const double f = (q - 1.0) * std::pow(1.0 + rho, -q);
      const double g = surf * std::pow(rho, d - 1.0 - alpha) * detail::ball_ft_sq(d, rho);
      const double w = g / f;
      sum += w;
      sum_sq += w * w;
    }
  }

  SigmaSqEstimate est;
  est.samples = mc_samples;
  est.value = sum / mc_samples;
  const double var = std::max(0.0, sum_sq / mc_samples - est.value * est.value);
  est.std_error = std::sqrt(var / mc_samples);
  return est;
}

// ---------------------------------------------------------------------------
// Joint covariance factorization and exact sampling
// ---------------------------------------------------------------------------

struct NoiseSpec {
  double H = 0.5;      // temporal Hurst exponent
  double alpha = 0.0;  // spatial spectral exponent; 0 = white in space
  double scale = 1.0;  // multiplies sampled fields
};

struct CovarianceFactorization {
  Eigen::MatrixXd temporal;         // nt x nt increment covariance
  Eigen::MatrixXd spatial;          // ns x ns increment covariance
  Eigen::MatrixXd temporal_factor;  // lower-triangular, L L^T = temporal (+jitter)
  Eigen::MatrixXd spatial_factor;
  double sigma_sq = 0.0;  // unit-scale spatial variance behind the diagonal
  double delta = 0.0;
  double scale = 1.0;
  double jitter_temporal = 0.0;  // diagonal jitter actually applied, 0 if none
  double jitter_spatial = 0.0;
};

namespace detail {

// Cholesky with the repair ladder: on failure add eps*I, eps = 1e-10*trace/n,
// doubled up to three times; a still-indefinite matrix is an error that
// reports its smallest eigenvalue.
inline Eigen::MatrixXd chol_psd(const Eigen::MatrixXd& M, const char* label, double* jitter_out) {
  *jitter_out = 0.0;
  const auto n = M.rows();
  if (M.isZero(0.0)) return Eigen::MatrixXd::Zero(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  double eps = 1e-10 * M.trace() / static_cast<double>(n);
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::MatrixXd Mj = M;
    Mj.diagonal().array() += eps;
    llt.compute(Mj);
    if (llt.info() == Eigen::Success) {
      *jitter_out = eps;
      return llt.matrixL();
    }
    eps *= 2.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  throw std::runtime_error(std::string("covariance factorization failed for the ") + label +
                           " factor; smallest eigenvalue = " +
                           csv::format_double(es.eigenvalues().minCoeff()));
}

}  // namespace detail

// Builds the separable joint covariance Cov[(k,j),(k',j')] = T[k,k']*S[j,j']
// on a regular design together with the Cholesky factors used for sampling.
inline CovarianceFactorization build_cov_factorization(const RegularDesign& g,
                                                       const NoiseSpec& spec) {
  detail::check_alpha(spec.alpha, g.d, "build_cov_factorization");
  if (spec.H <= 0.0 || spec.H >= 1.0)
    throw std::invalid_argument("build_cov_factorization: H must lie in (0,1)");

  CovarianceFactorization f;
  f.delta = g.delta;
  f.scale = spec.scale;
  const auto nt = g.nt;
  const auto ns = g.ns();

  f.temporal.resize(nt, nt);
  for (int k = 0; k < nt; ++k)
    for (int k2 = 0; k2 <= k; ++k2) {
      const double c = temporal_increment_cov(g.time_points[k], g.time_points[k2], g.delta, spec.H);
      f.temporal(k, k2) = c;
      f.temporal(k2, k) = c;
    }

  // Distinct separations collapse: the unit-scale integral is cached by the
  // bit pattern of the normalized distance.
  std::unordered_map<std::uint64_t, double> cache;
  auto cov_at = [&](double dist) {
    const double r = dist / g.delta;
    std::uint64_t key;
    static_assert(sizeof(key) == sizeof(r));
    std::memcpy(&key, &r, sizeof(key));
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double value = std::pow(g.delta, g.d + spec.alpha) * detail::unit_cov(spec.alpha, g.d, r);
    cache.emplace(key, value);
    return value;
  };

  f.spatial.resize(ns, ns);
  for (Eigen::Index j = 0; j < ns; ++j)
    for (Eigen::Index j2 = 0; j2 <= j; ++j2) {
      const double c = cov_at((g.sites.row(j) - g.sites.row(j2)).norm());
      f.spatial(j, j2) = c;
      f.spatial(j2, j) = c;
    }

  f.sigma_sq = (spec.alpha == 0.0) ? lambda_ball(g.d) : detail::unit_cov(spec.alpha, g.d, 0.0);
  f.temporal_factor = detail::chol_psd(f.temporal, "temporal", &f.jitter_temporal);
  f.spatial_factor = detail::chol_psd(f.spatial, "spatial", &f.jitter_spatial);
  return f;
}

// Exact Gaussian sampling through the Kronecker structure: each draw is
// L_T * G * L_S^T with G i.i.d. standard normal, flattened time-major, so the
// sampled field has covariance (T kron S) without ever forming the n x n
// joint matrix.  Row r of the result is draw r.
inline Eigen::MatrixXd sample_noise(const CovarianceFactorization& f, int n_draws,
                                    std::uint64_t seed) {
  if (n_draws < 1) throw std::invalid_argument("sample_noise: need at least one draw");
  const auto nt = f.temporal.rows();
  const auto ns = f.spatial.rows();
  Eigen::MatrixXd draws(n_draws, nt * ns);
  Eigen::MatrixXd G(nt, ns);
  for (int r = 0; r < n_draws; ++r) {
    Rng rng(Rng::derive(seed, rng_stream::noise, static_cast<std::uint64_t>(r)));
    for (Eigen::Index k = 0; k < nt; ++k)
      for (Eigen::Index j = 0; j < ns; ++j) G(k, j) = rng.next_gaussian();
    const Eigen::MatrixXd field = f.temporal_factor * G * f.spatial_factor.transpose();
    for (Eigen::Index k = 0; k < nt; ++k)
      for (Eigen::Index j = 0; j < ns; ++j) draws(r, k * ns + j) = f.scale * field(k, j);
  }
  return draws;
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

inline void write_noise_csv(const Eigen::MatrixXd& draws, const RegularDesign& g,
                            const std::string& path) {
  csv::Writer w(path);
  w.raw_row("draw_id,time_index,site_id,value");
  for (Eigen::Index r = 0; r < draws.rows(); ++r)
    for (int k = 0; k < g.nt; ++k)
      for (std::int64_t j = 0; j < g.ns(); ++j) {
        w.begin_row();
        w.field(static_cast<long long>(r));
        w.field(static_cast<long long>(k));
        w.field(static_cast<long long>(j));
        w.field(draws(r, g.cell(k, j)));
        w.end_row();
      }
}

inline void write_matrix_csv(const Eigen::MatrixXd& M, const std::string& path) {
  csv::Writer w(path);
  w.begin_row();
  for (Eigen::Index c = 0; c < M.cols(); ++c) w.field("c" + std::to_string(c));
  w.end_row();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    w.begin_row();
    for (Eigen::Index c = 0; c < M.cols(); ++c) w.field(M(r, c));
    w.end_row();
  }
}

}  // namespace gtwr
