#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtwr/csv.hpp"
#include "gtwr/rng.hpp"
#include "gtwr/stgrid.hpp"

namespace gtwr {

enum class Contiguity { rook, queen };

// Row-normalized lattice contiguity weights for an nx-by-nx grid; sites are
// indexed like make_pixel_grid(nx, 2), first coordinate fastest.
struct NeighborWeights {
  Eigen::MatrixXd W;  // dense row-stochastic matrix (lattices here are small)
  int nx = 0;
  Contiguity contiguity = Contiguity::queen;
};

inline NeighborWeights build_contiguity(int nx, Contiguity c) {
  if (nx < 1) throw std::invalid_argument("build_contiguity: need nx >= 1");
  const int ns = nx * nx;
  NeighborWeights nw;
  nw.nx = nx;
  nw.contiguity = c;
  nw.W = Eigen::MatrixXd::Zero(ns, ns);
  for (int iy = 0; iy < nx; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const int j = iy * nx + ix;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (c == Contiguity::rook && dx != 0 && dy != 0) continue;
          const int x = ix + dx, y = iy + dy;
          if (x < 0 || x >= nx || y < 0 || y >= nx) continue;
          nw.W(j, y * nx + x) = 1.0;
          ++count;
        }
      if (count > 0) nw.W.row(j) /= static_cast<double>(count);
    }
  return nw;
}

// Space-time autoregression X_t = phi10 * X_{t-1} + phi11 * W X_{t-1} + a_t
// with i.i.d. N(0, sd^2) innovations, started at zero and burned in.
struct StarSpec {
  double phi10 = 0.4;
  double phi11 = 0.25;
  double innovation_sd = 1.0;
  int burn_in = 200;
  Contiguity contiguity = Contiguity::queen;
};

// Spectral radius of the one-step transition phi10*I + phi11*W.
inline double star_spectral_radius(const StarSpec& spec, const NeighborWeights& nw) {
  const Eigen::MatrixXd M =
      spec.phi10 * Eigen::MatrixXd::Identity(nw.W.rows(), nw.W.cols()) + spec.phi11 * nw.W;
  if (M.rows() <= 1024) {
    return Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues().cwiseAbs().maxCoeff();
  }
  // Large lattices: power iteration (norm of M^k x decays/grows like rho^k).
  Eigen::VectorXd v = Eigen::VectorXd::Ones(M.rows()).normalized();
  double rho = 0.0;
  for (int it = 0; it < 500; ++it) {
    v = M * v;
    rho = v.norm();
    if (rho == 0.0) return 0.0;
    v /= rho;
  }
  return rho;
}

// nt x ns covariate field; row k is the spatial slice at time index k.
inline Eigen::MatrixXd simulate_star(const StarSpec& spec, const NeighborWeights& nw, int nt,
                                     std::uint64_t seed) {
  if (nt < 1) throw std::invalid_argument("simulate_star: need nt >= 1");
  if (spec.burn_in < 0) throw std::invalid_argument("simulate_star: burn_in must be >= 0");
  if (spec.innovation_sd < 0.0)
    throw std::invalid_argument("simulate_star: innovation sd must be >= 0");
  const double rho = star_spectral_radius(spec, nw);
  if (rho >= 1.0)
    throw std::invalid_argument("simulate_star: nonstationary dynamics, spectral radius = " +
                                csv::format_double(rho) + " >= 1");
  const auto ns = nw.W.rows();
  const Eigen::MatrixXd M =
      spec.phi10 * Eigen::MatrixXd::Identity(ns, ns) + spec.phi11 * nw.W;

  Rng rng(Rng::derive(seed, rng_stream::covariates));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(ns);
  Eigen::MatrixXd out(nt, ns);
  for (int step = 0; step < spec.burn_in + nt; ++step) {
    Eigen::VectorXd a(ns);
    for (Eigen::Index j = 0; j < ns; ++j) a[j] = spec.innovation_sd * rng.next_gaussian();
    x = M * x + a;
    if (step >= spec.burn_in) out.row(step - spec.burn_in) = x.transpose();
  }
  return out;
}

// Monte-Carlo estimate of the design second moment chi(z, z') = E[X(z) X(z')]
// across independent replications of the covariate process.
inline double empirical_chi(const StarSpec& spec, const NeighborWeights& nw, int nt,
                            int time_a, std::int64_t site_a, int time_b, std::int64_t site_b,
                            int replications, std::uint64_t seed) {
  if (replications < 1) throw std::invalid_argument("empirical_chi: need replications >= 1");
  double acc = 0.0;
  for (int r = 0; r < replications; ++r) {
    const Eigen::MatrixXd X =
        simulate_star(spec, nw, nt, Rng::derive(seed, rng_stream::covariates, r));
    acc += X(time_a, site_a) * X(time_b, site_b);
  }
  return acc / replications;
}

// Exact stationary site covariance Sigma solving the discrete Lyapunov
// equation Sigma = A Sigma A' + sd^2 I with A = phi10 I + phi11 W, by
// fixed-point iteration (geometric convergence at the squared spectral
// radius).  Gives E[X(z) X(z)] references with no Monte-Carlo error.
inline Eigen::MatrixXd star_stationary_cov(const StarSpec& spec, const NeighborWeights& nw,
                                           double tol = 1e-13, int max_iter = 400) {
  const double rho = star_spectral_radius(spec, nw);
  if (rho >= 1.0)
    throw std::invalid_argument("star_stationary_cov: nonstationary dynamics, spectral radius = " +
                                csv::format_double(rho) + " >= 1");
  const auto ns = nw.W.rows();
  const Eigen::MatrixXd A =
      spec.phi10 * Eigen::MatrixXd::Identity(ns, ns) + spec.phi11 * nw.W;
  const Eigen::MatrixXd Q =
      spec.innovation_sd * spec.innovation_sd * Eigen::MatrixXd::Identity(ns, ns);
  Eigen::MatrixXd S = Q;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd next = A * S * A.transpose() + Q;
    const double change = (next - S).cwiseAbs().maxCoeff();
    S.swap(next);
    if (change < tol) return S;
  }
  throw std::runtime_error("star_stationary_cov: Lyapunov iteration did not converge");
}

inline void write_covariates_csv(const Eigen::MatrixXd& X, const std::string& path) {
  csv::Writer w(path);
  w.raw_row("time_index,site_id,value");
  for (Eigen::Index k = 0; k < X.rows(); ++k)
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      w.begin_row();
      w.field(static_cast<long long>(k));
      w.field(static_cast<long long>(j));
      w.field(X(k, j));
      w.end_row();
    }
}

}  // namespace gtwr
