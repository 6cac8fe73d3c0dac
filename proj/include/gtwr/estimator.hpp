#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtwr/csv.hpp"
#include "gtwr/kernels.hpp"
#include "gtwr/parallel.hpp"
#include "gtwr/stgrid.hpp"

namespace gtwr {

// ---------------------------------------------------------------------------
// Local weighted least squares
// ---------------------------------------------------------------------------

enum class FitStatus { ok, degenerate_weights, rank_deficient };

struct LocalFit {
  Eigen::VectorXd beta;
  FitStatus status = FitStatus::ok;
  int rank = 0;
  double condition_number = std::numeric_limits<double>::infinity();

  bool ok() const { return status == FitStatus::ok; }
};

// Design matrix with an optional leading intercept column of ones.
struct DesignMatrix {
  Eigen::MatrixXd X;  // n x (p + intercept)
  bool intercept = true;

  int p() const { return static_cast<int>(X.cols()) - (intercept ? 1 : 0); }
};

// Flattens an nt x ns single-covariate field into the time-major regression
// design (matching RegularDesign cell indexing).
inline DesignMatrix make_design_matrix(const Eigen::MatrixXd& cov_field, bool intercept) {
  DesignMatrix dm;
  dm.intercept = intercept;
  const auto n = cov_field.rows() * cov_field.cols();
  dm.X.resize(n, intercept ? 2 : 1);
  Eigen::Index c = 0;
  for (Eigen::Index k = 0; k < cov_field.rows(); ++k)
    for (Eigen::Index j = 0; j < cov_field.cols(); ++j, ++c) {
      if (intercept) {
        dm.X(c, 0) = 1.0;
        dm.X(c, 1) = cov_field(k, j);
      } else {
        dm.X(c, 0) = cov_field(k, j);
      }
    }
  return dm;
}

// Weighted least squares by orthogonal decomposition of sqrt(W) X — never by
// inverting X' W X.  Weights are normalized by their maximum first, which
// makes the fit invariant to rescaling w -> c w up to roundoff.  Degenerate
// inputs come back as a typed status, not an exception, so field fits can
// carry partially degenerate targets.
inline LocalFit fit_local(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w) {
  if (X.rows() != y.size() || X.rows() != w.size())
    throw std::invalid_argument("fit_local: X, y, w row counts differ");
  if (X.rows() == 0) throw std::invalid_argument("fit_local: empty problem");
  if ((w.array() < 0.0).any()) throw std::invalid_argument("fit_local: negative weight");

  LocalFit fit;
  const double wmax = w.maxCoeff();
  if (!(wmax > 0.0)) {
    fit.status = FitStatus::degenerate_weights;
    fit.beta = Eigen::VectorXd::Zero(X.cols());
    return fit;
  }

  const Eigen::VectorXd sw = (w / wmax).cwiseSqrt();
  const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  fit.rank = static_cast<int>(qr.rank());
  const auto diag = qr.matrixR().diagonal().cwiseAbs();
  if (fit.rank < X.cols()) {
    fit.status = FitStatus::rank_deficient;
    fit.beta = Eigen::VectorXd::Zero(X.cols());
    return fit;
  }
  fit.condition_number = diag.maxCoeff() / diag.minCoeff();
  fit.beta = qr.solve(yw);
  return fit;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

// 1 - (1 - R^2)(n-1)/(n-p-1) with p the number of covariates.  Errors on a
// constant response (R^2 undefined) and on n <= p + 1.
inline double adjusted_r2(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted, int p) {
  if (y.size() != fitted.size()) throw std::invalid_argument("adjusted_r2: size mismatch");
  const auto n = y.size();
  if (n <= p + 1) throw std::invalid_argument("adjusted_r2: need n > p + 1");
  const double mean = y.mean();
  const double sst = (y.array() - mean).square().sum();
  if (sst <= 0.0)
    throw std::invalid_argument("adjusted_r2: constant response, R^2 is undefined");
  const double sse = (y - fitted).squaredNorm();
  const double r2 = 1.0 - sse / sst;
  return 1.0 - (1.0 - r2) * (static_cast<double>(n) - 1.0) / (static_cast<double>(n) - p - 1.0);
}

// Type-7 sample quantile (the spreadsheet/R default): linear interpolation at
// h = (n-1)p over the sorted sample.
inline double quantile_type7(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile_type7: empty sample");
  if (prob < 0.0 || prob > 1.0) throw std::invalid_argument("quantile_type7: prob outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - std::floor(h)) * (sorted[lo + 1] - sorted[lo]);
}

struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline FiveNumber five_number(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("five_number: empty sample");
  std::sort(values.begin(), values.end());
  FiveNumber f;
  f.min = values.front();
  f.q1 = quantile_type7(values, 0.25);
  f.median = quantile_type7(values, 0.5);
  f.q3 = quantile_type7(values, 0.75);
  f.max = values.back();
  return f;
}

// ---------------------------------------------------------------------------
// Field fit: one local regression per space-time cell
// ---------------------------------------------------------------------------

struct FieldFitOptions {
  int threads = 0;                  // 0: resolve via GTWR_THREADS / hardware
  bool exclude_target_slice = false;  // leave-one-time-out fits (bandwidth search)
};

struct FieldFit {
  Eigen::MatrixXd beta;          // n_cells x (p+1)
  Eigen::VectorXd fitted;        // x_c' beta(c) at each cell
  Eigen::VectorXd residuals;     // y_c - fitted_c
  Eigen::VectorXd condition;     // per-cell condition estimate
  std::vector<FitStatus> status;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  int p = 0;

  std::int64_t degenerate_count() const {
    return std::count_if(status.begin(), status.end(),
                         [](FitStatus s) { return s != FitStatus::ok; });
  }
};

// Fits beta(z_i) at every cell of the design using all observations with
// space-time kernel weights.  Observations and targets are the same cells;
// `exclude_target_slice` drops the target's own time slice from its fit
// (used by the bandwidth search to score out-of-slice prediction).
inline FieldFit fit_field(const RegularDesign& g, const DesignMatrix& dm,
                          const Eigen::VectorXd& y, const KernelSpec& kernel,
                          const FieldFitOptions& options = {}) {
  const auto n = g.n();
  if (dm.X.rows() != n || y.size() != n)
    throw std::invalid_argument("fit_field: design size does not match the grid");
  const auto cols = dm.X.cols();
  const auto ns = g.ns();

  GridKernelTable table(kernel, g);
  FieldFit out;
  out.p = static_cast<int>(cols) - (dm.intercept ? 1 : 0);
  out.beta.resize(n, cols);
  out.fitted.resize(n);
  out.residuals.resize(n);
  out.condition.resize(n);
  out.status.assign(static_cast<std::size_t>(n), FitStatus::ok);

  const int threads = resolve_threads(options.threads);
  parallel_for(n, threads, [&](std::int64_t cell) {
    thread_local Eigen::VectorXd w;
    w.resize(n);
    const int kt = g.cell_time(cell);
    const auto jt = g.cell_site(cell);
    for (int k = 0; k < g.nt; ++k) {
      if (options.exclude_target_slice && k == kt) {
        w.segment(static_cast<std::int64_t>(k) * ns, ns).setZero();
        continue;
      }
      for (std::int64_t j = 0; j < ns; ++j)
        w[static_cast<std::int64_t>(k) * ns + j] = table.weight(kt, jt, k, j);
    }
    const LocalFit fit = fit_local(dm.X, y, w);
    out.status[static_cast<std::size_t>(cell)] = fit.status;
    out.beta.row(cell) = fit.beta.transpose();
    out.condition[cell] = fit.condition_number;
    if (fit.ok()) {
      out.fitted[cell] = dm.X.row(cell).dot(fit.beta);
      out.residuals[cell] = y[cell] - out.fitted[cell];
    } else {
      out.fitted[cell] = std::numeric_limits<double>::quiet_NaN();
      out.residuals[cell] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  // Pooled diagnostics over non-degenerate cells, reduced in cell order.
  std::vector<double> yy, ff;
  yy.reserve(static_cast<std::size_t>(n));
  ff.reserve(static_cast<std::size_t>(n));
  for (std::int64_t c = 0; c < n; ++c)
    if (out.status[static_cast<std::size_t>(c)] == FitStatus::ok) {
      yy.push_back(y[c]);
      ff.push_back(out.fitted[c]);
    }
  if (yy.size() > static_cast<std::size_t>(out.p) + 1) {
    Eigen::Map<const Eigen::VectorXd> ym(yy.data(), static_cast<Eigen::Index>(yy.size()));
    Eigen::Map<const Eigen::VectorXd> fm(ff.data(), static_cast<Eigen::Index>(ff.size()));
    const double mean = ym.mean();
    const double sst = (ym.array() - mean).square().sum();
    if (sst > 0.0) {
      out.r2 = 1.0 - (ym - fm).squaredNorm() / sst;
      out.adj_r2 = 1.0 - (1.0 - out.r2) * (static_cast<double>(ym.size()) - 1.0) /
                             (static_cast<double>(ym.size()) - out.p - 1.0);
    }
  }
  return out;
}

// Residual sum of squares of leave-one-time-slice-out predictions; the
// bandwidth search criterion.
inline double loto_rss(const RegularDesign& g, const DesignMatrix& dm, const Eigen::VectorXd& y,
                       const KernelSpec& kernel, int threads = 0) {
  FieldFitOptions opt;
  opt.threads = threads;
  opt.exclude_target_slice = true;
  const FieldFit f = fit_field(g, dm, y, kernel, opt);
  double rss = 0.0;
  std::int64_t used = 0;
  for (std::int64_t c = 0; c < g.n(); ++c)
    if (f.status[static_cast<std::size_t>(c)] == FitStatus::ok) {
      rss += f.residuals[c] * f.residuals[c];
      ++used;
    }
  if (used == 0) return std::numeric_limits<double>::infinity();
  // Penalize bandwidths that cannot predict some cells at all.
  return rss * static_cast<double>(g.n()) / static_cast<double>(used);
}

struct BandwidthSearch {
  double h = 0.0;
  std::vector<std::pair<double, double>> tried;  // (h, criterion)
};

// Coarse automatic bandwidth: 10 log-spaced candidates between 5% and 100% of
// the design's kernel-metric diameter, scored by leave-one-time-out RSS.
inline BandwidthSearch auto_bandwidth(const RegularDesign& g, const DesignMatrix& dm,
                                      const Eigen::VectorXd& y, KernelSpec kernel,
                                      int threads = 0) {
  const double tspan = g.time_points.back() - g.time_points.front();
  double sdiam_sq = 0.0;
  for (int a = 0; a < g.d; ++a) {
    const double span = g.sites.col(a).maxCoeff() - g.sites.col(a).minCoeff();
    sdiam_sq += span * span;
  }
  const double diam = std::sqrt(kernel.mu_t * tspan * tspan + kernel.mu_s * sdiam_sq);
  if (!(diam > 0.0))
    throw std::invalid_argument("auto_bandwidth: design has no space-time extent");
  const double lo = 0.05 * diam, hi = diam;
  BandwidthSearch out;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    const double h = lo * std::pow(hi / lo, i / 9.0);
    kernel.h = h;
    const double crit = loto_rss(g, dm, y, kernel, threads);
    out.tried.emplace_back(h, crit);
    if (crit < best) {
      best = crit;
      out.h = h;
    }
  }
  if (!(best < std::numeric_limits<double>::infinity()))
    throw std::runtime_error("auto_bandwidth: no candidate produced usable fits");
  return out;
}

// ---------------------------------------------------------------------------
// Quadratic mean error accumulation curve
// ---------------------------------------------------------------------------

// For k = 1..nt: fit every cell of the first k slices using the observations
// of those k slices, and record the mean over those targets of
// (beta1_hat - beta1_true)^2.  The weights do not depend on k, so each
// target's normal equations are accumulated slice by slice — algebraically
// the same WLS solution as fit_local on the truncated sample, at
// O(nt^2 ns^2 p^2) total cost.  beta1_true is per cell; the summary component
// is the first covariate coefficient (index `intercept ? 1 : 0`).
inline std::vector<double> qme_curve(const RegularDesign& g, const DesignMatrix& dm,
                                     const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& beta1_true, const KernelSpec& kernel,
                                     int threads = 0) {
  const auto n = g.n();
  if (dm.X.rows() != n || y.size() != n || beta1_true.size() != n)
    throw std::invalid_argument("qme_curve: input sizes do not match the grid");
  const auto ns = g.ns();
  const int cols = static_cast<int>(dm.X.cols());
  const int b1 = dm.intercept ? 1 : 0;
  if (b1 >= cols) throw std::invalid_argument("qme_curve: design has no covariate column");

  GridKernelTable table(kernel, g);

  // Per-target accumulators: M (cols x cols, symmetric) and rhs b.
  std::vector<Eigen::MatrixXd> M(static_cast<std::size_t>(n),
                                 Eigen::MatrixXd::Zero(cols, cols));
  std::vector<Eigen::VectorXd> b(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(cols));
  std::vector<double> se(static_cast<std::size_t>(n), 0.0);
  std::vector<char> usable(static_cast<std::size_t>(n), 0);

  std::vector<double> curve(static_cast<std::size_t>(g.nt), 0.0);
  const int nthreads = resolve_threads(threads);

  for (int k = 0; k < g.nt; ++k) {
    parallel_for(n, nthreads, [&](std::int64_t cell) {
      const int kt = g.cell_time(cell);
      const auto jt = g.cell_site(cell);
      auto& Mi = M[static_cast<std::size_t>(cell)];
      auto& bi = b[static_cast<std::size_t>(cell)];
      for (std::int64_t j = 0; j < ns; ++j) {
        const std::int64_t obs = g.cell(k, j);
        const double w = table.weight(kt, jt, k, j);
        if (w <= 0.0) continue;
        const auto x = dm.X.row(obs);
        for (int a = 0; a < cols; ++a) {
          bi[a] += w * x[a] * y[obs];
          for (int bcol = 0; bcol <= a; ++bcol) Mi(a, bcol) += w * x[a] * x[bcol];
        }
      }
      if (kt <= k) {
        // Solve the symmetric system accumulated so far for this target,
        // skipping targets whose moment matrix is numerically singular.
        const Eigen::MatrixXd Ms = Mi.selfadjointView<Eigen::Lower>();
        usable[static_cast<std::size_t>(cell)] = 0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ms, Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        const double lmax = es.eigenvalues().maxCoeff();
        if (lmax > 0.0 && lmin > 1e-12 * lmax) {
          const Eigen::VectorXd beta = Ms.ldlt().solve(bi);
          const double err = beta[b1] - beta1_true[cell];
          se[static_cast<std::size_t>(cell)] = err * err;
          usable[static_cast<std::size_t>(cell)] = 1;
        }
      }
    });
    // Reduce in cell order for determinism.
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t c = 0; c < g.cell(k, 0) + ns; ++c)
      if (usable[static_cast<std::size_t>(c)]) {
        acc += se[static_cast<std::size_t>(c)];
        ++count;
      }
    curve[static_cast<std::size_t>(k)] = (count > 0) ? acc / static_cast<double>(count) : 0.0;
  }
  return curve;
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

inline void write_fits_csv(const RegularDesign& g, const FieldFit& f, const std::string& path) {
  csv::Writer w(path);
  w.begin_row();
  w.field(std::string("time_index"));
  w.field(std::string("site_id"));
  for (Eigen::Index c = 0; c < f.beta.cols(); ++c) w.field("beta_" + std::to_string(c));
  w.field(std::string("fitted"));
  w.field(std::string("residual"));
  w.field(std::string("condition_number"));
  w.end_row();
  for (std::int64_t cell = 0; cell < g.n(); ++cell) {
    w.begin_row();
    w.field(static_cast<long long>(g.cell_time(cell)));
    w.field(static_cast<long long>(g.cell_site(cell)));
    for (Eigen::Index c = 0; c < f.beta.cols(); ++c) w.field(f.beta(cell, c));
    w.field(f.fitted[cell]);
    w.field(f.residuals[cell]);
    w.field(f.condition[cell]);
    w.end_row();
  }
}

inline void write_summary_csv(const FiveNumber& fn, double adj_r2, const std::string& path) {
  csv::Writer w(path);
  w.raw_row("min,q1,median,q3,max,adjusted_r2");
  w.begin_row();
  w.field(fn.min);
  w.field(fn.q1);
  w.field(fn.median);
  w.field(fn.q3);
  w.field(fn.max);
  w.field(adj_r2);
  w.end_row();
}

inline void write_qme_csv(const RegularDesign& g, const std::vector<double>& curve,
                          const std::string& path) {
  csv::Writer w(path);
  w.raw_row("cumulative_obs,qme");
  for (std::size_t k = 0; k < curve.size(); ++k) {
    w.begin_row();
    w.field(static_cast<long long>((k + 1) * static_cast<std::size_t>(g.ns())));
    w.field(curve[k]);
    w.end_row();
  }
}

}  // namespace gtwr
