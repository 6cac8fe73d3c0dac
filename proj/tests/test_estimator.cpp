#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gtwr/estimator.hpp"
#include "gtwr/rng.hpp"
#include "gtwr/validate.hpp"

using namespace gtwr;

namespace {

Eigen::MatrixXd random_design(int n, int p1, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, p1);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p1; ++j) X(i, j) = rng.next_gaussian();
  }
  return X;
}

}  // namespace

TEST_CASE("local fit recovers an exact linear relation") {
  const Eigen::MatrixXd X = random_design(40, 3, 7);
  Eigen::Vector3d beta(2.0, -1.5, 0.25);
  const Eigen::VectorXd y = X * beta;
  Rng rng(8);
  Eigen::VectorXd w(40);
  for (int i = 0; i < 40; ++i) w[i] = rng.next_double_pos();
  const LocalFit fit = fit_local(X, y, w);
  REQUIRE(fit.ok());
  CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(fit.condition_number < 1e3);
}

TEST_CASE("local fit agrees with the dense oracle on noisy data") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd X = random_design(50, 3, 100 + trial);
    Eigen::VectorXd y(50), w(50);
    for (int i = 0; i < 50; ++i) {
      y[i] = rng.next_gaussian();
      w[i] = (i % 9 == 0) ? 0.0 : rng.next_double_pos();
    }
    const LocalFit fit = fit_local(X, y, w);
    REQUIRE(fit.ok());
    const Eigen::VectorXd ref = dense_wls_oracle(X, y, w);
    CHECK((fit.beta - ref).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("weights are scale invariant") {
  const Eigen::MatrixXd X = random_design(30, 2, 3);
  Rng rng(4);
  Eigen::VectorXd y(30), w(30);
  for (int i = 0; i < 30; ++i) {
    y[i] = rng.next_gaussian();
    w[i] = rng.next_double_pos();
  }
  const LocalFit a = fit_local(X, y, w);
  const LocalFit b = fit_local(X, y, (w * 1e8).eval());
  const LocalFit c = fit_local(X, y, (w * 1e-8).eval());
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.beta - c.beta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("degenerate weights and rank deficiency are flagged") {
  const Eigen::MatrixXd X = random_design(20, 2, 5);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(20);

  const LocalFit zero = fit_local(X, y, Eigen::VectorXd::Zero(20));
  CHECK(zero.status == FitStatus::degenerate_weights);
  CHECK_FALSE(zero.ok());

  Eigen::MatrixXd dup(20, 3);
  dup.col(0) = X.col(0);
  dup.col(1) = X.col(1);
  dup.col(2) = 2.0 * X.col(1);  // exactly collinear
  const LocalFit rank = fit_local(dup, y, Eigen::VectorXd::Ones(20));
  CHECK(rank.status == FitStatus::rank_deficient);

  CHECK_THROWS_AS(fit_local(X, y, (-Eigen::VectorXd::Ones(20)).eval()), std::invalid_argument);
}

TEST_CASE("adjusted r-squared pinned values") {
  Rng rng(12);
  Eigen::VectorXd y(100);
  for (int i = 0; i < 100; ++i) y[i] = rng.next_gaussian();
  const Eigen::VectorXd fitted = Eigen::VectorXd::Constant(100, y.mean());
  // R^2 = 0 at the mean fit, so adjusted = 1 - 99/98 = -1/98.
  CHECK(adjusted_r2(y, fitted, 1) == Catch::Approx(-1.0 / 98.0).epsilon(1e-12));
  // Perfect fit.
  CHECK(adjusted_r2(y, y, 1) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(adjusted_r2(y.head(3), y.head(3), 2), std::invalid_argument);
}

TEST_CASE("type-7 quantiles pinned values") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(quantile_type7(v, 0.25) == Catch::Approx(1.75).epsilon(1e-14));
  CHECK(quantile_type7(v, 0.5) == Catch::Approx(2.5).epsilon(1e-14));
  CHECK(quantile_type7(v, 0.75) == Catch::Approx(3.25).epsilon(1e-14));
  CHECK(quantile_type7(v, 0.0) == 1.0);
  CHECK(quantile_type7(v, 1.0) == 4.0);
  CHECK(quantile_type7({5.0}, 0.37) == 5.0);

  const FiveNumber f = five_number({3.0, 1.0, 4.0, 2.0});
  CHECK(f.min == 1.0);
  CHECK(f.q1 == 1.75);
  CHECK(f.median == 2.5);
  CHECK(f.q3 == 3.25);
  CHECK(f.max == 4.0);
}

TEST_CASE("field fit matches per-cell local fits") {
  const RegularDesign g = make_design(4, 3, 2);
  Rng rng(21);
  Eigen::MatrixXd cov_field(g.nt, g.ns());
  for (int k = 0; k < g.nt; ++k)
    for (std::int64_t j = 0; j < g.ns(); ++j) cov_field(k, j) = rng.next_gaussian();
  const DesignMatrix dm = make_design_matrix(cov_field, true);
  Eigen::VectorXd y(g.n());
  for (std::int64_t c = 0; c < g.n(); ++c) y[c] = rng.next_gaussian();

  KernelSpec kernel;
  kernel.h = 0.6;
  FieldFitOptions opt;
  opt.threads = 2;
  const FieldFit f = fit_field(g, dm, y, kernel, opt);
  REQUIRE(f.beta.rows() == g.n());

  for (std::int64_t target = 0; target < g.n(); target += 5) {
    const WeightVector wv = weight_vector(kernel, g, target);
    const LocalFit lf = fit_local(dm.X, y, wv.w);
    REQUIRE(lf.ok());
    CHECK((f.beta.row(target).transpose() - lf.beta).cwiseAbs().maxCoeff() < 1e-11);
    CHECK(f.fitted[target] ==
          Catch::Approx(dm.X.row(target).dot(lf.beta)).margin(1e-10));
    CHECK(f.residuals[target] == Catch::Approx(y[target] - f.fitted[target]).margin(1e-12));
  }

  // Thread count must not change results.
  FieldFitOptions opt1;
  opt1.threads = 1;
  const FieldFit f1 = fit_field(g, dm, y, kernel, opt1);
  CHECK((f.beta - f1.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("excluding the target slice zeroes own-time weights") {
  const RegularDesign g = make_design(3, 3, 2);
  Rng rng(33);
  Eigen::MatrixXd cov_field(g.nt, g.ns());
  for (int k = 0; k < g.nt; ++k)
    for (std::int64_t j = 0; j < g.ns(); ++j) cov_field(k, j) = rng.next_gaussian();
  const DesignMatrix dm = make_design_matrix(cov_field, true);
  Eigen::VectorXd y(g.n());
  for (std::int64_t c = 0; c < g.n(); ++c) y[c] = rng.next_gaussian();

  KernelSpec kernel;
  kernel.h = 0.8;
  FieldFitOptions opt;
  opt.exclude_target_slice = true;
  const FieldFit f = fit_field(g, dm, y, kernel, opt);

  const std::int64_t target = g.cell(1, 4);
  WeightVector wv = weight_vector(kernel, g, target);
  for (std::int64_t j = 0; j < g.ns(); ++j) wv.w[g.cell(1, j)] = 0.0;
  const LocalFit lf = fit_local(dm.X, y, wv.w);
  REQUIRE(lf.ok());
  CHECK((f.beta.row(target).transpose() - lf.beta).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("bandwidth search picks a sensible scale on smooth data") {
  const RegularDesign g = make_design(6, 4, 2);
  Rng rng(55);
  Eigen::MatrixXd cov_field(g.nt, g.ns());
  for (int k = 0; k < g.nt; ++k)
    for (std::int64_t j = 0; j < g.ns(); ++j) cov_field(k, j) = rng.next_gaussian();
  const DesignMatrix dm = make_design_matrix(cov_field, true);

  // Smooth varying coefficient plus small noise.
  Eigen::VectorXd y(g.n());
  for (std::int64_t c = 0; c < g.n(); ++c) {
    const SpaceTimePoint z = g.point(c);
    const double b1 = 1.0 + 0.5 * z.u[0];
    y[c] = 0.3 + b1 * dm.X(c, 1) + 0.01 * rng.next_gaussian();
  }

  KernelSpec kernel;
  const BandwidthSearch s = auto_bandwidth(g, dm, y, kernel);
  CHECK(s.tried.size() == 10);
  CHECK(s.h >= s.tried.front().first);
  CHECK(s.h <= s.tried.back().first);
  // The chosen bandwidth has the smallest recorded objective.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : s.tried) best = std::min(best, t.second);
  for (const auto& t : s.tried)
    if (t.first == s.h) CHECK(t.second == best);
}

TEST_CASE("error accumulation curve equals direct truncated fits") {
  const RegularDesign g = make_design(4, 5, 2);
  Rng rng(71);
  Eigen::MatrixXd cov_field(g.nt, g.ns());
  for (int k = 0; k < g.nt; ++k)
    for (std::int64_t j = 0; j < g.ns(); ++j) cov_field(k, j) = rng.next_gaussian();
  const DesignMatrix dm = make_design_matrix(cov_field, true);
  Eigen::VectorXd y(g.n()), beta1_true(g.n());
  for (std::int64_t c = 0; c < g.n(); ++c) {
    const SpaceTimePoint z = g.point(c);
    beta1_true[c] = 1.0 + z.u[0] + 0.5 * z.u[1];
    y[c] = 0.5 + beta1_true[c] * dm.X(c, 1) + 0.05 * rng.next_gaussian();
  }
  KernelSpec kernel;
  kernel.h = 0.5;
  const std::vector<double> curve = qme_curve(g, dm, y, beta1_true, kernel, 2);
  REQUIRE(curve.size() == static_cast<std::size_t>(g.nt));

  // Direct reference: for each truncation, refit every retained cell from
  // scratch on the truncated sample.
  for (int k = 0; k < g.nt; ++k) {
    const std::int64_t m = static_cast<std::int64_t>(k + 1) * g.ns();
    const Eigen::MatrixXd Xk = dm.X.topRows(m);
    const Eigen::VectorXd yk = y.head(m);
    double acc = 0.0;
    std::int64_t used = 0;
    for (std::int64_t target = 0; target < m; ++target) {
      const WeightVector wv = weight_vector(kernel, g, target);
      Eigen::VectorXd wk(m);
      for (std::int64_t c = 0; c < m; ++c) wk[c] = wv.w[c];
      const LocalFit lf = fit_local(Xk, yk, wk);
      if (!lf.ok()) continue;
      const double e = lf.beta[1] - beta1_true[target];
      acc += e * e;
      ++used;
    }
    REQUIRE(used > 0);
    CHECK(curve[static_cast<std::size_t>(k)] == Catch::Approx(acc / used).margin(1e-8));
  }
}
