// Command-line front end: configuration-driven simulation runs, noise and
// covariate sampling, error-curve accumulation, the self-check suite, and
// post-hoc summaries of fit tables.
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gtwr/config.hpp"
#include "gtwr/experiment.hpp"
#include "gtwr/validate.hpp"
#include "gtwr/version.hpp"

namespace {

struct ConfigSource {
  std::string config_path;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int replications = 0;

  void add_options(CLI::App* cmd, bool with_replications) {
    cmd->add_option("--config", config_path, "configuration file (sectioned key = value text)");
    cmd->add_option("--preset", preset, "bundled preset: model1, model2, model3, or model4");
    cmd->add_option("--seed", seed, "override the experiment seed");
    if (with_replications)
      cmd->add_option("--replications", replications, "override the replication count")
          ->check(CLI::PositiveNumber);
  }

  gtwr::ExperimentConfig resolve(const CLI::App* cmd) {
    if (!config_path.empty() && !preset.empty())
      throw CLI::ValidationError("give either --config or --preset, not both");
    gtwr::ExperimentConfig cfg;
    if (!preset.empty())
      cfg = gtwr::preset_config(preset);
    else if (!config_path.empty())
      cfg = gtwr::load_config(config_path);
    else
      throw CLI::ValidationError("one of --config or --preset is required");
    if (cmd->count("--seed") > 0) cfg.seed = seed;
    if (replications > 0) cfg.replications = replications;
    if (cfg.alpha_from_hs)
      std::cout << "NOTE: spatial exponent alpha = 2*H_s - 1 = "
                << gtwr::csv::format_double(cfg.alpha) << " (from H_s = "
                << gtwr::csv::format_double(cfg.h_s)
                << "); this mapping is a convention of this library, not part of the model.\n";
    return cfg;
  }
};

void print_summary_row(const gtwr::FiveNumber& f, double adj_r2) {
  std::printf("  beta_1: min %.4f  q1 %.4f  median %.4f  q3 %.4f  max %.4f   adjusted R^2 %.5f\n",
              f.min, f.q1, f.median, f.q3, f.max, adj_r2);
}

int cmd_run(gtwr::ExperimentConfig cfg, const std::string& out, const std::string& data,
            int threads) {
  if (!data.empty()) {
    const gtwr::ExternalFitResult r = gtwr::fit_external(cfg, data, out, threads);
    std::cout << "ingested " << r.data.grid.n() << " observations (" << r.data.grid.nt
              << " times x " << r.data.grid.ns() << " sites, " << r.data.p << " covariate"
              << (r.data.p > 1 ? "s" : "") << ") from " << data << "\n";
    if (!r.bandwidth.tried.empty())
      std::cout << "bandwidth: h = " << gtwr::csv::format_double(r.config.kernel.h)
                << " (automatic, " << r.bandwidth.tried.size() << " candidates)\n";
    const gtwr::ReplicationSummary s = gtwr::detail::summarize_fit(r.fit);
    print_summary_row(s.beta1, s.adj_r2);
    std::cout << "wrote " << r.files.size() << " files to " << r.out_dir << "\n";
    return 0;
  }

  const gtwr::ExperimentResult r = gtwr::run_experiment(cfg, out, threads);
  std::cout << "model " << r.config.model_id << ": "
            << gtwr::surface_kind_name(r.config.surface.kind) << " surface, H = "
            << gtwr::csv::format_double(r.config.H)
            << ", alpha = " << gtwr::csv::format_double(r.config.alpha) << "\n";
  std::cout << "design: " << r.grid.ns() << " sites x " << r.grid.nt << " times = "
            << r.grid.n() << " cells, delta = " << gtwr::csv::format_double(r.grid.delta)
            << "\n";
  if (!r.bandwidth.tried.empty())
    std::cout << "bandwidth: h = " << gtwr::csv::format_double(r.config.kernel.h)
              << " (automatic, " << r.bandwidth.tried.size() << " candidates)\n";
  else
    std::cout << "bandwidth: h = " << gtwr::csv::format_double(r.config.kernel.h)
              << " (fixed)\n";
  for (std::size_t i = 0; i < r.replications.size(); ++i) {
    std::cout << "replication " << i << ":\n";
    print_summary_row(r.replications[i].beta1, r.replications[i].adj_r2);
  }
  if (!r.qme_mean.empty())
    std::printf("qme (mean over %d replication%s): first frame %.6g, full sample %.6g\n",
                r.config.replications, r.config.replications > 1 ? "s" : "", r.qme_mean.front(),
                r.qme_mean.back());
  std::cout << "wrote " << r.files.size() << " files to " << r.out_dir << "\n";
  return 0;
}

int cmd_simulate_noise(const gtwr::ExperimentConfig& cfg, const std::string& out, int draws) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out);
  const gtwr::RegularDesign g = gtwr::make_design(cfg.nx, cfg.nt, cfg.d);
  gtwr::NoiseSpec spec;
  spec.H = cfg.H;
  spec.alpha = cfg.alpha;
  spec.scale = cfg.noise_scale;
  const gtwr::CovarianceFactorization fact = gtwr::build_cov_factorization(g, spec);
  const Eigen::MatrixXd E =
      gtwr::sample_noise(fact, draws, gtwr::Rng::derive(cfg.seed, gtwr::rng_stream::noise, 0));
  const std::string path = (fs::path(out) / "noise.csv").string();
  gtwr::write_noise_csv(E, g, path);
  std::cout << "noise field: H = " << gtwr::csv::format_double(cfg.H)
            << ", alpha = " << gtwr::csv::format_double(cfg.alpha)
            << ", delta = " << gtwr::csv::format_double(fact.delta) << "\n";
  std::cout << "unit spatial variance sigma^2 = " << gtwr::csv::format_double(fact.sigma_sq)
            << ", cell variance = "
            << gtwr::csv::format_double(fact.scale * fact.scale * fact.temporal(0, 0) *
                                        fact.spatial(0, 0))
            << "\n";
  if (fact.jitter_temporal > 0.0 || fact.jitter_spatial > 0.0)
    std::cout << "factorization jitter: temporal " << fact.jitter_temporal << ", spatial "
              << fact.jitter_spatial << "\n";
  std::cout << "wrote " << draws << " draw" << (draws > 1 ? "s" : "") << " to " << path << "\n";
  return 0;
}

int cmd_simulate_covariates(const gtwr::ExperimentConfig& cfg, const std::string& out) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out);
  const gtwr::NeighborWeights nw = gtwr::build_contiguity(cfg.nx, cfg.star.contiguity);
  const double radius = gtwr::star_spectral_radius(cfg.star, nw);
  const Eigen::MatrixXd X =
      gtwr::simulate_star(cfg.star, nw, cfg.nt,
                          gtwr::Rng::derive(cfg.seed, gtwr::rng_stream::covariates, 0));
  const std::string path = (fs::path(out) / "covariates.csv").string();
  gtwr::write_covariates_csv(X, path);
  std::cout << "covariate process: phi10 = " << gtwr::csv::format_double(cfg.star.phi10)
            << ", phi11 = " << gtwr::csv::format_double(cfg.star.phi11) << ", "
            << gtwr::contiguity_name(cfg.star.contiguity)
            << " contiguity, spectral radius = " << gtwr::csv::format_double(radius) << "\n";
  std::cout << "wrote " << cfg.nt << " x " << X.cols() << " field to " << path << "\n";
  return 0;
}

int cmd_qme(const gtwr::ExperimentConfig& cfg, const std::string& out, int threads) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  const gtwr::QmeReplications q = gtwr::qme_replications(cfg, threads);
  const gtwr::RegularDesign g = gtwr::make_design(cfg.nx, cfg.nt, cfg.d);
  gtwr::write_qme_csv(g, q.curves[0], (fs::path(out) / "qme.csv").string());
  std::cout << "bandwidth: h = " << gtwr::csv::format_double(q.config.kernel.h) << "\n";
  if (q.curves.size() > 1) {
    gtwr::write_qme_csv(g, q.mean, (fs::path(out) / "qme_mean.csv").string());
    std::printf("qme mean over %zu replications: first frame %.6g, full sample %.6g\n",
                q.curves.size(), q.mean.front(), q.mean.back());
  } else {
    std::printf("qme: first frame %.6g, full sample %.6g\n", q.mean.front(), q.mean.back());
  }
  std::cout << "wrote curves to " << out << "\n";
  return 0;
}

int cmd_validate(std::uint64_t seed, const std::string& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  const std::vector<gtwr::OracleReport> reports = gtwr::run_validation_suite(seed);
  for (const auto& r : reports)
    std::printf("[%s] %-34s value %.6g  reference %.6g  bound %.3g  %s\n",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value, r.reference, r.criterion,
                r.details.c_str());
  gtwr::write_validation_csv(reports, (fs::path(out) / "validation_report.csv").string());
  gtwr::write_validation_json(reports, (fs::path(out) / "validation_report.json").string());
  const bool ok = gtwr::all_passed(reports);
  std::cout << (ok ? "all checks passed" : "SOME CHECKS FAILED") << "; reports written to " << out
            << "\n";
  return ok ? 0 : 1;
}

int cmd_summarize(const std::string& fits_path, const std::string& out_file) {
  const gtwr::csv::Table t = gtwr::csv::read_table(fits_path);
  int beta1_col = -1, fitted_col = -1, residual_col = -1, beta_cols = 0;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == "beta_1") beta1_col = static_cast<int>(i);
    if (t.header[i] == "fitted") fitted_col = static_cast<int>(i);
    if (t.header[i] == "residual") residual_col = static_cast<int>(i);
    if (t.header[i].rfind("beta_", 0) == 0) ++beta_cols;
  }
  if (beta1_col < 0 || fitted_col < 0 || residual_col < 0)
    throw std::runtime_error(fits_path + ": need columns beta_1, fitted, residual");
  std::vector<double> beta1;
  std::vector<double> y, fitted;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = fits_path + " line " + std::to_string(r + 2);
    const double b = gtwr::csv::parse_double(t.rows[r][static_cast<std::size_t>(beta1_col)], where);
    const double f = gtwr::csv::parse_double(t.rows[r][static_cast<std::size_t>(fitted_col)], where);
    const double e =
        gtwr::csv::parse_double(t.rows[r][static_cast<std::size_t>(residual_col)], where);
    if (!std::isfinite(b) || !std::isfinite(f) || !std::isfinite(e)) continue;  // degenerate cell
    beta1.push_back(b);
    fitted.push_back(f);
    y.push_back(f + e);
  }
  if (beta1.empty()) throw std::runtime_error(fits_path + ": no usable rows");
  const gtwr::FiveNumber fn = gtwr::five_number(beta1);
  const Eigen::Map<const Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::Map<const Eigen::VectorXd> fm(fitted.data(),
                                             static_cast<Eigen::Index>(fitted.size()));
  const double adj = gtwr::adjusted_r2(ym, fm, beta_cols > 1 ? beta_cols - 1 : 1);
  print_summary_row(fn, adj);
  if (!out_file.empty()) {
    gtwr::write_summary_csv(fn, adj, out_file);
    std::cout << "wrote " << out_file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geographically and temporally weighted regression with exactly sampled "
               "fractional colored noise"};
  app.set_version_flag("--version", std::string("gtwr ") + gtwr::version);
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0: GTWR_THREADS env var, then hardware)")
      ->check(CLI::NonNegativeNumber);

  // run
  auto* run = app.add_subcommand("run", "simulate (or ingest) observations and fit every cell");
  ConfigSource run_src;
  run_src.add_options(run, true);
  std::string run_out, run_data;
  run->add_option("--out", run_out, "output directory")->required();
  run->add_option("--data", run_data,
                  "fit this observation table instead of simulating (header: t, x_1..x_d, "
                  "covariate_1..p, y)");

  // simulate-noise
  auto* snoise = app.add_subcommand("simulate-noise", "sample the fractional colored noise field");
  ConfigSource snoise_src;
  snoise_src.add_options(snoise, false);
  std::string snoise_out;
  int snoise_draws = 1;
  snoise->add_option("--out", snoise_out, "output directory")->required();
  snoise->add_option("--draws", snoise_draws, "independent draws to write")
      ->check(CLI::PositiveNumber);

  // simulate-covariates
  auto* scov = app.add_subcommand("simulate-covariates", "sample the covariate lattice process");
  ConfigSource scov_src;
  scov_src.add_options(scov, false);
  std::string scov_out;
  scov->add_option("--out", scov_out, "output directory")->required();

  // qme
  auto* qme = app.add_subcommand(
      "qme", "coefficient error accumulation curves only (no per-cell fit table)");
  ConfigSource qme_src;
  qme_src.add_options(qme, true);
  std::string qme_out;
  qme->add_option("--out", qme_out, "output directory")->required();

  // validate
  auto* val = app.add_subcommand("validate",
                                 "run the numerical self-check suite and write its reports");
  std::string val_out = ".";
  std::uint64_t val_seed = 20240817ULL;
  val->add_option("--out", val_out, "directory for validation_report.{csv,json}");
  val->add_option("--seed", val_seed, "seed for the suite's Monte-Carlo checks");

  // summarize
  auto* summ = app.add_subcommand("summarize", "five-number summary and fit quality of a fit table");
  std::string summ_fits, summ_out;
  summ->add_option("--fits", summ_fits, "fits.csv produced by run")->required();
  summ->add_option("--out-file", summ_out, "also write the summary row to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_src.resolve(run), run_out, run_data, threads);
    if (snoise->parsed()) return cmd_simulate_noise(snoise_src.resolve(snoise), snoise_out, snoise_draws);
    if (scov->parsed()) return cmd_simulate_covariates(scov_src.resolve(scov), scov_out);
    if (qme->parsed()) return cmd_qme(qme_src.resolve(qme), qme_out, threads);
    if (val->parsed()) return cmd_validate(val_seed, val_out);
    if (summ->parsed()) return cmd_summarize(summ_fits, summ_out);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
