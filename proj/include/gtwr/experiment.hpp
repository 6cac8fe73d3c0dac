#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtwr/config.hpp"
#include "gtwr/covariates.hpp"
#include "gtwr/csv.hpp"
#include "gtwr/estimator.hpp"
#include "gtwr/noise.hpp"
#include "gtwr/rng.hpp"
#include "gtwr/stgrid.hpp"
#include "gtwr/version.hpp"

namespace gtwr {

// ---------------------------------------------------------------------------
// Coefficient surfaces
// ---------------------------------------------------------------------------

// The two analytic coefficient surfaces over the unit square: an inclined
// plane, and a curved bump that returns to 1 wherever either squared factor
// reaches 36 (x = 0 or x = 0.96, and likewise in y).
inline double beta_surface(SurfaceKind kind, double x, double y) {
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0))
    throw std::domain_error("beta_surface: (x, y) must lie in the unit square");
  switch (kind) {
    case SurfaceKind::plane:
      return 1.0 + 4.0 * (x + y) / 12.0;
    case SurfaceKind::curved: {
      const double gx = 6.0 - 25.0 * x / 2.0;
      const double gy = 6.0 - 25.0 * y / 2.0;
      return 1.0 + (36.0 - gx * gx) * (36.0 - gy * gy) / (324.0 * 8.0);
    }
    default:
      throw std::invalid_argument(
          "beta_surface: only plane and curved are analytic; constant and csv "
          "surfaces carry their own values");
  }
}

// Per-site coefficient values for any surface kind.  csv surfaces read a
// table with header "site_id,value" covering every site exactly once.
inline Eigen::VectorXd surface_site_values(const SurfaceSpec& spec, const RegularDesign& g) {
  const auto ns = g.ns();
  Eigen::VectorXd v(ns);
  switch (spec.kind) {
    case SurfaceKind::plane:
    case SurfaceKind::curved:
      if (g.d != 2)
        throw std::invalid_argument("surface_site_values: plane and curved need d = 2");
      for (std::int64_t j = 0; j < ns; ++j)
        v[j] = beta_surface(spec.kind, g.sites(j, 0), g.sites(j, 1));
      return v;
    case SurfaceKind::constant:
      v.setConstant(spec.value);
      return v;
    case SurfaceKind::csv: {
      const csv::Table t = csv::read_table(spec.path);
      if (t.header != std::vector<std::string>{"site_id", "value"})
        throw std::runtime_error(spec.path + ": surface table header must be 'site_id,value'");
      if (static_cast<std::int64_t>(t.rows.size()) != ns)
        throw std::runtime_error(spec.path + ": expected " + std::to_string(ns) +
                                 " surface rows, got " + std::to_string(t.rows.size()));
      std::vector<char> filled(static_cast<std::size_t>(ns), 0);
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = spec.path + " line " + std::to_string(r + 2);
        if (t.rows[r].size() != 2) throw std::runtime_error(where + ": expected 2 fields");
        const long long id = detail::parse_int(t.rows[r][0], where);
        if (id < 0 || id >= ns)
          throw std::runtime_error(where + ": site_id " + std::to_string(id) + " out of range");
        if (filled[static_cast<std::size_t>(id)])
          throw std::runtime_error(where + ": duplicate site_id " + std::to_string(id));
        filled[static_cast<std::size_t>(id)] = 1;
        const double val = csv::parse_double(t.rows[r][1], where);
        if (!std::isfinite(val)) throw std::runtime_error(where + ": non-finite surface value");
        v[id] = val;
      }
      return v;
    }
  }
  throw std::logic_error("surface_site_values: unreachable");
}

// ---------------------------------------------------------------------------
// Checksums and manifest plumbing
// ---------------------------------------------------------------------------

// 64-bit FNV-1a over a file's bytes.
inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for checksum: " + path);
  std::uint64_t h = 14695981039346656037ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return h;
}

inline std::string fnv1a64_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Simulation pipeline
// ---------------------------------------------------------------------------

namespace detail {

// Everything shared by all replications of one configured experiment.
struct SimContext {
  RegularDesign grid;
  NeighborWeights neighbors;
  CovarianceFactorization noise_fact;
  Eigen::VectorXd beta1_site;  // per-site coefficient surface
  Eigen::VectorXd beta1_cell;  // surface tiled over all cells
};

// `stage`, when given, tracks which pipeline step is active so failures can
// be reported by name.
inline SimContext make_sim_context(const ExperimentConfig& cfg, std::string* stage = nullptr) {
  auto at = [&](const char* s) {
    if (stage) *stage = s;
  };
  SimContext ctx;
  at("design");
  ctx.grid = make_design(cfg.nx, cfg.nt, cfg.d);
  at("covariates");
  ctx.neighbors = build_contiguity(cfg.nx, cfg.star.contiguity);
  const double radius = star_spectral_radius(cfg.star, ctx.neighbors);
  if (radius >= 1.0)
    throw std::invalid_argument("covariate process is not stationary (spectral radius " +
                                std::to_string(radius) + ")");
  at("noise");
  NoiseSpec nspec;
  nspec.H = cfg.H;
  nspec.alpha = cfg.alpha;
  nspec.scale = cfg.noise_scale;
  ctx.noise_fact = build_cov_factorization(ctx.grid, nspec);
  at("surface");
  ctx.beta1_site = surface_site_values(cfg.surface, ctx.grid);
  ctx.beta1_cell.resize(ctx.grid.n());
  for (std::int64_t c = 0; c < ctx.grid.n(); ++c)
    ctx.beta1_cell[c] = ctx.beta1_site[ctx.grid.cell_site(c)];
  return ctx;
}

// One simulated replication: covariate field, noise frame, and observations
// assembled as y = beta1 * x + noise (no intercept in the generating model).
// The stored noise frame is defined as y - beta1 * x evaluated in exactly
// the assembly's arithmetic, so the reconstruction identity holds bitwise.
struct Replication {
  Eigen::MatrixXd covariate_field;  // nt x ns
  DesignMatrix dm;
  Eigen::VectorXd y;
  Eigen::VectorXd noise;  // stored frame, = y - beta1 * x exactly
};

inline Replication make_replication(const SimContext& ctx, const ExperimentConfig& cfg, int rep,
                                    std::string* stage = nullptr) {
  auto at = [&](const char* s) {
    if (stage) *stage = s;
  };
  Replication r;
  at("covariates");
  r.covariate_field = simulate_star(cfg.star, ctx.neighbors, cfg.nt,
                                    Rng::derive(cfg.seed, rng_stream::covariates,
                                                static_cast<std::uint64_t>(rep)));
  at("noise");
  const Eigen::MatrixXd draw =
      sample_noise(ctx.noise_fact, 1,
                   Rng::derive(cfg.seed, rng_stream::noise, static_cast<std::uint64_t>(rep)));
  at("assemble");
  r.dm = make_design_matrix(r.covariate_field, true);
  const Eigen::VectorXd signal = ctx.beta1_cell.cwiseProduct(r.dm.X.col(1));
  r.y = signal + draw.row(0).transpose();
  r.noise = r.y - signal;
  if (((r.y - signal) - r.noise).cwiseAbs().maxCoeff() != 0.0)
    throw std::logic_error("observation identity y - beta*x != stored noise");
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Full experiment run
// ---------------------------------------------------------------------------

struct ReplicationSummary {
  FiveNumber beta1;
  double adj_r2 = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;  // resolved: bandwidth is numeric
  RegularDesign grid;
  BandwidthSearch bandwidth;  // trace of the automatic search; empty if h was fixed
  FieldFit fit;               // replication 0
  std::vector<ReplicationSummary> replications;
  std::vector<std::vector<double>> qme;  // one curve per replication
  std::vector<double> qme_mean;
  std::vector<std::string> files;  // relative names, in write order
  std::string out_dir;
};

namespace detail {

inline void write_dataset_csv(const RegularDesign& g, const DesignMatrix& dm,
                              const Eigen::VectorXd& y, const std::string& path) {
  csv::Writer w(path);
  w.begin_row();
  w.field(std::string("t"));
  for (int a = 0; a < g.d; ++a) w.field("x_" + std::to_string(a + 1));
  const int p = dm.p();
  for (int a = 0; a < p; ++a) w.field("covariate_" + std::to_string(a + 1));
  w.field(std::string("y"));
  w.end_row();
  const int first_cov = dm.intercept ? 1 : 0;
  for (std::int64_t c = 0; c < g.n(); ++c) {
    w.begin_row();
    w.field(g.time_points[static_cast<std::size_t>(g.cell_time(c))]);
    const auto j = g.cell_site(c);
    for (int a = 0; a < g.d; ++a) w.field(g.sites(j, a));
    for (int a = 0; a < p; ++a) w.field(dm.X(c, first_cov + a));
    w.field(y[c]);
    w.end_row();
  }
}

inline void write_frames_csv(const RegularDesign& g, const Eigen::VectorXd& beta1_true,
                             const FieldFit& fit, const Eigen::VectorXd& y,
                             const std::string& path) {
  csv::Writer w(path);
  w.begin_row();
  w.field(std::string("time_index"));
  w.field(std::string("site_id"));
  for (int a = 0; a < g.d; ++a) w.field("x_" + std::to_string(a + 1));
  w.field(std::string("beta_1_true"));
  w.field(std::string("beta_1_hat"));
  w.field(std::string("y"));
  w.field(std::string("fitted"));
  w.end_row();
  const Eigen::Index b1 = fit.beta.cols() > 1 ? 1 : 0;
  for (std::int64_t c = 0; c < g.n(); ++c) {
    w.begin_row();
    w.field(static_cast<long long>(g.cell_time(c)));
    w.field(static_cast<long long>(g.cell_site(c)));
    for (int a = 0; a < g.d; ++a) w.field(g.sites(g.cell_site(c), a));
    w.field(beta1_true[c]);
    w.field(fit.beta(c, b1));
    w.field(y[c]);
    w.field(fit.fitted[c]);
    w.end_row();
  }
}

inline ReplicationSummary summarize_fit(const FieldFit& fit) {
  ReplicationSummary s;
  const Eigen::Index b1 = fit.beta.cols() > 1 ? 1 : 0;
  std::vector<double> beta1;
  beta1.reserve(static_cast<std::size_t>(fit.beta.rows()));
  for (Eigen::Index c = 0; c < fit.beta.rows(); ++c)
    if (fit.status[static_cast<std::size_t>(c)] == FitStatus::ok)
      beta1.push_back(fit.beta(c, b1));
  s.beta1 = five_number(beta1);
  s.adj_r2 = fit.adj_r2;
  return s;
}

inline void write_manifest(const ExperimentConfig& cfg, const std::string& out_dir,
                           const std::vector<std::string>& files, const std::string& path) {
  namespace fs = std::filesystem;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "{\n";
  out << "  \"library_version\": \"" << version << "\",\n";
  out << "  \"model_id\": \"" << csv::json_escape(cfg.model_id) << "\",\n";
  out << "  \"seed\": " << cfg.seed << ",\n";
  out << "  \"replications\": " << cfg.replications << ",\n";
  out << "  \"replication_seeds\": {\n";
  auto seed_list = [&](std::uint64_t tag) {
    std::string s;
    for (int r = 0; r < cfg.replications; ++r) {
      if (r) s += ", ";
      s += std::to_string(Rng::derive(cfg.seed, tag, static_cast<std::uint64_t>(r)));
    }
    return s;
  };
  out << "    \"covariates\": [" << seed_list(rng_stream::covariates) << "],\n";
  out << "    \"noise\": [" << seed_list(rng_stream::noise) << "]\n";
  out << "  },\n";
  out << "  \"resolved_config\": [";
  {
    std::istringstream cfg_lines(serialize_config(cfg));
    std::string line;
    bool first = true;
    while (std::getline(cfg_lines, line)) {
      out << (first ? "\n    \"" : ",\n    \"") << csv::json_escape(line) << "\"";
      first = false;
    }
    out << "\n  ],\n";
  }
  out << "  \"outputs\": [";
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string full = (fs::path(out_dir) / files[i]).string();
    out << (i ? ",\n" : "\n");
    out << "    {\"file\": \"" << csv::json_escape(files[i]) << "\", \"fnv1a64\": \""
        << fnv1a64_hex(fnv1a64_file(full)) << "\"}";
  }
  out << "\n  ]\n}\n";
}

}  // namespace detail

// Runs the configured experiment end to end: simulate the covariate field and
// the noise per replication, assemble observations, resolve the bandwidth
// (replication 0 decides an "auto" request; the resolved value is what the
// config echo records), fit every cell, and accumulate the error curve.  All
// artifacts land in `out_dir` with their checksums in manifest.json; a
// failure at any stage removes the partial outputs and reports the stage.
inline ExperimentResult run_experiment(ExperimentConfig cfg, const std::string& out_dir,
                                       int threads = 0) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);

  ExperimentResult result;
  result.out_dir = out_dir;
  std::string stage = "setup";
  auto emit = [&](const std::string& name, auto&& writer) {
    writer((fs::path(out_dir) / name).string());
    result.files.push_back(name);
  };

  try {
    detail::SimContext ctx = detail::make_sim_context(cfg, &stage);
    result.grid = ctx.grid;
    const auto& g = result.grid;

    detail::Replication rep0;
    for (int r = 0; r < cfg.replications; ++r) {
      detail::Replication rep = detail::make_replication(ctx, cfg, r, &stage);
      if (r == 0 && cfg.kernel.h == 0.0) {
        stage = "bandwidth";
        result.bandwidth = auto_bandwidth(g, rep.dm, rep.y, cfg.kernel, threads);
        cfg.kernel.h = result.bandwidth.h;
      }
      stage = "fit";
      FieldFitOptions fo;
      fo.threads = threads;
      FieldFit fit = fit_field(g, rep.dm, rep.y, cfg.kernel, fo);
      result.replications.push_back(detail::summarize_fit(fit));
      stage = "qme";
      result.qme.push_back(qme_curve(g, rep.dm, rep.y, ctx.beta1_cell, cfg.kernel, threads));
      if (r == 0) {
        rep0 = std::move(rep);
        result.fit = std::move(fit);
      }
    }

    result.qme_mean.assign(static_cast<std::size_t>(g.nt), 0.0);
    for (const auto& curve : result.qme)
      for (std::size_t k = 0; k < curve.size(); ++k) result.qme_mean[k] += curve[k];
    for (auto& v : result.qme_mean) v /= static_cast<double>(cfg.replications);

    stage = "write outputs";
    emit("grid.csv", [&](const std::string& p) { write_grid_csv(g, p); });
    emit("covariates.csv",
         [&](const std::string& p) { write_covariates_csv(rep0.covariate_field, p); });
    emit("noise.csv", [&](const std::string& p) {
      write_noise_csv(rep0.noise.transpose(), g, p);
    });
    emit("dataset.csv",
         [&](const std::string& p) { detail::write_dataset_csv(g, rep0.dm, rep0.y, p); });
    emit("fits.csv", [&](const std::string& p) { write_fits_csv(g, result.fit, p); });
    emit("frames.csv", [&](const std::string& p) {
      detail::write_frames_csv(g, ctx.beta1_cell, result.fit, rep0.y, p);
    });
    emit("summary.csv", [&](const std::string& p) {
      write_summary_csv(result.replications[0].beta1, result.replications[0].adj_r2, p);
    });
    emit("qme.csv", [&](const std::string& p) { write_qme_csv(g, result.qme[0], p); });
    if (cfg.replications > 1) {
      emit("summary_reps.csv", [&](const std::string& p) {
        csv::Writer w(p);
        w.raw_row("rep,min,q1,median,q3,max,adjusted_r2");
        for (std::size_t r = 0; r < result.replications.size(); ++r) {
          const auto& s = result.replications[r];
          w.begin_row();
          w.field(static_cast<long long>(r));
          w.field(s.beta1.min);
          w.field(s.beta1.q1);
          w.field(s.beta1.median);
          w.field(s.beta1.q3);
          w.field(s.beta1.max);
          w.field(s.adj_r2);
          w.end_row();
        }
      });
      emit("qme_mean.csv", [&](const std::string& p) { write_qme_csv(g, result.qme_mean, p); });
    }
    emit("resolved_config.ini", [&](const std::string& p) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw std::runtime_error("cannot open for writing: " + p);
      out << serialize_config(cfg);
    });

    stage = "manifest";
    detail::write_manifest(cfg, out_dir, result.files,
                           (fs::path(out_dir) / "manifest.json").string());
    result.files.push_back("manifest.json");
  } catch (const std::exception& e) {
    std::error_code ec;
    for (const auto& f : result.files) fs::remove(fs::path(out_dir) / f, ec);
    fs::remove(fs::path(out_dir) / "manifest.json", ec);
    throw std::runtime_error("experiment stage '" + stage + "' failed: " + e.what());
  }

  result.config = cfg;
  return result;
}

// Error-curve replications without the per-cell field fit or any file
// output; used when only the accumulation curves are wanted.  An "auto"
// bandwidth is resolved on replication 0 exactly as in run_experiment.
struct QmeReplications {
  ExperimentConfig config;  // resolved
  std::vector<std::vector<double>> curves;
  std::vector<double> mean;
};

inline QmeReplications qme_replications(ExperimentConfig cfg, int threads = 0) {
  cfg.validate();
  detail::SimContext ctx = detail::make_sim_context(cfg);
  QmeReplications out;
  for (int r = 0; r < cfg.replications; ++r) {
    detail::Replication rep = detail::make_replication(ctx, cfg, r);
    if (r == 0 && cfg.kernel.h == 0.0)
      cfg.kernel.h = auto_bandwidth(ctx.grid, rep.dm, rep.y, cfg.kernel, threads).h;
    out.curves.push_back(
        qme_curve(ctx.grid, rep.dm, rep.y, ctx.beta1_cell, cfg.kernel, threads));
  }
  out.mean.assign(static_cast<std::size_t>(cfg.nt), 0.0);
  for (const auto& curve : out.curves)
    for (std::size_t k = 0; k < curve.size(); ++k) out.mean[k] += curve[k];
  for (auto& v : out.mean) v /= static_cast<double>(cfg.replications);
  out.config = cfg;
  return out;
}

// ---------------------------------------------------------------------------
// Observation ingestion (external data)
// ---------------------------------------------------------------------------

struct IngestedData {
  RegularDesign grid;
  DesignMatrix dm;  // intercept column plus p covariates
  Eigen::VectorXd y;
  int p = 0;
};

// Reads an observation table with header t, x_1..x_d, covariate_1..p, y (any
// column order).  The unique times and sites must tile a complete space-time
// grid; duplicates and holes are rejected with line numbers.  Site ids follow
// first appearance; time indices follow ascending time value.
inline IngestedData ingest_observations(const std::string& path) {
  const csv::Table t = csv::read_table(path);

  // Resolve the header: required names, consecutive x_/covariate_ runs.
  std::map<std::string, int> col;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (!col.emplace(t.header[i], static_cast<int>(i)).second)
      throw std::runtime_error(path + ": duplicate column '" + t.header[i] + "'");
  }
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw std::runtime_error(path + ": missing column '" + name + "'");
    return it->second;
  };
  const int t_col = need("t");
  const int y_col = need("y");
  int d = 0;
  while (col.count("x_" + std::to_string(d + 1))) ++d;
  if (d < 1) throw std::runtime_error(path + ": missing column 'x_1'");
  int p = 0;
  while (col.count("covariate_" + std::to_string(p + 1))) ++p;
  if (p < 1) throw std::runtime_error(path + ": missing column 'covariate_1'");
  if (static_cast<std::size_t>(d + p + 2) != t.header.size()) {
    for (const auto& [name, idx] : col) {
      (void)idx;
      bool known = name == "t" || name == "y";
      for (int a = 1; a <= d && !known; ++a) known = (name == "x_" + std::to_string(a));
      for (int a = 1; a <= p && !known; ++a) known = (name == "covariate_" + std::to_string(a));
      if (!known) throw std::runtime_error(path + ": unexpected column '" + name + "'");
    }
  }
  std::vector<int> x_cols(static_cast<std::size_t>(d)), cov_cols(static_cast<std::size_t>(p));
  for (int a = 0; a < d; ++a) x_cols[static_cast<std::size_t>(a)] = col["x_" + std::to_string(a + 1)];
  for (int a = 0; a < p; ++a)
    cov_cols[static_cast<std::size_t>(a)] = col["covariate_" + std::to_string(a + 1)];

  // Parse all rows.
  const std::size_t n_rows = t.rows.size();
  if (n_rows == 0) throw std::runtime_error(path + ": no data rows");
  struct Row {
    double t = 0;
    std::vector<double> x;
    std::vector<double> cov;
    double y = 0;
    int line = 0;
  };
  std::vector<Row> rows(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const int line = static_cast<int>(r) + 2;
    const std::string where = path + " line " + std::to_string(line);
    if (t.rows[r].size() != t.header.size())
      throw std::runtime_error(where + ": expected " + std::to_string(t.header.size()) +
                               " fields, got " + std::to_string(t.rows[r].size()));
    auto cell = [&](int c, const char* colname) {
      const double v =
          csv::parse_double(t.rows[r][static_cast<std::size_t>(c)], where);
      if (!std::isfinite(v))
        throw std::runtime_error(where + ": non-finite value in column '" + colname + "'");
      return v;
    };
    Row& row = rows[r];
    row.line = line;
    row.t = cell(t_col, "t");
    row.y = cell(y_col, "y");
    row.x.resize(static_cast<std::size_t>(d));
    row.cov.resize(static_cast<std::size_t>(p));
    for (int a = 0; a < d; ++a)
      row.x[static_cast<std::size_t>(a)] =
          cell(x_cols[static_cast<std::size_t>(a)], ("x_" + std::to_string(a + 1)).c_str());
    for (int a = 0; a < p; ++a)
      row.cov[static_cast<std::size_t>(a)] = cell(cov_cols[static_cast<std::size_t>(a)],
                                                  ("covariate_" + std::to_string(a + 1)).c_str());
  }

  // Index times (ascending) and sites (first appearance).
  std::map<double, int> time_index;
  for (const Row& row : rows) time_index.emplace(row.t, 0);
  {
    int k = 0;
    for (auto& [tv, idx] : time_index) {
      (void)tv;
      idx = k++;
    }
  }
  std::map<std::vector<double>, int> site_index;
  std::vector<std::vector<double>> sites_in_order;
  for (const Row& row : rows) {
    auto [it, inserted] = site_index.emplace(row.x, static_cast<int>(sites_in_order.size()));
    (void)it;
    if (inserted) sites_in_order.push_back(row.x);
  }

  const int nt = static_cast<int>(time_index.size());
  const auto ns = static_cast<std::int64_t>(sites_in_order.size());
  const std::int64_t n = static_cast<std::int64_t>(nt) * ns;
  if (static_cast<std::int64_t>(n_rows) != n)
    throw std::runtime_error(path + ": " + std::to_string(n_rows) + " rows cannot tile " +
                             std::to_string(nt) + " times x " + std::to_string(ns) +
                             " sites (need " + std::to_string(n) + ")");

  IngestedData data;
  data.p = p;
  RegularDesign& g = data.grid;
  g.nt = nt;
  g.d = d;
  g.sites.resize(ns, d);
  for (std::int64_t j = 0; j < ns; ++j)
    for (int a = 0; a < d; ++a) g.sites(j, a) = sites_in_order[static_cast<std::size_t>(j)]
                                                              [static_cast<std::size_t>(a)];
  g.time_points.reserve(static_cast<std::size_t>(nt));
  for (const auto& [tv, idx] : time_index) {
    (void)idx;
    g.time_points.push_back(tv);
  }
  g.delta = delta_n(n, d);
  // Recognize the unit-square pixel layout so nx reflects it; otherwise 0.
  g.nx = 0;
  {
    const auto m = static_cast<int>(std::llround(std::pow(static_cast<double>(ns), 1.0 / d)));
    std::int64_t md = 1;
    for (int a = 0; a < d; ++a) md *= m;
    if (m >= 1 && md == ns && (g.sites - make_pixel_grid(m, d)).cwiseAbs().maxCoeff() == 0.0)
      g.nx = m;
  }

  data.dm.intercept = true;
  data.dm.X.resize(n, 1 + p);
  data.y.resize(n);
  std::vector<int> seen_line(static_cast<std::size_t>(n), 0);
  for (const Row& row : rows) {
    const std::int64_t cell =
        g.cell(time_index[row.t], static_cast<std::int64_t>(site_index[row.x]));
    int& seen = seen_line[static_cast<std::size_t>(cell)];
    if (seen != 0)
      throw std::runtime_error(path + " line " + std::to_string(row.line) +
                               ": duplicate space-time point (first at line " +
                               std::to_string(seen) + ")");
    seen = row.line;
    data.dm.X(cell, 0) = 1.0;
    for (int a = 0; a < p; ++a) data.dm.X(cell, 1 + a) = row.cov[static_cast<std::size_t>(a)];
    data.y[cell] = row.y;
  }
  return data;
}

// Fits externally supplied observations with the configured kernel and writes
// fits.csv / summary.csv / resolved_config.ini / manifest.json.  Simulation
// sections of the config are ignored; the design echo reflects the data.
struct ExternalFitResult {
  ExperimentConfig config;
  IngestedData data;
  BandwidthSearch bandwidth;
  FieldFit fit;
  std::vector<std::string> files;
  std::string out_dir;
};

inline ExternalFitResult fit_external(ExperimentConfig cfg, const std::string& data_csv,
                                      const std::string& out_dir, int threads = 0) {
  namespace fs = std::filesystem;
  if (!(cfg.kernel.h >= 0.0) || !(cfg.kernel.mu_t > 0.0) || !(cfg.kernel.mu_s > 0.0))
    throw std::invalid_argument("fit_external: invalid kernel settings");
  fs::create_directories(out_dir);

  ExternalFitResult result;
  result.out_dir = out_dir;
  std::string stage = "ingest";
  try {
    result.data = ingest_observations(data_csv);
    const RegularDesign& g = result.data.grid;
    cfg.nx = g.nx;
    cfg.nt = g.nt;
    cfg.d = g.d;
    if (cfg.kernel.h == 0.0) {
      stage = "bandwidth";
      result.bandwidth = auto_bandwidth(g, result.data.dm, result.data.y, cfg.kernel, threads);
      cfg.kernel.h = result.bandwidth.h;
    }
    stage = "fit";
    FieldFitOptions fo;
    fo.threads = threads;
    result.fit = fit_field(g, result.data.dm, result.data.y, cfg.kernel, fo);

    stage = "write outputs";
    auto emit = [&](const std::string& name, auto&& writer) {
      writer((fs::path(out_dir) / name).string());
      result.files.push_back(name);
    };
    emit("fits.csv", [&](const std::string& p) { write_fits_csv(g, result.fit, p); });
    emit("summary.csv", [&](const std::string& p) {
      const ReplicationSummary s = detail::summarize_fit(result.fit);
      write_summary_csv(s.beta1, s.adj_r2, p);
    });
    emit("resolved_config.ini", [&](const std::string& p) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw std::runtime_error("cannot open for writing: " + p);
      out << serialize_config(cfg);
    });
    stage = "manifest";
    detail::write_manifest(cfg, out_dir, result.files,
                           (fs::path(out_dir) / "manifest.json").string());
    result.files.push_back("manifest.json");
  } catch (const std::exception& e) {
    std::error_code ec;
    for (const auto& f : result.files) fs::remove(fs::path(out_dir) / f, ec);
    fs::remove(fs::path(out_dir) / "manifest.json", ec);
    throw std::runtime_error("external fit stage '" + stage + "' failed: " + e.what());
  }
  result.config = cfg;
  return result;
}

}  // namespace gtwr
