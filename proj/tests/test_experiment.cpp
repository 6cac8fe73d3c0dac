#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtwr/config.hpp"
#include "gtwr/experiment.hpp"

using namespace gtwr;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gtwr_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.model_id = "small";
  cfg.seed = 7;
  cfg.nx = 4;
  cfg.nt = 6;
  cfg.H = 0.65;
  cfg.alpha = -0.2;
  cfg.noise_scale = 1.0;
  cfg.kernel.h = 0.3;
  cfg.surface.kind = SurfaceKind::plane;
  return cfg;
}

}  // namespace

TEST_CASE("coefficient surfaces evaluate their analytic formulas") {
  CHECK(beta_surface(SurfaceKind::plane, 0.5, 0.5) == Catch::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(beta_surface(SurfaceKind::plane, 0.05, 0.05) ==
        Catch::Approx(1.0 + 0.4 / 12.0).epsilon(1e-15));
  CHECK(beta_surface(SurfaceKind::plane, 0.0, 0.0) == 1.0);
  CHECK(beta_surface(SurfaceKind::plane, 1.0, 1.0) == Catch::Approx(1.0 + 8.0 / 12.0));

  // The curved surface returns to 1 where either squared factor hits 36.
  CHECK(beta_surface(SurfaceKind::curved, 0.0, 0.37) == Catch::Approx(1.0).margin(1e-15));
  CHECK(beta_surface(SurfaceKind::curved, 0.96, 0.11) == Catch::Approx(1.0).margin(1e-12));
  // (6 - 25*0.24/2)^2 = 9, so both factors are 27: 1 + 27*27/2592.
  CHECK(beta_surface(SurfaceKind::curved, 0.24, 0.24) == Catch::Approx(1.28125).epsilon(1e-15));
  // Peak at x = y = 0.48: 1 + 36*36/2592 = 1.5.
  CHECK(beta_surface(SurfaceKind::curved, 0.48, 0.48) == Catch::Approx(1.5).epsilon(1e-15));

  CHECK_THROWS_AS(beta_surface(SurfaceKind::plane, -0.1, 0.5), std::domain_error);
  CHECK_THROWS_AS(beta_surface(SurfaceKind::curved, 0.5, 1.2), std::domain_error);
  CHECK_THROWS_AS(beta_surface(SurfaceKind::constant, 0.5, 0.5), std::invalid_argument);
}

TEST_CASE("surface site values cover all kinds") {
  const RegularDesign g = make_design(3, 2);

  SurfaceSpec plane;
  plane.kind = SurfaceKind::plane;
  const Eigen::VectorXd vp = surface_site_values(plane, g);
  REQUIRE(vp.size() == 9);
  for (std::int64_t j = 0; j < 9; ++j)
    CHECK(vp[j] == beta_surface(SurfaceKind::plane, g.sites(j, 0), g.sites(j, 1)));

  SurfaceSpec c;
  c.kind = SurfaceKind::constant;
  c.value = 2.5;
  CHECK(surface_site_values(c, g).isConstant(2.5));

  const fs::path dir = fresh_dir("surface_csv");
  SurfaceSpec sc;
  sc.kind = SurfaceKind::csv;
  sc.path = (dir / "surf.csv").string();
  {
    std::ostringstream rows;
    rows << "site_id,value\n";
    for (int j = 0; j < 9; ++j) rows << j << "," << (1.0 + 0.1 * j) << "\n";
    write_file(sc.path, rows.str());
  }
  const Eigen::VectorXd vc = surface_site_values(sc, g);
  CHECK(vc[0] == 1.0);
  CHECK(vc[8] == Catch::Approx(1.8));

  write_file(sc.path, "site_id,beta\n0,1\n");
  CHECK_THROWS_WITH(surface_site_values(sc, g),
                    Catch::Matchers::ContainsSubstring("header must be 'site_id,value'"));
  write_file(sc.path, "site_id,value\n0,1\n");
  CHECK_THROWS_WITH(surface_site_values(sc, g), Catch::Matchers::ContainsSubstring("expected 9"));
  {
    std::ostringstream rows;
    rows << "site_id,value\n";
    for (int j = 0; j < 9; ++j) rows << (j == 5 ? 4 : j) << ",1\n";
    write_file(sc.path, rows.str());
  }
  CHECK_THROWS_WITH(surface_site_values(sc, g),
                    Catch::Matchers::ContainsSubstring("duplicate site_id 4"));
}

TEST_CASE("config text parses into a full experiment configuration") {
  const std::string text =
      "# comment\n"
      "[experiment]\n"
      "model_id = demo\n"
      "seed = 424242\n"
      "replications = 3\n"
      "[design]\n"
      "nx = 5\n"
      "nt = 7\n"
      "d = 2\n"
      "[noise]\n"
      "H = 0.75\n"
      "alpha = 0.3\n"
      "scale = 1.5\n"
      "[covariates]\n"
      "phi10 = 0.3\n"
      "phi11 = 0.2\n"
      "innovation_sd = 0.9\n"
      "burn_in = 50\n"
      "contiguity = rook\n"
      "[kernel]\n"
      "family = bisquare\n"
      "h = 0.4\n"
      "mu_t = 2\n"
      "mu_s = 0.5\n"
      "[surface]\n"
      "kind = constant\n"
      "value = 1.25\n";
  const ExperimentConfig cfg = parse_config_text(text, "demo.ini");
  CHECK(cfg.model_id == "demo");
  CHECK(cfg.seed == 424242ULL);
  CHECK(cfg.replications == 3);
  CHECK(cfg.nx == 5);
  CHECK(cfg.nt == 7);
  CHECK(cfg.H == 0.75);
  CHECK(cfg.alpha == 0.3);
  CHECK(cfg.noise_scale == 1.5);
  CHECK(cfg.star.phi10 == 0.3);
  CHECK(cfg.star.burn_in == 50);
  CHECK(cfg.star.contiguity == Contiguity::rook);
  CHECK(cfg.kernel.family == KernelFamily::bisquare);
  CHECK(cfg.kernel.h == 0.4);
  CHECK(cfg.kernel.mu_t == 2.0);
  CHECK(cfg.kernel.mu_s == 0.5);
  CHECK(cfg.surface.kind == SurfaceKind::constant);
  CHECK(cfg.surface.value == 1.25);
  CHECK_FALSE(cfg.alpha_from_hs);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config parser reports precise errors") {
  using Catch::Matchers::ContainsSubstring;
  CHECK_THROWS_WITH(parse_config_text("[noise]\nH = 0.5\nbogus = 1\n", "c.ini"),
                    ContainsSubstring("c.ini line 3") && ContainsSubstring("unknown key 'bogus'"));
  CHECK_THROWS_WITH(parse_config_text("[design]\nnx = 5\nnx = 6\n", "c.ini"),
                    ContainsSubstring("duplicate key 'nx'"));
  CHECK_THROWS_WITH(parse_config_text("nx = 5\n", "c.ini"),
                    ContainsSubstring("before any [section]"));
  CHECK_THROWS_WITH(parse_config_text("[design]\nnx = five\n", "c.ini"),
                    ContainsSubstring("line 2") && ContainsSubstring("integer"));
  CHECK_THROWS_WITH(parse_config_text("[mystery]\n", "c.ini"),
                    ContainsSubstring("unknown section"));
  CHECK_THROWS_WITH(parse_config_text("[design\n", "c.ini"), ContainsSubstring("unterminated"));
  CHECK_THROWS_WITH(parse_config_text("[kernel]\nh = -1\n", "c.ini"),
                    ContainsSubstring("h must be > 0 or 'auto'"));
  CHECK_THROWS_WITH(parse_config_text("[covariates]\ncontiguity = hex\n", "c.ini"),
                    ContainsSubstring("rook") && ContainsSubstring("queen"));
  CHECK_THROWS_WITH(parse_config_text("[noise]\nalpha = 0.1\nH_s = 0.4\n", "c.ini"),
                    ContainsSubstring("not both"));
  CHECK_THROWS_WITH(parse_config_text("[noise]\nH_s = 1.4\n", "c.ini"),
                    ContainsSubstring("H_s must lie in (0, 1)"));
  CHECK_THROWS_WITH(parse_config_text("[experiment]\nseed = -4\n", "c.ini"),
                    ContainsSubstring("unsigned"));
}

TEST_CASE("spatial exponent can be given as a Hurst exponent") {
  const ExperimentConfig cfg = parse_config_text("[noise]\nH_s = 0.4\n", "c.ini");
  CHECK(cfg.alpha == 2.0 * 0.4 - 1.0);
  CHECK(cfg.alpha_from_hs);
  CHECK(cfg.h_s == 0.4);
}

TEST_CASE("config serialization round-trips exactly") {
  ExperimentConfig cfg = small_config();
  cfg.kernel.mu_t = 1.7;
  cfg.star.phi10 = 0.37;
  const std::string once = serialize_config(cfg);
  const ExperimentConfig back = parse_config_text(once, "round.ini");
  CHECK(serialize_config(back) == once);
  CHECK(back.seed == cfg.seed);
  CHECK(back.kernel.h == cfg.kernel.h);
  CHECK(back.kernel.mu_t == cfg.kernel.mu_t);

  // Unresolved automatic bandwidth survives a round trip as "auto".
  cfg.kernel.h = 0.0;
  const std::string with_auto = serialize_config(cfg);
  CHECK(with_auto.find("h = auto") != std::string::npos);
  CHECK(parse_config_text(with_auto, "round.ini").kernel.h == 0.0);
}

TEST_CASE("config validation rejects bad domains") {
  auto bad = [](auto&& mutate) {
    ExperimentConfig cfg = small_config();
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  };
  bad([](ExperimentConfig& c) { c.nx = 0; });
  bad([](ExperimentConfig& c) { c.nt = 0; });
  bad([](ExperimentConfig& c) { c.d = 4; });
  bad([](ExperimentConfig& c) { c.H = 1.0; });
  bad([](ExperimentConfig& c) { c.alpha = -1.0; });
  bad([](ExperimentConfig& c) { c.alpha = 2.0; });  // needs alpha < d
  bad([](ExperimentConfig& c) { c.noise_scale = -0.1; });
  bad([](ExperimentConfig& c) { c.replications = 0; });
  bad([](ExperimentConfig& c) { c.star.innovation_sd = 0.0; });
  bad([](ExperimentConfig& c) { c.kernel.mu_s = 0.0; });
  bad([](ExperimentConfig& c) { c.d = 1; });  // plane surface needs d = 2
  bad([](ExperimentConfig& c) {
    c.surface.kind = SurfaceKind::csv;
    c.surface.path.clear();
  });
  bad([](ExperimentConfig& c) { c.model_id.clear(); });
}

TEST_CASE("the four bundled presets differ only in surface and temporal roughness") {
  const ExperimentConfig m1 = preset_config("model1");
  const ExperimentConfig m2 = preset_config("model2");
  const ExperimentConfig m3 = preset_config("model3");
  const ExperimentConfig m4 = preset_config("model4");

  for (const auto* m : {&m1, &m2, &m3, &m4}) {
    CHECK(m->nx == 10);
    CHECK(m->nt == 100);
    CHECK(m->d == 2);
    CHECK(m->alpha == 2.0 * 0.40 - 1.0);
    CHECK(m->alpha_from_hs);
    CHECK(m->noise_scale == 1.0);
    CHECK(m->kernel.h == 0.0);  // automatic
    CHECK(m->kernel.family == KernelFamily::gaussian);
    CHECK(m->star.phi10 == 0.4);
    CHECK(m->star.phi11 == 0.25);
    CHECK(m->star.contiguity == Contiguity::queen);
    CHECK(m->replications == 1);
  }
  CHECK(m1.surface.kind == SurfaceKind::plane);
  CHECK(m2.surface.kind == SurfaceKind::plane);
  CHECK(m3.surface.kind == SurfaceKind::curved);
  CHECK(m4.surface.kind == SurfaceKind::curved);
  CHECK(m1.H == 0.65);
  CHECK(m2.H == 0.90);
  CHECK(m3.H == 0.65);
  CHECK(m4.H == 0.90);

  // Beyond (model_id, surface, H) the serialized forms agree line by line.
  auto canon = [](ExperimentConfig c) {
    c.model_id = "x";
    c.surface.kind = SurfaceKind::plane;
    c.H = 0.5;
    return serialize_config(c);
  };
  CHECK(canon(m1) == canon(m2));
  CHECK(canon(m1) == canon(m3));
  CHECK(canon(m1) == canon(m4));

  CHECK_THROWS_WITH(preset_config("model9"), Catch::Matchers::ContainsSubstring("model1"));
}

TEST_CASE("shipped example configurations stay in sync with the presets") {
  const fs::path examples = fs::path(__FILE__).parent_path().parent_path() / "examples";
  for (const std::string name : {"model1", "model2", "model3", "model4"}) {
    const ExperimentConfig from_file = load_config((examples / (name + ".ini")).string());
    CHECK(serialize_config(from_file) == serialize_config(preset_config(name)));
  }
  for (const std::string name : {"quickstart", "exact_recovery"}) {
    const ExperimentConfig cfg = load_config((examples / (name + ".ini")).string());
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.kernel.h > 0.0);  // the small demos fix the bandwidth
  }
}

TEST_CASE("run_experiment writes a complete, checksummed, reproducible bundle") {
  const ExperimentConfig cfg = small_config();
  const fs::path dir1 = fresh_dir("bundle_a");
  const ExperimentResult r1 = run_experiment(cfg, dir1.string(), 2);

  const std::vector<std::string> expect = {"grid.csv",   "covariates.csv", "noise.csv",
                                           "dataset.csv", "fits.csv",       "frames.csv",
                                           "summary.csv", "qme.csv",        "resolved_config.ini",
                                           "manifest.json"};
  CHECK(r1.files == expect);
  for (const auto& f : r1.files) CHECK(fs::exists(dir1 / f));
  CHECK(r1.qme.size() == 1);
  CHECK(r1.qme[0].size() == 6);
  CHECK(r1.fit.beta.rows() == 96);

  SECTION("manifest checksums match the files on disk") {
    const auto manifest = nlohmann::json::parse(read_file(dir1 / "manifest.json"));
    CHECK(manifest["library_version"] == "0.1.0");
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["replications"] == 1);
    REQUIRE(manifest["outputs"].size() == expect.size() - 1);  // manifest excludes itself
    for (const auto& entry : manifest["outputs"]) {
      const auto file = entry["file"].get<std::string>();
      const auto sum = entry["fnv1a64"].get<std::string>();
      CHECK(sum == fnv1a64_hex(fnv1a64_file((dir1 / file).string())));
    }
    std::string joined;
    for (const auto& line : manifest["resolved_config"]) joined += line.get<std::string>() + "\n";
    CHECK(joined == serialize_config(r1.config));
  }

  SECTION("identical configs give byte-identical bundles") {
    const fs::path dir2 = fresh_dir("bundle_b");
    run_experiment(cfg, dir2.string(), 1);  // different thread count on purpose
    for (const auto& f : expect) CHECK(read_file(dir1 / f) == read_file(dir2 / f));
  }

  SECTION("rerunning from the resolved config echo reproduces every byte") {
    const ExperimentConfig echo = load_config((dir1 / "resolved_config.ini").string());
    const fs::path dir3 = fresh_dir("bundle_c");
    run_experiment(echo, dir3.string(), 2);
    for (const auto& f : expect) CHECK(read_file(dir1 / f) == read_file(dir3 / f));
  }

  SECTION("stored noise satisfies the reconstruction identity") {
    const csv::Table noise = csv::read_table((dir1 / "noise.csv").string());
    const csv::Table data = csv::read_table((dir1 / "dataset.csv").string());
    const RegularDesign g = make_design(cfg.nx, cfg.nt, cfg.d);
    REQUIRE(noise.rows.size() == 96);
    REQUIRE(data.rows.size() == 96);
    // dataset columns: t, x_1, x_2, covariate_1, y; noise columns: draw, k, j, value.
    for (std::size_t i = 0; i < 96; ++i) {
      const double x = csv::parse_double(data.rows[i][3], "x");
      const double y = csv::parse_double(data.rows[i][4], "y");
      const double eps = csv::parse_double(noise.rows[i][3], "eps");
      const std::int64_t cell = static_cast<std::int64_t>(i);
      const double beta = beta_surface(SurfaceKind::plane, g.sites(g.cell_site(cell), 0),
                                       g.sites(g.cell_site(cell), 1));
      // The tables are written with round-trip-exact formatting, so the model
      // identity survives re-reading up to one rounding of the product.
      CHECK(y - beta * x == Catch::Approx(eps).margin(1e-13));
    }
  }
}

TEST_CASE("automatic bandwidth resolves once and is echoed as a number") {
  ExperimentConfig cfg = small_config();
  cfg.kernel.h = 0.0;
  const fs::path dir = fresh_dir("auto_h");
  const ExperimentResult r = run_experiment(cfg, dir.string(), 2);
  CHECK(r.config.kernel.h > 0.0);
  CHECK(r.bandwidth.tried.size() == 10);
  CHECK(r.bandwidth.h == r.config.kernel.h);
  const std::string echo = read_file(dir / "resolved_config.ini");
  CHECK(echo.find("h = auto") == std::string::npos);
  CHECK(echo.find("h = " + csv::format_double(r.config.kernel.h)) != std::string::npos);
}

TEST_CASE("zero noise with a constant surface is recovered exactly") {
  ExperimentConfig cfg = small_config();
  cfg.model_id = "exact";
  cfg.surface.kind = SurfaceKind::constant;
  cfg.surface.value = 2.5;
  cfg.noise_scale = 0.0;
  const fs::path dir = fresh_dir("exact_recovery");
  const ExperimentResult r = run_experiment(cfg, dir.string(), 2);
  CHECK(r.replications[0].adj_r2 == Catch::Approx(1.0).margin(1e-12));
  CHECK(r.replications[0].beta1.min == Catch::Approx(2.5).margin(1e-10));
  CHECK(r.replications[0].beta1.max == Catch::Approx(2.5).margin(1e-10));
  for (double q : r.qme[0]) CHECK(q < 1e-16);
}

TEST_CASE("replicated runs aggregate summaries and error curves") {
  ExperimentConfig cfg = small_config();
  cfg.replications = 3;
  const fs::path dir = fresh_dir("reps");
  const ExperimentResult r = run_experiment(cfg, dir.string(), 2);
  CHECK(r.replications.size() == 3);
  CHECK(r.qme.size() == 3);
  CHECK(fs::exists(dir / "summary_reps.csv"));
  CHECK(fs::exists(dir / "qme_mean.csv"));
  const csv::Table t = csv::read_table((dir / "summary_reps.csv").string());
  CHECK(t.header.front() == "rep");
  CHECK(t.rows.size() == 3);
  for (std::size_t k = 0; k < r.qme_mean.size(); ++k) {
    const double expect = (r.qme[0][k] + r.qme[1][k] + r.qme[2][k]) / 3.0;
    CHECK(r.qme_mean[k] == Catch::Approx(expect).epsilon(1e-15));
  }
  // Replications are genuinely different draws.
  CHECK(r.replications[0].beta1.median != r.replications[1].beta1.median);

  const QmeReplications q = qme_replications(cfg, 2);
  REQUIRE(q.curves.size() == 3);
  for (std::size_t k = 0; k < q.mean.size(); ++k)
    CHECK(q.curves[0][k] == r.qme[0][k]);  // same seeds, same curves
}

TEST_CASE("failed stages report their name and clean up the bundle") {
  ExperimentConfig cfg = small_config();
  cfg.surface.kind = SurfaceKind::csv;
  cfg.surface.path = "/nonexistent/surface_table.csv";
  const fs::path dir = fresh_dir("cleanup");
  CHECK_THROWS_WITH(run_experiment(cfg, dir.string(), 2),
                    Catch::Matchers::ContainsSubstring("stage 'surface'"));
  CHECK(fs::is_empty(dir));

  ExperimentConfig unstable = small_config();
  unstable.star.phi10 = 0.9;
  unstable.star.phi11 = 0.2;
  CHECK_THROWS_WITH(run_experiment(unstable, dir.string(), 2),
                    Catch::Matchers::ContainsSubstring("stage 'covariates'") &&
                        Catch::Matchers::ContainsSubstring("spectral radius"));
  CHECK(fs::is_empty(dir));
}

TEST_CASE("ingested observations rebuild the design and refit identically") {
  const ExperimentConfig cfg = small_config();
  const fs::path dir = fresh_dir("ingest");
  const ExperimentResult r = run_experiment(cfg, dir.string(), 2);

  const IngestedData data = ingest_observations((dir / "dataset.csv").string());
  CHECK(data.p == 1);
  CHECK(data.grid.nt == cfg.nt);
  CHECK(data.grid.ns() == 16);
  CHECK(data.grid.nx == cfg.nx);  // pixel layout recognized
  CHECK(data.grid.d == 2);
  CHECK(data.grid.delta == r.grid.delta);
  CHECK((data.grid.sites - r.grid.sites).cwiseAbs().maxCoeff() == 0.0);

  FieldFitOptions fo;
  fo.threads = 2;
  const FieldFit refit = fit_field(data.grid, data.dm, data.y, r.config.kernel, fo);
  CHECK((refit.beta - r.fit.beta).cwiseAbs().maxCoeff() <= 1e-12);

  SECTION("fit_external writes the same fit table as the original run") {
    ExperimentConfig kcfg = small_config();
    kcfg.kernel = r.config.kernel;
    const fs::path fdir = fresh_dir("ingest_fit");
    const ExternalFitResult ext =
        fit_external(kcfg, (dir / "dataset.csv").string(), fdir.string(), 2);
    CHECK(ext.files == std::vector<std::string>{"fits.csv", "summary.csv",
                                                "resolved_config.ini", "manifest.json"});
    CHECK(read_file(fdir / "fits.csv") == read_file(dir / "fits.csv"));
    CHECK(read_file(fdir / "summary.csv") == read_file(dir / "summary.csv"));
  }
}

TEST_CASE("ingestion rejects malformed observation tables precisely") {
  using Catch::Matchers::ContainsSubstring;
  const fs::path dir = fresh_dir("ingest_errors");
  const fs::path p = dir / "obs.csv";

  write_file(p, "t,x_1,x_2,covariate_1\n0.5,0.1,0.1,1.0\n");
  CHECK_THROWS_WITH(ingest_observations(p.string()), ContainsSubstring("missing column 'y'"));

  write_file(p, "t,x_1,x_2,covariate_1,y,mood\n0.5,0.1,0.1,1.0,2.0,9\n");
  CHECK_THROWS_WITH(ingest_observations(p.string()),
                    ContainsSubstring("unexpected column 'mood'"));

  write_file(p, "t,x_1,x_2,covariate_1,y\n0.5,0.1,0.1,1.0,2.0\n0.5,0.2,0.1,1.0,nan\n");
  CHECK_THROWS_WITH(ingest_observations(p.string()),
                    ContainsSubstring("line 3") && ContainsSubstring("non-finite") &&
                        ContainsSubstring("'y'"));

  write_file(p,
             "t,x_1,x_2,covariate_1,y\n"
             "0.5,0.1,0.1,1.0,2.0\n"
             "0.5,0.2,0.1,1.1,2.1\n"
             "0.75,0.1,0.1,1.2,2.2\n"
             "0.5,0.1,0.1,1.3,2.3\n");
  CHECK_THROWS_WITH(ingest_observations(p.string()),
                    ContainsSubstring("line 5") && ContainsSubstring("duplicate") &&
                        ContainsSubstring("line 2"));

  write_file(p,
             "t,x_1,x_2,covariate_1,y\n"
             "0.25,0.1,0.1,1.0,2.0\n"
             "0.25,0.2,0.1,1.1,2.1\n"
             "0.75,0.1,0.1,1.2,2.2\n");
  CHECK_THROWS_WITH(ingest_observations(p.string()),
                    ContainsSubstring("cannot tile") && ContainsSubstring("2 times"));

  write_file(p, "t,x_1,x_2,covariate_1,y\n0.5,0.1,0.1,1.0\n");
  CHECK_THROWS_WITH(ingest_observations(p.string()),
                    ContainsSubstring("line 2") && ContainsSubstring("expected 5 fields"));
}

TEST_CASE("ingestion accepts shuffled columns and non-pixel layouts") {
  const fs::path dir = fresh_dir("ingest_shuffle");
  const fs::path p = dir / "obs.csv";
  write_file(p,
             "y,covariate_1,t,x_1\n"
             "2.0,1.0,0.25,-3.5\n"
             "2.1,1.1,0.25,4.25\n"
             "3.0,1.2,0.75,-3.5\n"
             "3.1,1.3,0.75,4.25\n");
  const IngestedData data = ingest_observations(p.string());
  CHECK(data.grid.d == 1);
  CHECK(data.grid.nt == 2);
  CHECK(data.grid.ns() == 2);
  CHECK(data.grid.nx == 0);  // not the unit-square pixel layout
  CHECK(data.grid.time_points == std::vector<double>{0.25, 0.75});
  CHECK(data.grid.sites(0, 0) == -3.5);
  CHECK(data.grid.sites(1, 0) == 4.25);
  CHECK(data.y[data.grid.cell(1, 1)] == 3.1);
  CHECK(data.dm.X(data.grid.cell(1, 0), 1) == 1.2);
}
