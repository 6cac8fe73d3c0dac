#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "gtwr/covariates.hpp"
#include "gtwr/csv.hpp"
#include "gtwr/kernels.hpp"

namespace gtwr {

// ---------------------------------------------------------------------------
// Experiment configuration: a sectioned key/value text format
// ---------------------------------------------------------------------------

enum class SurfaceKind { plane, curved, constant, csv };

// Which coefficient surface multiplies the covariate when assembling
// observations.  `value` is the level of a constant surface; `path` points at
// a per-site table (header "site_id,value") for csv surfaces.
struct SurfaceSpec {
  SurfaceKind kind = SurfaceKind::plane;
  double value = 1.0;
  std::string path;
};

inline const char* surface_kind_name(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::plane: return "plane";
    case SurfaceKind::curved: return "curved";
    case SurfaceKind::constant: return "constant";
    case SurfaceKind::csv: return "csv";
  }
  return "?";
}

inline const char* kernel_family_name(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "bisquare";
}

inline const char* contiguity_name(Contiguity c) {
  return c == Contiguity::queen ? "queen" : "rook";
}

// Everything a run needs, with the source-text conventions already applied.
// `kernel.h == 0` means "choose the bandwidth automatically".  When the
// config gave the spatial roughness as a Hurst exponent H_s instead of the
// spectral exponent alpha, `alpha` holds the mapped value 2*H_s - 1 and
// `alpha_from_hs`/`h_s` record the origin so front ends can announce the
// mapping (it is a library convention, not part of the model definition).
struct ExperimentConfig {
  std::string model_id = "custom";
  std::uint64_t seed = 1729;
  int replications = 1;

  // design
  int nx = 10;
  int nt = 100;
  int d = 2;

  // noise
  double H = 0.5;
  double alpha = 0.0;
  double noise_scale = 1.0;
  bool alpha_from_hs = false;
  double h_s = 0.0;

  // covariate process
  StarSpec star;

  // kernel; h == 0 requests the automatic bandwidth search
  KernelSpec kernel{KernelFamily::gaussian, 0.0, 1.0, 1.0};

  SurfaceSpec surface;

  void validate() const {
    if (model_id.empty()) throw std::invalid_argument("config: model_id must not be empty");
    if (replications < 1) throw std::invalid_argument("config: replications must be >= 1");
    if (nx < 1) throw std::invalid_argument("config: nx must be >= 1");
    if (nt < 1) throw std::invalid_argument("config: nt must be >= 1");
    if (d < 1 || d > 3) throw std::invalid_argument("config: d must be 1, 2, or 3");
    if (!(H > 0.0 && H < 1.0)) throw std::invalid_argument("config: H must lie in (0, 1)");
    if (!(alpha > -1.0 && alpha < static_cast<double>(d)))
      throw std::invalid_argument("config: alpha must lie in (-1, d)");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("config: noise scale must be >= 0");
    if (!(star.innovation_sd > 0.0))
      throw std::invalid_argument("config: innovation_sd must be > 0");
    if (star.burn_in < 0) throw std::invalid_argument("config: burn_in must be >= 0");
    if (!(kernel.h >= 0.0)) throw std::invalid_argument("config: h must be > 0 or auto");
    if (!(kernel.mu_t > 0.0 && kernel.mu_s > 0.0))
      throw std::invalid_argument("config: mu_t and mu_s must be > 0");
    if (surface.kind == SurfaceKind::constant && !std::isfinite(surface.value))
      throw std::invalid_argument("config: constant surface needs a finite value");
    if (surface.kind == SurfaceKind::csv && surface.path.empty())
      throw std::invalid_argument("config: csv surface needs a path");
    if ((surface.kind == SurfaceKind::plane || surface.kind == SurfaceKind::curved) && d != 2)
      throw std::invalid_argument("config: plane and curved surfaces are two-dimensional (d = 2)");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline long long parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + s + "' as an integer");
  }
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size() || s.find('-') != std::string::npos)
      throw std::invalid_argument("not unsigned");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + s + "' as an unsigned integer");
  }
}

}  // namespace detail

// Parses the sectioned key/value format.  Lines are `key = value` under a
// `[section]` heading; blank lines and lines starting with '#' or ';' are
// ignored.  Unknown sections or keys, duplicate keys, and malformed values
// are all reported with the source name and line number.  `alpha` and `H_s`
// are mutually exclusive ways to give the spatial exponent.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  bool saw_alpha = false, saw_hs = false;
  int lineno = 0;

  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error(source + " line " + std::to_string(lineno) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail("unterminated section heading");
      section = detail::trim(t.substr(1, t.size() - 2));
      if (section != "experiment" && section != "design" && section != "noise" &&
          section != "covariates" && section != "kernel" && section != "surface")
        fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' appears before any [section]");
    if (key.empty()) fail("empty key");
    if (val.empty()) fail("empty value for '" + key + "'");
    if (!seen.insert(section + "." + key).second)
      fail("duplicate key '" + key + "' in [" + section + "]");

    const std::string where = source + " line " + std::to_string(lineno);
    auto num = [&] { return csv::parse_double(val, where); };
    auto integer = [&] { return detail::parse_int(val, where); };

    if (section == "experiment") {
      if (key == "model_id") cfg.model_id = val;
      else if (key == "seed") cfg.seed = detail::parse_u64(val, where);
      else if (key == "replications") cfg.replications = static_cast<int>(integer());
      else fail("unknown key '" + key + "' in [experiment]");
    } else if (section == "design") {
      if (key == "nx") cfg.nx = static_cast<int>(integer());
      else if (key == "nt") cfg.nt = static_cast<int>(integer());
      else if (key == "d") cfg.d = static_cast<int>(integer());
      else fail("unknown key '" + key + "' in [design]");
    } else if (section == "noise") {
      if (key == "H") cfg.H = num();
      else if (key == "alpha") { cfg.alpha = num(); saw_alpha = true; }
      else if (key == "H_s") { cfg.h_s = num(); saw_hs = true; }
      else if (key == "scale") cfg.noise_scale = num();
      else fail("unknown key '" + key + "' in [noise]");
    } else if (section == "covariates") {
      if (key == "phi10") cfg.star.phi10 = num();
      else if (key == "phi11") cfg.star.phi11 = num();
      else if (key == "innovation_sd") cfg.star.innovation_sd = num();
      else if (key == "burn_in") cfg.star.burn_in = static_cast<int>(integer());
      else if (key == "contiguity") {
        if (val == "rook") cfg.star.contiguity = Contiguity::rook;
        else if (val == "queen") cfg.star.contiguity = Contiguity::queen;
        else fail("contiguity must be 'rook' or 'queen', got '" + val + "'");
      } else fail("unknown key '" + key + "' in [covariates]");
    } else if (section == "kernel") {
      if (key == "family") {
        if (val == "gaussian") cfg.kernel.family = KernelFamily::gaussian;
        else if (val == "bisquare") cfg.kernel.family = KernelFamily::bisquare;
        else fail("kernel family must be 'gaussian' or 'bisquare', got '" + val + "'");
      } else if (key == "h") {
        if (val == "auto") cfg.kernel.h = 0.0;
        else {
          cfg.kernel.h = num();
          if (!(cfg.kernel.h > 0.0)) fail("h must be > 0 or 'auto'");
        }
      } else if (key == "mu_t") cfg.kernel.mu_t = num();
      else if (key == "mu_s") cfg.kernel.mu_s = num();
      else fail("unknown key '" + key + "' in [kernel]");
    } else {  // surface
      if (key == "kind") {
        if (val == "plane") cfg.surface.kind = SurfaceKind::plane;
        else if (val == "curved") cfg.surface.kind = SurfaceKind::curved;
        else if (val == "constant") cfg.surface.kind = SurfaceKind::constant;
        else if (val == "csv") cfg.surface.kind = SurfaceKind::csv;
        else fail("surface kind must be plane, curved, constant, or csv; got '" + val + "'");
      } else if (key == "value") cfg.surface.value = num();
      else if (key == "path") cfg.surface.path = val;
      else fail("unknown key '" + key + "' in [surface]");
    }
  }

  if (saw_alpha && saw_hs)
    throw std::runtime_error(source +
                             ": give the spatial exponent either as alpha or as H_s, not both");
  if (saw_hs) {
    if (!(cfg.h_s > 0.0 && cfg.h_s < 1.0))
      throw std::runtime_error(source + ": H_s must lie in (0, 1)");
    cfg.alpha = 2.0 * cfg.h_s - 1.0;
    cfg.alpha_from_hs = true;
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

// Canonical text form.  Every key is explicit, the spatial exponent is always
// written as the resolved `alpha`, and a resolved bandwidth is written as a
// number (only an unresolved request serializes as "auto"), so a round trip
// through parse_config_text reproduces the struct and re-serializing
// reproduces the bytes.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto f = [&](double v) { return csv::format_double(v); };
  out << "# experiment configuration (canonical form)\n";
  out << "[experiment]\n";
  out << "model_id = " << cfg.model_id << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "replications = " << cfg.replications << "\n\n";
  out << "[design]\n";
  out << "nx = " << cfg.nx << "\n";
  out << "nt = " << cfg.nt << "\n";
  out << "d = " << cfg.d << "\n\n";
  out << "[noise]\n";
  out << "H = " << f(cfg.H) << "\n";
  out << "alpha = " << f(cfg.alpha) << "\n";
  out << "scale = " << f(cfg.noise_scale) << "\n\n";
  out << "[covariates]\n";
  out << "phi10 = " << f(cfg.star.phi10) << "\n";
  out << "phi11 = " << f(cfg.star.phi11) << "\n";
  out << "innovation_sd = " << f(cfg.star.innovation_sd) << "\n";
  out << "burn_in = " << cfg.star.burn_in << "\n";
  out << "contiguity = " << contiguity_name(cfg.star.contiguity) << "\n\n";
  out << "[kernel]\n";
  out << "family = " << kernel_family_name(cfg.kernel.family) << "\n";
  out << "h = " << (cfg.kernel.h == 0.0 ? std::string("auto") : f(cfg.kernel.h)) << "\n";
  out << "mu_t = " << f(cfg.kernel.mu_t) << "\n";
  out << "mu_s = " << f(cfg.kernel.mu_s) << "\n\n";
  out << "[surface]\n";
  out << "kind = " << surface_kind_name(cfg.surface.kind) << "\n";
  if (cfg.surface.kind == SurfaceKind::constant) out << "value = " << f(cfg.surface.value) << "\n";
  if (cfg.surface.kind == SurfaceKind::csv) out << "path = " << cfg.surface.path << "\n";
  return out.str();
}

// The four bundled model presets: a 10 x 10 pixel grid observed at 100 time
// steps (10,000 cells), STAR(1,1) covariate, fractional colored noise with
// spatial Hurst exponent 0.40, and the automatic bandwidth.  They differ only
// in the coefficient surface and the temporal Hurst exponent:
//   model1  plane   H = 0.65        model3  curved  H = 0.65
//   model2  plane   H = 0.90        model4  curved  H = 0.90
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  cfg.model_id = name;
  cfg.h_s = 0.40;
  cfg.alpha = 2.0 * cfg.h_s - 1.0;
  cfg.alpha_from_hs = true;
  if (name == "model1") {
    cfg.surface.kind = SurfaceKind::plane;
    cfg.H = 0.65;
  } else if (name == "model2") {
    cfg.surface.kind = SurfaceKind::plane;
    cfg.H = 0.90;
  } else if (name == "model3") {
    cfg.surface.kind = SurfaceKind::curved;
    cfg.H = 0.65;
  } else if (name == "model4") {
    cfg.surface.kind = SurfaceKind::curved;
    cfg.H = 0.90;
  } else {
    throw std::invalid_argument("unknown preset '" + name +
                                "' (expected model1, model2, model3, or model4)");
  }
  return cfg;
}

}  // namespace gtwr
