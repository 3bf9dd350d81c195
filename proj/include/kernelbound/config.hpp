#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bounds.hpp"
#include "family.hpp"
#include "grid.hpp"
#include "lyapunov.hpp"

namespace kernelbound {

// Sectioned key = value text. '#' starts a comment; keys before the first [section] are top-level.
struct ConfigEntry {
  std::string value;
  int line = 0;
};

class RawConfig {
 public:
  static RawConfig parse(const std::string& text) {
    RawConfig c;
    std::istringstream is(text);
    std::string line, section;
    int no = 0;
    while (std::getline(is, line)) {
      ++no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header", no);
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError("empty section name", no);
        if (!c.section_lines_.emplace(section, no).second) throw ConfigError("section appears twice", no, section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value", no);
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("missing key", no);
      const std::string full = section.empty() ? key : section + "." + key;
      if (!c.entries_.emplace(full, ConfigEntry{trim(line.substr(eq + 1)), no}).second)
        throw ConfigError("key given twice", no, full);
    }
    return c;
  }

  static RawConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

  bool has_section(const std::string& s) const { return section_lines_.count(s) > 0; }
  int section_line(const std::string& s) const {
    auto it = section_lines_.find(s);
    return it == section_lines_.end() ? 0 : it->second;
  }

  const ConfigEntry* find(const std::string& key) const {
    used_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const ConfigEntry& require(const std::string& key) const {
    if (const auto* e = find(key)) return *e;
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? std::string() : key.substr(0, dot);
    throw ConfigError("missing required key", section_line(sec), key);
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto* e = find(key);
    return e ? e->value : fallback;
  }

  double num(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    const auto* e = find(key);
    if (!e) {
      if (fallback) return *fallback;
      require(key);
    }
    return to_number(e->value, e->line, key);
  }

  std::optional<double> opt_num(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    return to_number(e->value, e->line, key);
  }

  int integer(const std::string& key, std::optional<int> fallback = std::nullopt) const {
    const double v = num(key, fallback ? std::optional<double>(*fallback) : std::nullopt);
    if (v != std::floor(v)) throw ConfigError("expected an integer", find(key)->line, key);
    return static_cast<int>(v);
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    std::vector<double> out;
    for (const auto& tok : split(e->value, ',')) out.push_back(to_number(tok, e->line, key));
    return out;
  }

  std::vector<std::string> words(const std::string& key, std::vector<std::string> fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    std::vector<std::string> out;
    for (const auto& tok : split(e->value, ','))
      if (!tok.empty()) out.push_back(tok);
    return out;
  }

  // Rows separated by ';', entries by ','.
  Mat matrix(const ConfigEntry& e, const std::string& key, int rows, int cols) const {
    const auto rs = split(e.value, ';');
    if (static_cast<int>(rs.size()) != rows) throw ConfigError("expected " + std::to_string(rows) + " rows", e.line, key);
    Mat out(rows, cols);
    for (int i = 0; i < rows; ++i) {
      const auto cs = split(rs[i], ',');
      if (static_cast<int>(cs.size()) != cols)
        throw ConfigError("expected " + std::to_string(cols) + " entries per row", e.line, key);
      for (int j = 0; j < cols; ++j) out(i, j) = to_number(cs[j], e.line, key);
    }
    return out;
  }

  std::vector<Vec> points(const std::string& key, int d, std::vector<Vec> fallback) const {
    const auto* e = find(key);
    if (!e) return fallback;
    std::vector<Vec> out;
    if (trim(e->value).empty()) return out;
    for (const auto& row : split(e->value, ';')) {
      const auto cs = split(row, ',');
      if (static_cast<int>(cs.size()) != d) throw ConfigError("point needs " + std::to_string(d) + " coordinates", e->line, key);
      Vec p(d);
      for (int j = 0; j < d; ++j) p[j] = to_number(cs[j], e->line, key);
      out.push_back(p);
    }
    return out;
  }

  // Keys present in the file that nothing asked for; typos surface here.
  std::vector<std::pair<std::string, int>> unused() const {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& [k, e] : entries_)
      if (!used_.count(k)) out.push_back({k, e.line});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    return out;
  }

  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
  }

  static double to_number(const std::string& s, int line, const std::string& key) {
    const std::string t = trim(s);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ConfigError("expected a number, got '" + t + "'", line, key);
    }
    if (used != t.size() || !std::isfinite(v)) throw ConfigError("expected a number, got '" + t + "'", line, key);
    return v;
  }

 private:
  std::map<std::string, ConfigEntry> entries_;
  std::map<std::string, int> section_lines_;
  mutable std::set<std::string> used_;
};

enum class FamilyKind { polynomial, exponential, constant };

struct RunConfig {
  int schema_version = 1;

  FamilyKind kind = FamilyKind::polynomial;
  std::optional<FamilyParams> family;
  OperatorSpec spec;

  std::vector<double> radii{8.0};
  double h = 1.0 / 32;
  double dt = 0.0;
  double theta = 1.0;
  double budget = 4e6;

  SynthOverrides overrides;
  VerifyGridSpec certificate_grid;

  double s = 4.0;
  bool proportional_window = true;
  Window fixed_window;
  std::vector<double> taus{0.1, 0.2, 0.3, 0.4};
  double c_hat = 0.0;
  bool two_sided = true;
  LedgerSampling ledger;

  Variant solve_variant = Variant::P;
  std::vector<Vec> solve_sources;
  std::vector<int> solve_components;
  std::vector<double> solve_times{0.5};
  double solve_mollifier = 0.0;
  bool solve_csv = true;

  std::vector<std::string> checks;
  std::optional<std::uint64_t> seed;
  std::map<std::string, double> tol;
  std::vector<double> verify_times{0.1, 0.5, 1.0};
  std::vector<Vec> verify_points;
  std::vector<double> decay_times{0.25, 0.5};
  GridSpec weighted_train{1, 8.0, 1.0 / 32};
  std::vector<GridSpec> weighted_holdout;
  std::vector<Vec> weighted_sources;
  double weighted_mollifier = 1.0 / 16;
  double ledger_divisor = 1.0;
  int jobs = 1;

  std::string out_dir = "kernelbound-out";
  std::vector<std::string> formats{"text", "csv"};

  int d() const { return spec.dims.d; }
  int m() const { return spec.dims.m; }
  GridSpec grid() const { return {d(), radii.front(), h}; }
  bool wants(const std::string& f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
  double tolerance(const std::string& check, double fallback) const {
    auto it = tol.find(check);
    return it == tol.end() ? fallback : it->second;
  }
};

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"domination",   "monotone_in_R",          "mass_and_positivity",
                                              "support",      "duality",                "chapman_kolmogorov",
                                              "lyapunov_integrability", "weighted_bound", "decay_shape"};
  return names;
}

inline bool randomized_check(const std::string& c) { return c == "domination" || c == "chapman_kolmogorov"; }

namespace config_detail {

inline void read_family(const RawConfig& c, RunConfig& rc) {
  if (!c.has_section("family")) throw ConfigError("missing [family] section");
  const auto& kind_e = c.require("family.kind");
  const std::string kind = kind_e.value;
  const int d = c.integer("family.d");
  if (d < 1 || d > 2) throw ConfigError("d must be 1 or 2", c.find("family.d")->line, "family.d");
  if (kind == "constant") {
    rc.kind = FamilyKind::constant;
    const auto& ve = c.require("family.V");
    const auto rows = RawConfig::split(ve.value, ';');
    const int m = static_cast<int>(rows.size());
    rc.spec = constant_system(d, c.matrix(ve, "family.V", m, m), c.str("family.label", "constant"));
    return;
  }
  if (kind == "polynomial") rc.kind = FamilyKind::polynomial;
  else if (kind == "exponential") rc.kind = FamilyKind::exponential;
  else throw ConfigError("family kind must be polynomial, exponential or constant", kind_e.line, "family.kind");
  const int m = c.integer("family.m");
  if (m < 1) throw ConfigError("m must be positive", c.find("family.m")->line, "family.m");
  FamilyParams p;
  p.growth = rc.kind == FamilyKind::polynomial ? Growth::polynomial : Growth::exponential;
  p.dims = {d, m};
  auto per_k = [&](const std::string& name, int rows, int cols) {
    std::vector<Mat> out;
    const auto& base = c.require("family." + name);
    const Mat shared = c.matrix(base, "family." + name, rows, cols);
    for (int k = 1; k <= m; ++k) {
      const std::string key = "family." + name + "." + std::to_string(k);
      const auto* e = c.find(key);
      out.push_back(e ? c.matrix(*e, key, rows, cols) : shared);
    }
    return out;
  };
  p.zeta = per_k("zeta", d, d);
  p.alpha = per_k("alpha", d, d);
  for (const auto& e : per_k("eta", 1, d)) p.eta.push_back(e.row(0).transpose());
  for (const auto& b : per_k("beta", 1, d)) p.beta.push_back(b.row(0).transpose());
  p.theta = c.matrix(c.require("family.theta"), "family.theta", m, m);
  p.gamma = c.matrix(c.require("family.gamma"), "family.gamma", m, m);
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what(), c.section_line("family"), "family");
  }
  rc.family = p;
  rc.spec = to_operator(p);
  rc.spec.label = c.str("family.label", kind);
}

inline GridSpec parse_grid_pair(const RawConfig& c, const std::string& key, const std::string& text, int d) {
  const auto* e = c.find(key);
  const auto cs = RawConfig::split(text, ',');
  if (cs.size() != 2) throw ConfigError("grid is written as R, h", e ? e->line : 0, key);
  GridSpec g{d, RawConfig::to_number(cs[0], e ? e->line : 0, key), RawConfig::to_number(cs[1], e ? e->line : 0, key)};
  try {
    g.validate();
  } catch (const Error& err) {
    throw ConfigError(err.what(), e ? e->line : 0, key);
  }
  return g;
}

}  // namespace config_detail

inline RunConfig build_config(const RawConfig& c) {
  RunConfig rc;
  const auto& sv = c.require("schema_version");
  if (RawConfig::to_number(sv.value, sv.line, "schema_version") != 1)
    throw ConfigError("unsupported schema_version (this build reads version 1)", sv.line, "schema_version");
  config_detail::read_family(c, rc);
  const int d = rc.d();

  rc.radii = c.list("grid.R", {8.0});
  if (rc.radii.empty()) throw ConfigError("grid.R needs at least one radius", 0, "grid.R");
  rc.h = c.num("grid.h", 1.0 / 32);
  rc.dt = c.num("grid.dt", 0.0);
  rc.theta = c.num("grid.theta", 1.0);
  rc.budget = c.num("grid.budget", 4e6);
  for (double R : rc.radii) {
    try {
      GridSpec{d, R, rc.h}.validate();
    } catch (const Error& e) {
      const auto* en = c.find("grid.R");
      throw ConfigError(e.what(), en ? en->line : c.section_line("grid"), "grid.R");
    }
  }
  if (!(rc.theta >= 0.5 && rc.theta <= 1.0))
    throw ConfigError("theta must lie in [1/2, 1]", c.find("grid.theta")->line, "grid.theta");

  rc.overrides.T = c.num("lyapunov.T", 1.0);
  rc.overrides.rho = c.opt_num("lyapunov.rho");
  rc.overrides.eps_hat = c.opt_num("lyapunov.eps_hat");
  rc.overrides.sigma = c.opt_num("lyapunov.sigma");
  rc.overrides.delta = c.opt_num("lyapunov.delta");
  const double default_radius = rc.kind == FamilyKind::exponential ? 10.0 : 20.0;
  rc.certificate_grid.R = c.num("lyapunov.verify_radius", default_radius);
  rc.certificate_grid.points = c.integer("lyapunov.verify_points", 400);
  rc.certificate_grid.tol = c.num("lyapunov.verify_tol", 0.01);

  rc.s = c.num("bounds.s", 4.0);
  if (!(rc.s > d + 2)) {
    const auto* e = c.find("bounds.s");
    throw ConfigError("s must exceed d + 2", e ? e->line : c.section_line("bounds"), "bounds.s");
  }
  const auto* wm = c.find("bounds.window");
  const std::string mode = wm ? wm->value : "proportional";
  if (mode == "proportional") {
    rc.proportional_window = true;
  } else if (mode == "fixed") {
    rc.proportional_window = false;
    const auto w = c.list("bounds.window.fixed", {});
    if (w.size() != 4) throw ConfigError("fixed window needs a0, a, b, b0", wm->line, "bounds.window.fixed");
    rc.fixed_window = {w[0], w[1], w[2], w[3]};
    try {
      rc.fixed_window.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what(), wm->line, "bounds.window.fixed");
    }
  } else {
    throw ConfigError("window must be proportional or fixed", wm->line, "bounds.window");
  }
  rc.taus = c.list("bounds.taus", rc.taus);
  rc.c_hat = c.num("bounds.c_hat", ExpBound::default_c_hat(d));
  rc.two_sided = c.str("bounds.two_sided", "true") == "true";
  rc.ledger.times = c.integer("bounds.ledger.times", rc.ledger.times);
  rc.ledger.radius = c.num("bounds.ledger.radius", rc.ledger.radius);
  rc.ledger.points = c.integer("bounds.ledger.points", rc.ledger.points);

  const std::string variant = c.str("solve.variant", "P");
  if (variant == "plain") rc.solve_variant = Variant::plain;
  else if (variant == "P") rc.solve_variant = Variant::P;
  else if (variant == "P_adjoint") rc.solve_variant = Variant::P_adjoint;
  else throw ConfigError("variant must be plain, P or P_adjoint", c.find("solve.variant")->line, "solve.variant");
  rc.solve_sources = c.points("solve.sources", d, {Vec::Zero(d)});
  for (double k : c.list("solve.components", {})) {
    if (k < 1 || k > rc.m() || k != std::floor(k))
      throw ConfigError("component out of range", c.find("solve.components")->line, "solve.components");
    rc.solve_components.push_back(static_cast<int>(k) - 1);
  }
  if (rc.solve_components.empty())
    for (int k = 0; k < rc.m(); ++k) rc.solve_components.push_back(k);
  rc.solve_times = c.list("solve.times", rc.solve_times);
  rc.solve_mollifier = c.num("solve.mollifier", 0.0);
  rc.solve_csv = c.str("solve.csv", "true") == "true";

  rc.checks = c.words("verify.checks", {});
  for (const auto& ch : rc.checks)
    if (std::find(known_checks().begin(), known_checks().end(), ch) == known_checks().end())
      throw ConfigError("unknown check '" + ch + "'", c.find("verify.checks")->line, "verify.checks");
  if (const auto s = c.opt_num("verify.seed")) rc.seed = static_cast<std::uint64_t>(*s);
  for (const auto& ch : known_checks())
    if (const auto t = c.opt_num("verify.tol." + ch)) rc.tol[ch] = *t;
  rc.verify_times = c.list("verify.times", rc.verify_times);
  rc.verify_points = c.points("verify.points", d, {Vec::Zero(d)});
  rc.decay_times = c.list("verify.decay_times", rc.decay_times);
  if (const auto* e = c.find("verify.weighted.train"))
    rc.weighted_train = config_detail::parse_grid_pair(c, "verify.weighted.train", e->value, d);
  else
    rc.weighted_train = {d, 8.0, 1.0 / 32};
  if (const auto* e = c.find("verify.weighted.holdout")) {
    for (const auto& g : RawConfig::split(e->value, ';'))
      rc.weighted_holdout.push_back(config_detail::parse_grid_pair(c, "verify.weighted.holdout", g, d));
  } else {
    rc.weighted_holdout = {{d, 8.0, 1.0 / 64}, {d, 16.0, 1.0 / 32}, {d, 16.0, 1.0 / 64}};
  }
  rc.weighted_sources = c.points("verify.weighted.sources", d, {Vec::Zero(d)});
  rc.weighted_mollifier = c.num("verify.weighted.mollifier", rc.weighted_mollifier);
  rc.ledger_divisor = c.num("verify.perturb.ledger_divisor", 1.0);
  rc.jobs = c.integer("verify.jobs", 1);

  rc.out_dir = c.str("output.dir", rc.out_dir);
  rc.formats = c.words("output.formats", rc.formats);
  for (const auto& f : rc.formats)
    if (f != "text" && f != "csv" && f != "svg")
      throw ConfigError("unknown output format '" + f + "'", c.find("output.formats")->line, "output.formats");

  for (const auto& [key, line] : c.unused()) throw ConfigError("unknown key", line, key);
  return rc;
}

inline RunConfig load_config(const std::string& path) { return build_config(RawConfig::load(path)); }

}  // namespace kernelbound
