#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "kernel_io.hpp"
#include "report.hpp"
#include "verify.hpp"

namespace kernelbound::cli {

enum ExitCode : int { exit_pass = 0, exit_failure = 1, exit_config = 2, exit_budget = 3 };

struct Invocation {
  std::string command;
  std::string config_path;
  std::string out_dir;  // empty: environment, then config
  int jobs = 0;         // 0: config
  std::optional<std::uint64_t> seed;
};

struct Context {
  Invocation inv;
  RunConfig cfg;
  std::string config_text;
  std::filesystem::path out;
  std::ostream& log;
  std::optional<BoundPipeline> pipeline;

  std::string config_fingerprint() const { return fingerprint(config_text); }

  const BoundPipeline& bound_pipeline() {
    if (!cfg.family) throw ConfigError("this step needs a polynomial or exponential family", 0, "family.kind");
    if (!pipeline)
      pipeline = make_bound_pipeline(*cfg.family, cfg.s, cfg.two_sided, cfg.overrides, cfg.certificate_grid);
    return *pipeline;
  }

  std::ofstream open(const std::string& name) const {
    std::filesystem::create_directories(out);
    std::ofstream os(out / name);
    if (!os) throw Error("cannot write " + (out / name).string());
    return os;
  }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void budget_guard(const RunConfig& cfg, const GridSpec& g) {
  const double unknowns = static_cast<double>(g.nodes()) * cfg.m();
  if (unknowns > cfg.budget)
    throw BudgetError(static_cast<std::size_t>(unknowns), static_cast<std::size_t>(cfg.budget));
}

inline void write_time_spec(std::ostream& os, const std::string& name, const TimeLyapunovSpec& nu) {
  os << name << ".profile = " << (nu.base.profile.form == Growth::polynomial ? "polynomial" : "exponential") << "\n";
  os << name << ".rho = " << fmt(nu.base.profile.rho) << "\n";
  os << name << ".eps_hat = " << fmt(nu.base.eps_hat) << "\n";
  if (!std::isnan(nu.base.lambda)) os << name << ".lambda = " << fmt(nu.base.lambda) << "\n";
  os << name << ".T = " << fmt(nu.T) << "\n";
  os << name << ".sigma = " << fmt(nu.sigma) << "\n";
  os << name << ".delta = " << fmt(nu.delta) << "\n";
  os << name << ".eps = " << fmt(nu.eps) << "\n";
  os << name << ".c0 = " << fmt(nu.c0) << "\n";
}

inline void write_ledger(std::ostream& os, const std::string& name, const ConstantsLedger& L) {
  os << name << ".window = " << fmt(L.window.a0) << ", " << fmt(L.window.a) << ", " << fmt(L.window.b) << ", "
     << fmt(L.window.b0) << "\n";
  os << name << ".s = " << fmt(L.s) << "\n";
  for (int i = 1; i <= kLedgerItems; ++i) os << name << ".c" << i << " = " << fmt(L(i)) << "\n";
  os << name << ".saturated = " << (L.saturated ? "true" : "false") << "\n";
}

}  // namespace detail

inline int cmd_check(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  std::vector<HypothesisReport> reports;
  if (cfg.family) {
    reports.push_back(check_base(*cfg.family));
    reports.push_back(check_family(*cfg.family));
  } else {
    reports.push_back(check_base(cfg.spec));
  }
  bool ok = true;
  auto os = ctx.open("hypotheses.txt");
  for (const auto& r : reports) {
    write_hypothesis_report(os, r);
    os << "\n";
    ok = ok && r.status != Status::fails;
    ctx.log << "check " << r.id << ": " << to_string(r.status);
    if (r.witness) ctx.log << " (first failing margin " << *r.witness << ")";
    ctx.log << "\n";
  }
  if (cfg.wants("csv")) {
    auto csv = ctx.open("margins.csv");
    csv << "report,group,margin,slack,strict,ok\n";
    for (const auto& r : reports)
      for (const auto& m : r.margins)
        csv << r.id << "," << m.group << "," << m.id << "," << detail::fmt(m.slack) << "," << m.strict << ","
            << m.ok() << "\n";
  }
  return ok ? exit_pass : exit_failure;
}

inline int cmd_synth(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const BoundPipeline& pl = ctx.bound_pipeline();
  auto os = ctx.open("certificates.txt");
  os << "schema_version = 1\nconfig_fingerprint = " << ctx.config_fingerprint() << "\n\n[forward]\n";
  detail::write_time_spec(os, "w", pl.forward.w);
  detail::write_time_spec(os, "nu1", pl.forward.nu1);
  detail::write_time_spec(os, "nu2", pl.forward.nu2);
  if (pl.adjoint) {
    os << "\n[adjoint]\n";
    detail::write_time_spec(os, "w", pl.adjoint->w);
    detail::write_time_spec(os, "nu1", pl.adjoint->nu1);
    detail::write_time_spec(os, "nu2", pl.adjoint->nu2);
  }
  std::vector<Window> windows;
  if (cfg.proportional_window)
    for (double tau : cfg.taus) windows.push_back(Window::around(tau));
  else
    windows.push_back(cfg.fixed_window);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const BoundCertificate cert = make_certificate(pl, windows[i], cfg.ledger);
    os << "\n[window " << i + 1 << "]\n";
    os << "mode = " << (cfg.proportional_window ? "proportional" : "fixed") << "\n";
    if (cfg.proportional_window) os << "tau = " << detail::fmt(cfg.taus[i]) << "\n";
    detail::write_ledger(os, "ledger", cert.ledger);
    os << "H.A = " << detail::fmt(cert.factors.A) << "\nH.B = " << detail::fmt(cert.factors.B) << "\n";
    os << "H(0) = " << detail::fmt(cert.H(Vec::Zero(cfg.d()))) << "\n";
    if (cert.ledger_star) {
      detail::write_ledger(os, "ledger_star", *cert.ledger_star);
      os << "H_star(0) = " << detail::fmt(cert.H_star(Vec::Zero(cfg.d()))) << "\n";
    }
    if (cfg.kind == FamilyKind::polynomial) {
      os << "lambda = " << detail::fmt(cert.lambda) << "\n";
      if (cert.ledger_star) os << "lambda_star = " << detail::fmt(cert.lambda_star) << "\n";
    } else {
      os << "c_hat = " << detail::fmt(cfg.c_hat) << "\n";
    }
  }
  ctx.log << "synth: wrote " << windows.size() << " certificate window(s) to " << (ctx.out / "certificates.txt").string()
          << "\n";
  return exit_pass;
}

inline int cmd_solve(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const GridSpec g = cfg.grid();
  detail::budget_guard(cfg, g);
  if (cfg.solve_sources.empty() || cfg.solve_times.empty()) {
    std::filesystem::create_directories(ctx.out / "kernels");
    ctx.log << "solve: nothing requested\n";
    return exit_pass;
  }
  const auto start = std::chrono::steady_clock::now();
  const auto op = assemble(cfg.spec, cfg.solve_variant, g, {static_cast<std::size_t>(cfg.budget)});
  std::vector<ColumnJob> jobs;
  for (const auto& y : cfg.solve_sources)
    for (int k : cfg.solve_components) jobs.push_back({g.node_of(y), k});
  const RunOptions run{cfg.theta, cfg.dt, cfg.solve_mollifier, ctx.inv.jobs > 0 ? ctx.inv.jobs : cfg.jobs};
  const auto cols = compute_columns(op, jobs, cfg.solve_times, run);
  const auto dir = ctx.out / "kernels";
  std::filesystem::create_directories(dir);
  std::size_t files = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (std::size_t t = 0; t < cols[j].size(); ++t) {
      const std::string stem = std::string("kernel_") + to_string(cfg.solve_variant) + "_s" + std::to_string(j / cfg.solve_components.size() + 1) +
                               "_k" + std::to_string(jobs[j].k + 1) + "_t" + std::to_string(t + 1);
      write_kernel_binary(cols[j][t], (dir / (stem + ".kbk")).string());
      if (cfg.solve_csv && cfg.wants("csv")) write_kernel_csv(cols[j][t], (dir / (stem + ".csv")).string());
      if (cfg.wants("svg")) {
        std::ofstream svg(dir / (stem + ".svg"));
        write_svg(svg, kernel_section_plot(cols[j][t], stem));
      }
      ++files;
      ctx.log << "solve: " << stem << " done\n";
    }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.log << "solve: " << files << " kernel field(s), " << g.nodes() * cfg.m() << " unknowns, " << std::fixed
          << std::setprecision(2) << secs << " s\n";
  ctx.log.unsetf(std::ios::fixed);
  return exit_pass;
}

inline std::vector<CheckResult> run_checks(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const GridSpec g = cfg.grid();
  detail::budget_guard(cfg, g);
  for (double R : cfg.radii) detail::budget_guard(cfg, {cfg.d(), R, cfg.h});
  const int jobs = ctx.inv.jobs > 0 ? ctx.inv.jobs : cfg.jobs;
  const std::uint64_t seed = ctx.inv.seed ? *ctx.inv.seed : cfg.seed.value_or(0);
  RunOptions run{cfg.theta, cfg.dt, 0.0, jobs};
  std::vector<CheckResult> out;
  auto M_of = [&] { return cfg.family ? check_base(*cfg.family).M : check_base(cfg.spec).M; };
  const auto& pts = cfg.verify_points;
  for (const auto& name : cfg.checks) {
    ctx.log << "verify: " << name << "\n";
    const std::size_t first = out.size();
    if (name == "domination") {
      DominationOptions o;
      o.tol = cfg.tolerance(name, o.tol);
      o.seed = seed;
      o.run = run;
      out.push_back(check_domination(cfg.spec, {g}, cfg.verify_times, pts, o));
    } else if (name == "monotone_in_R") {
      MonotoneOptions o;
      o.tol = cfg.tolerance(name, o.tol);
      o.shrink = 4.0;
      o.run = run;
      const double t = *std::max_element(cfg.verify_times.begin(), cfg.verify_times.end());
      out.push_back(check_monotone_in_R(cfg.spec, cfg.h, cfg.radii, t, pts, pts, o));
    } else if (name == "mass_and_positivity") {
      MassOptions o;
      o.mass_tol = cfg.tolerance(name, o.mass_tol);
      o.run = run;
      out.push_back(check_mass_and_positivity(cfg.spec, g, cfg.verify_times, pts, M_of(), o));
    } else if (name == "support") {
      if (!cfg.spec.coupled) throw ConfigError("support check needs a coupling pattern", 0, "verify.checks");
      SupportOptions o;
      o.run = run;
      for (int k = 0; k < cfg.m(); ++k) {
        auto r = check_support(cfg.spec, g, k, cfg.verify_times.front(), pts.front(), o);
        r.id += "[" + std::to_string(k + 1) + "]";
        out.push_back(std::move(r));
      }
    } else if (name == "duality") {
      DualityOptions o;
      o.tol = cfg.tolerance(name, o.tol);
      o.run.jobs = jobs;
      std::vector<std::pair<Vec, Vec>> pairs;
      for (std::size_t i = 0; i < pts.size(); ++i) pairs.push_back({pts[i], pts[(i + 1) % pts.size()]});
      out.push_back(check_duality(cfg.spec, g, cfg.verify_times.back(), pairs, o));
    } else if (name == "chapman_kolmogorov") {
      SemigroupOptions o;
      o.tol = cfg.tolerance(name, o.tol);
      o.seed = seed;
      o.run = run;
      out.push_back(check_chapman_kolmogorov(cfg.spec, Variant::P, g, cfg.verify_times.front(),
                                             cfg.verify_times.back(), o));
    } else if (name == "lyapunov_integrability") {
      IntegrabilityOptions o;
      o.tol = cfg.tolerance(name, o.tol);
      o.run = run;
      out.push_back(check_lyapunov_integrability(cfg.spec, ctx.bound_pipeline().forward.w, g, cfg.verify_times, pts, o));
    } else if (name == "weighted_bound") {
      WeightedBoundPlan plan;
      plan.taus = cfg.taus;
      plan.sources = cfg.weighted_sources;
      plan.training = cfg.weighted_train;
      plan.holdout = cfg.weighted_holdout;
      plan.tol = cfg.tolerance(name, plan.tol);
      plan.mollifier = cfg.weighted_mollifier;
      plan.holdout_ledger_divisor = cfg.ledger_divisor;
      plan.ledger = cfg.ledger;
      if (!cfg.proportional_window) plan.fixed_window = cfg.fixed_window;
      plan.run = run;
      detail::budget_guard(cfg, plan.training);
      for (const auto& hg : plan.holdout) detail::budget_guard(cfg, hg);
      const auto rep = check_weighted_bound(ctx.bound_pipeline(), plan);
      out.push_back(rep.one_sided);
      if (ctx.bound_pipeline().adjoint) out.push_back(rep.two_sided);
      if (cfg.wants("svg")) {
        SvgPlot plot{"weighted kernel ratio", "t", "sup ratio", true, {}};
        for (const auto& [grid, sup] : rep.sups)
          plot.series.push_back({"R=" + detail::fmt(grid.R) + " h=" + detail::fmt(grid.h), plan.taus, sup.per_time_one});
        auto svg = ctx.open("weighted_ratio.svg");
        write_svg(svg, plot);
      }
    } else if (name == "decay_shape") {
      DecayShapeOptions o;
      o.tol = cfg.tolerance(name, o.tol);
      o.run = run;
      out.push_back(check_decay_shape(cfg.spec, ctx.bound_pipeline().forward.w, g, cfg.decay_times, pts, o));
    }
    for (std::size_t i = first; i < out.size(); ++i)
      ctx.log << "verify: " << out[i].id << " " << to_string(out[i].status)
              << " (worst " << report_detail::num(out[i].worst) << ", tolerance " << out[i].tolerance << ")\n";
  }
  return out;
}

inline int cmd_verify(Context& ctx) {
  const auto results = run_checks(ctx);
  const std::string cfp = ctx.config_fingerprint();
  std::vector<CheckResult> stamped = results;
  for (auto& r : stamped) r.fingerprint = fingerprint(cfp + "|" + r.fingerprint);
  {
    auto os = ctx.open("summary.txt");
    write_summary(os, stamped, "verification summary", cfp);
    os << "\nKernels are box-truncated Dirichlet approximants; whole-space statements are checked through them.\n";
  }
  if (ctx.cfg.wants("csv")) {
    auto os = ctx.open("checks.csv");
    write_csv(os, stamped);
  }
  if (ctx.cfg.wants("svg") && !ctx.cfg.verify_points.empty()) {
    const GridSpec g = ctx.cfg.grid();
    const auto op = assemble(ctx.cfg.spec, Variant::P, g);
    const auto kf = kernel_column(op, g.node_of(ctx.cfg.verify_points.front()), 0, ctx.cfg.verify_times.back());
    auto svg = ctx.open("kernel_section.svg");
    write_svg(svg, kernel_section_plot(kf, "kernel section"));
  }
  bool ok = true;
  for (const auto& r : stamped) ok = ok && r.passed();
  ctx.log << "verify: " << (ok ? "all checks passed" : "some checks did not pass") << "\n";
  return ok ? exit_pass : exit_failure;
}

inline int dispatch(Context& ctx) {
  const std::string& c = ctx.inv.command;
  if (c == "check") return cmd_check(ctx);
  if (c == "synth") return cmd_synth(ctx);
  if (c == "solve") return cmd_solve(ctx);
  if (c == "verify") return cmd_verify(ctx);
  for (auto* step : {&cmd_check, &cmd_synth, &cmd_solve, &cmd_verify})
    if (int code = (*step)(ctx); code != exit_pass) return code;
  return exit_pass;
}

// Loads the configuration, applies command-line and environment overrides, runs the command.
inline int execute(const Invocation& inv, std::ostream& log, std::ostream& err) {
  try {
    std::string text;
    {
      std::ifstream is(inv.config_path);
      if (!is) throw ConfigError("cannot read config file " + inv.config_path);
      std::stringstream ss;
      ss << is.rdbuf();
      text = ss.str();
    }
    Context ctx{inv, build_config(RawConfig::parse(text)), text, {}, log, std::nullopt};
    if (!inv.out_dir.empty()) ctx.out = inv.out_dir;
    else if (const char* env = std::getenv("KERNELBOUND_OUT"); env && *env) ctx.out = env;
    else ctx.out = ctx.cfg.out_dir;
    const bool verifying = inv.command == "verify" || inv.command == "all";
    if (verifying && !inv.seed && !ctx.cfg.seed)
      for (const auto& c : ctx.cfg.checks)
        if (randomized_check(c)) throw ConfigError("check '" + c + "' is randomized and needs a seed", 0, "verify.seed");
    if (verifying && ctx.cfg.checks.empty()) throw ConfigError("no checks selected", 0, "verify.checks");
    return dispatch(ctx);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return exit_config;
  } catch (const BudgetError& e) {
    err << "resource limit: " << e.what() << "\n";
    return exit_budget;
  } catch (const SynthesisError& e) {
    err << "synthesis failed on constraint '" << e.constraint << "': " << e.what() << "\n";
    return exit_failure;
  } catch (const Error& e) {
    err << "failed: " << e.what() << "\n";
    return exit_failure;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return exit_failure;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Weighted kernel bounds for weakly coupled parabolic systems", "kernelbound"};
  app.require_subcommand(1, 1);
  Invocation inv;
  for (const char* name : {"check", "synth", "solve", "verify", "all"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", inv.config_path, "configuration file")->required();
    sub->add_option("--out", inv.out_dir, "output directory");
    sub->add_option("--jobs", inv.jobs, "parallel jobs")->check(CLI::PositiveNumber);
    sub->add_option("--seed", inv.seed, "random seed for randomized checks");
  }
  app.get_subcommand("check")->description("evaluate the parameter inequalities");
  app.get_subcommand("synth")->description("synthesize Lyapunov functions, ledgers and bound certificates");
  app.get_subcommand("solve")->description("compute and store kernel columns");
  app.get_subcommand("verify")->description("run the property checks");
  app.get_subcommand("all")->description("check, synth, solve and verify in sequence");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return exit_pass;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return exit_config;
  }
  inv.command = app.get_subcommands().front()->get_name();
  return execute(inv, log, err);
}

}  // namespace kernelbound::cli
