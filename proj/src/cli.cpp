#include "levisqueeze/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "levisqueeze/config.hpp"
#include "levisqueeze/experiments.hpp"
#include "levisqueeze/protocol.hpp"

namespace levisqueeze {

namespace {

// Raised when the protocol has no attracting fixed point.
struct DivergenceExit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string format;
  std::string out;
  std::string mode;
};

RunConfig load_config(const GlobalFlags& g, bool& given) {
  nlohmann::json root = nlohmann::json::object();
  given = !g.config.empty();
  if (given) {
    if (!std::filesystem::exists(g.config)) throw ConfigError("--config", "no such file: " + g.config);
    root = read_config_file(g.config);
    if (!root.is_object()) throw ConfigError("config", "expected a table at top level");
  }
  if (!g.mode.empty()) {
    if (root.contains("mode") && root["mode"] != g.mode) {
      throw ConfigError("mode", "--mode " + g.mode + " conflicts with the config file");
    }
    root["mode"] = g.mode;
    given = true;
  }
  RunConfig cfg = run_config_from_json(root);
  if (g.seed) cfg.output.seed = *g.seed;
  if (!g.format.empty()) cfg.output.format = g.format == "json" ? OutputFormat::Json : OutputFormat::Csv;
  if (!g.out.empty()) cfg.output.path = g.out;
  return cfg;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

nlohmann::json coeff_json(const DynamicsCoefficients& c) {
  return {{"a1", c.a1}, {"a2", c.a2}, {"d1", c.d1}, {"d2", c.d2}, {"b", c.b}, {"omega", c.omega}, {"m", c.m}};
}

SymMat2 default_initial(const RunConfig& cfg) {
  if (cfg.initial) return *cfg.initial;
  if (cfg.mode == UnitSystem::Natural) return SymMat2::diag(1.0, 1.0);
  // SI: the unmeasured thermal state at omega2.
  auto c = cfg.coefficients_at(cfg.omega2());
  c.b = 0.0;
  const auto m = build_matrices(c);
  return lyapunov_asymptote(m.a, m.d);
}

int cmd_coeffs(const RunConfig& cfg, bool as_json, std::ostream& out) {
  const double w[2] = {cfg.omega1(), cfg.omega2()};
  nlohmann::json j = nlohmann::json::object();
  j["mode"] = cfg.mode == UnitSystem::Natural ? "natural" : "si";
  for (int k = 0; k < 2; ++k) {
    const auto c = cfg.coefficients_at(w[k]);
    const std::string seg = k == 0 ? "omega1" : "omega2";
    j[seg] = coeff_json(c);
    if (cfg.mode == UnitSystem::SI) {
      const auto r = cfg.rates_at(w[k]);
      const auto b = noise_breakdown(cfg.effective_physical(), w[k], r);
      j[seg]["rates"] = {{"gamma", r.gamma}, {"lambda", r.lambda}, {"recoil", r.recoil}, {"nbar", r.mean_occupation}};
      j[seg]["d2_breakdown"] = {{"d2_gamma", b.d2_gamma},
                                {"d2_lambda", b.d2_lambda},
                                {"d2_lambda_vacuum", b.d2_lambda_vacuum},
                                {"d2_Lambda", b.d2_Lambda}};
    }
  }
  if (as_json) {
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << "mode " << j["mode"].get<std::string>() << "\n";
  out << "segment      a1            a2            d1            d2            b             omega         m\n";
  for (const char* seg : {"omega1", "omega2"}) {
    const auto& s = j[seg];
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %13s %13s %13s %13s %13s %13s %13s\n", seg, fmt(s["a1"]).c_str(),
                  fmt(s["a2"]).c_str(), fmt(s["d1"]).c_str(), fmt(s["d2"]).c_str(), fmt(s["b"]).c_str(),
                  fmt(s["omega"]).c_str(), fmt(s["m"]).c_str());
    out << line;
  }
  if (cfg.mode == UnitSystem::SI) {
    out << "d2 breakdown (SI):\n";
    for (const char* seg : {"omega1", "omega2"}) {
      const auto& b = j[seg]["d2_breakdown"];
      out << "  " << seg << "  gamma " << fmt(b["d2_gamma"]) << "  lambda " << fmt(b["d2_lambda"]) << "  Lambda "
          << fmt(b["d2_Lambda"]) << "  (vacuum " << fmt(b["d2_lambda_vacuum"]) << ")\n";
    }
  }
  return kExitOk;
}

struct PropagateFlags {
  double time{1.0};
  int samples{100};
  int segment{2};
  bool trajectory{false};
  double dt{1e-3};
};

int cmd_propagate(const RunConfig& cfg, const PropagateFlags& f, std::ostream& out) {
  if (!(f.time > 0.0)) throw ConfigError("--time", "must be positive");
  if (f.samples < 1) throw ConfigError("--samples", "must be >= 1");
  const double omega = f.segment == 1 ? cfg.omega1() : cfg.omega2();
  const auto c = cfg.coefficients_at(omega);
  const auto m = build_matrices(c);
  const SymMat2 s0 = default_initial(cfg);
  const RiccatiFlow flow(m.a, m.d, m.b);

  Dataset d;
  d.figure_id = "propagate";
  std::vector<double> t, xx, xp, pp, det;
  for (int k = 0; k <= f.samples; ++k) {
    const double tk = f.time * k / f.samples;
    const SymMat2 s = flow.propagate(s0, tk);
    t.push_back(tk);
    xx.push_back(s.xx);
    xp.push_back(s.xp);
    pp.push_back(s.pp);
    det.push_back(s.det());
  }
  d.add("time", t);
  d.add("sxx", xx);
  d.add("sxp", xp);
  d.add("spp", pp);
  d.add("det", det);
  d.metadata = {{"figure", "propagate"},        {"tool_version", kToolVersion},  {"seed", cfg.output.seed},
                {"coefficients", coeff_json(c)}, {"initial", {s0.xx, s0.xp, s0.pp}}, {"time", f.time},
                {"samples", f.samples}};
  const auto path = write_dataset(d, cfg.output.path, cfg.output.format);
  out << "wrote " << path << "\n";
  const SymMat2 last = flow.propagate(s0, f.time);
  out << "sigma(t=" << f.time << ") xx=" << fmt(last.xx) << " xp=" << fmt(last.xp) << " pp=" << fmt(last.pp) << "\n";

  if (f.trajectory) {
    const auto path_states = simulate_trajectory({Vec2{}, s0, 0.0}, m.a, m.d, m.b, f.time, f.dt, cfg.output.seed);
    const std::string name = "trajectory_" + spec_hash(d.metadata) + ".csv";
    const auto tpath = std::filesystem::path(cfg.output.path) / name;
    std::ofstream tout(tpath, std::ios::binary);
    if (!tout) throw std::runtime_error("cannot write " + tpath.string());
    write_trajectory_csv(tout, path_states, cfg.output.seed);
    out << "wrote " << tpath.string() << "\n";
  }
  return kExitOk;
}

int cmd_protocol(const RunConfig& cfg, int dense, std::ostream& out) {
  const auto c1 = cfg.coefficients_at(cfg.omega1());
  const auto c2 = cfg.coefficients_at(cfg.omega2());
  const auto sched = build_schedule(c1, c2, cfg.protocol.cycles);
  const bool measured = c1.b != 0.0 || c2.b != 0.0;
  const CycleMap map(c1, c2, sched, measured ? MapKind::Riccati : MapKind::Langevin);
  const SymMat2 s0 = default_initial(cfg);

  ProtocolRunOptions opts;
  opts.equilibration_time = cfg.protocol.equilibration_time;
  opts.dense_samples = dense;
  const auto trace = run_protocol(map, s0, opts);

  Dataset d;
  d.figure_id = "protocol";
  std::vector<double> t, cyc, xx, xp, pp;
  for (const auto& p : trace) {
    t.push_back(p.time);
    cyc.push_back(p.cycle);
    xx.push_back(p.cov.xx);
    xp.push_back(p.cov.xp);
    pp.push_back(p.cov.pp);
  }
  d.add("time", t);
  d.add("cycle", cyc);
  d.add("sxx", xx);
  d.add("sxp", xp);
  d.add("spp", pp);

  const double sg = ground_state_variance(cfg.omega2(), c2.m, c2.hbar());
  const SymMat2 eq = map.equilibrate(s0, cfg.protocol.equilibration_time);
  const double zeta0 = std::sqrt(eq.xx / sg);
  const auto asym = protocol_asymptote(map);
  d.metadata = {{"figure", "protocol"},
                {"tool_version", kToolVersion},
                {"seed", cfg.output.seed},
                {"kind", measured ? "riccati" : "langevin"},
                {"omega1", coeff_json(c1)},
                {"omega2", coeff_json(c2)},
                {"cycles", sched.cycles},
                {"period", sched.period()},
                {"sigma_g_xx", sg},
                {"zeta_initial", zeta0}};
  const auto* fixed = std::get_if<SymMat2>(&asym);
  if (fixed) {
    const double zeta = std::sqrt(fixed->xx / sg);
    d.metadata["asymptote"] = {{"xx", fixed->xx}, {"xp", fixed->xp}, {"pp", fixed->pp}};
    d.metadata["zeta_asymptotic"] = zeta;
    d.metadata["class"] = to_string(classify(zeta, zeta0));
  } else {
    d.metadata["asymptote"] = nullptr;
    d.metadata["spectral_radius"] = std::get<Divergent>(asym).spectral_radius;
  }
  const auto path = write_dataset(d, cfg.output.path, cfg.output.format);
  out << "wrote " << path << "\n";
  out << "final sxx=" << fmt(trace.back().cov.xx) << " spp=" << fmt(trace.back().cov.pp) << " after "
      << sched.cycles << " cycles\n";
  if (!fixed) {
    const auto& dv = std::get<Divergent>(asym);
    std::ostringstream msg;
    msg << "protocol diverges: spectral radius of the cycle map " << dv.spectral_radius << " >= 1";
    if (dv.xx_limit) msg << " (position variance settles at " << fmt(*dv.xx_limit) << ", momentum grows)";
    throw DivergenceExit(msg.str());
  }
  out << "asymptote sxx=" << fmt(fixed->xx) << " zeta=" << fmt(std::sqrt(fixed->xx / sg)) << " ("
      << to_string(classify(std::sqrt(fixed->xx / sg), zeta0)) << ")\n";
  return kExitOk;
}

int cmd_figure(const RunConfig& cfg, bool given, const std::string& id, std::ostream& out) {
  const auto& ids = figure_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
    throw ConfigError("figure", "unknown figure id '" + id + "'");
  }
  const Dataset d = run_figure(id, cfg, given, cfg.output.seed);
  const auto path = write_dataset(d, cfg.output.path, cfg.output.format);
  out << "wrote " << path << "\n" << summary_line(d) << "\n";
  return kExitOk;
}

struct SweepFlags {
  std::string variable;
  std::string grid;
  std::vector<std::string> fixed;
  std::string outputs{"X_xx,protocol_xx,zeta"};
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "not a number: '" + s + "'");
  }
}

// "lo:hi:n" (linear), "log:lo:hi:per_decade", or a comma list.
std::vector<double> parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() == 4 && parts[0] == "log") {
    return log_grid(parse_double(parts[1], "--grid"), parse_double(parts[2], "--grid"),
                    static_cast<std::size_t>(parse_double(parts[3], "--grid")));
  }
  if (parts.size() == 3) {
    const double n = parse_double(parts[2], "--grid");
    if (!(n >= 1.0)) throw ConfigError("--grid", "point count must be >= 1");
    return linear_grid(parse_double(parts[0], "--grid"), parse_double(parts[1], "--grid"), static_cast<std::size_t>(n));
  }
  std::vector<double> g;
  for (const auto& v : split(text, ',')) g.push_back(parse_double(v, "--grid"));
  return g;
}

int cmd_sweep(const RunConfig& cfg, const SweepFlags& f, std::ostream& out) {
  SweepSpec spec;
  spec.variable = f.variable;
  spec.mode = cfg.mode;
  spec.grid = parse_grid(f.grid);
  for (const auto& kv : f.fixed) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--fixed", "expected name=value, got '" + kv + "'");
    spec.fixed[kv.substr(0, eq)] = parse_double(kv.substr(eq + 1), "--fixed");
  }
  spec.outputs = split(f.outputs, ',');
  Dataset d = run_sweep(spec, cfg);
  d.metadata["seed"] = cfg.output.seed;
  const auto path = write_dataset(d, cfg.output.path, cfg.output.format);
  out << "wrote " << path << "\n" << summary_line(d) << "\n";
  return kExitOk;
}

bool is_usage_code(ErrorCode c) {
  return c == ErrorCode::InvalidParameters || c == ErrorCode::InvalidEfficiency || c == ErrorCode::Overdamped;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Covariance dynamics and squeezing protocols for a levitated particle", "levisqueeze"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GlobalFlags g;
  app.add_option("--config", g.config, "TOML or JSON run configuration");
  app.add_option("--seed", g.seed, "seed recorded in outputs and used by stochastic runs");
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--out", g.out, "output directory");
  app.add_option("--mode", g.mode, "unit system")->check(CLI::IsMember({"natural", "si"}));

  bool as_json = false;
  auto* coeffs = app.add_subcommand("coeffs", "print drift, diffusion and backaction coefficients");
  coeffs->add_flag("--json", as_json, "machine-readable output");

  PropagateFlags pf;
  auto* propagate = app.add_subcommand("propagate", "propagate the covariance at one trap frequency");
  propagate->add_option("--time", pf.time, "final time");
  propagate->add_option("--samples", pf.samples, "number of output intervals");
  propagate->add_option("--segment", pf.segment, "1: omega1, 2: omega2")->check(CLI::IsMember({1, 2}));
  propagate->add_flag("--trajectory", pf.trajectory, "also sample one conditional-mean trajectory");
  propagate->add_option("--dt", pf.dt, "trajectory step");

  int dense = 0;
  auto* protocol = app.add_subcommand("protocol", "equilibrate at omega2, then run the switching protocol");
  protocol->add_option("--dense", dense, "extra samples inside each cycle");

  std::string figure_id;
  auto* figure = app.add_subcommand("figure", "reproduce a figure dataset");
  figure->add_option("id", figure_id, "fig2 fig3a fig3b fig3c fig4a fig4b scenario")->required();

  SweepFlags sf;
  auto* sweep = app.add_subcommand("sweep", "evaluate observables over a parameter grid");
  sweep->add_option("--var", sf.variable, "swept variable")->required();
  sweep->add_option("--grid", sf.grid, "lo:hi:n, log:lo:hi:per_decade or a comma list")->required();
  sweep->add_option("--fixed", sf.fixed, "name=value pairs held fixed");
  sweep->add_option("--outputs", sf.outputs, "comma-separated observables");

  for (auto* sub : {coeffs, propagate, protocol, figure, sweep}) sub->fallthrough();

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    bool given = false;
    const RunConfig cfg = load_config(g, given);
    if (*coeffs) return cmd_coeffs(cfg, as_json, out);
    if (*propagate) return cmd_propagate(cfg, pf, out);
    if (*protocol) return cmd_protocol(cfg, dense, out);
    if (*figure) return cmd_figure(cfg, given, figure_id, out);
    if (*sweep) return cmd_sweep(cfg, sf, out);
  } catch (const ConfigError& e) {
    err << "config error [" << e.key() << "]: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceExit& e) {
    err << "divergent: " << e.what() << "\n";
    return kExitDivergent;
  } catch (const NumericalError& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return is_usage_code(e.code()) ? kExitUsage : kExitInternal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace levisqueeze
