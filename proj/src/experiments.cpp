#include "levisqueeze/experiments.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "levisqueeze/parallel.hpp"

namespace levisqueeze {

using constants::kHbar;
using constants::kPi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json sym_json(const SymMat2& s) { return {{"xx", json_number(s.xx)}, {"xp", json_number(s.xp)}, {"pp", json_number(s.pp)}}; }

// Position and momentum entries of a protocol asymptote; a divergent map
// reports pp = inf and, when it exists, the settled position variance.
struct AsymptoteEntries {
  double xx{kInf};
  double pp{kInf};
  bool divergent{false};
};

AsymptoteEntries entries_of(const AsymptoteResult& r) {
  AsymptoteEntries e;
  if (const auto* s = std::get_if<SymMat2>(&r)) {
    e.xx = s->xx;
    e.pp = s->pp;
  } else {
    const auto& d = std::get<Divergent>(r);
    e.divergent = true;
    e.xx = d.xx_limit.value_or(kInf);
  }
  return e;
}

AsymptoteEntries safe_asymptote(const CycleMap& map) {
  try {
    return entries_of(protocol_asymptote(map));
  } catch (const NumericalError&) {
    return {kNaN, kNaN, false};
  }
}

nlohmann::json base_metadata(const std::string& id) {
  return {{"figure", id}, {"tool_version", kToolVersion}, {"seed", 0}};
}

std::string column_tag(double recoil, double eta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "Lambda%g_eta%g", recoil, eta);
  std::string s(buf);
  for (auto& c : s) {
    if (c == '+') c = 'p';
  }
  return s;
}

}  // namespace

void Dataset::add(const std::string& name, std::vector<double> values) {
  names.push_back(name);
  columns.push_back(std::move(values));
}

const std::vector<double>& Dataset::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return columns[i];
  }
  throw NumericalError(ErrorCode::InvalidParameters, "no column named " + name);
}

std::size_t Dataset::rows() const { return columns.empty() ? 0 : columns.front().size(); }

void Dataset::validate() const {
  for (const auto& c : columns) {
    if (c.size() != rows()) throw NumericalError(ErrorCode::InvalidParameters, "columns differ in length");
  }
}

std::string to_csv(const Dataset& d) {
  d.validate();
  std::string out;
  for (std::size_t i = 0; i < d.names.size(); ++i) {
    if (i) out += ',';
    out += d.names[i];
  }
  out += "\r\n";
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.columns.size(); ++c) {
      if (c) out += ',';
      out += format_number(d.columns[c][r]);
    }
    out += "\r\n";
  }
  return out;
}

std::string to_json_text(const Dataset& d) {
  d.validate();
  nlohmann::json cols = nlohmann::json::object();
  for (std::size_t c = 0; c < d.columns.size(); ++c) {
    nlohmann::json arr = nlohmann::json::array();
    for (double v : d.columns[c]) arr.push_back(json_number(v));
    cols[d.names[c]] = std::move(arr);
  }
  nlohmann::json j = {{"figure", d.figure_id}, {"column_order", d.names}, {"columns", cols}, {"metadata", d.metadata}};
  return j.dump(2) + "\n";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string spec_hash(const nlohmann::json& spec) { return sha256_hex(spec.dump()).substr(0, 16); }

std::string write_dataset(const Dataset& d, const std::string& dir, OutputFormat format) {
  std::filesystem::create_directories(dir);
  const std::string ext = format == OutputFormat::Csv ? ".csv" : ".json";
  const auto path = std::filesystem::path(dir) / (d.figure_id + "_" + spec_hash(d.metadata) + ext);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (format == OutputFormat::Csv ? to_csv(d) : to_json_text(d));
  return path.string();
}

std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

std::vector<double> log_grid(double lo, double hi, std::size_t per_decade) {
  const double decades = std::log10(hi / lo);
  const auto n = static_cast<std::size_t>(std::llround(decades * static_cast<double>(per_decade))) + 1;
  std::vector<double> g(n);
  const double l0 = std::log10(lo);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = std::pow(10.0, l0 + decades * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

void SweepSpec::validate() const {
  if (grid.empty()) throw NumericalError(ErrorCode::InvalidParameters, "sweep grid is empty");
  if (grid.size() > 1) {
    const bool up = grid[1] > grid[0];
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (up ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1])) {
        throw NumericalError(ErrorCode::InvalidParameters, "sweep grid is not strictly monotone");
      }
    }
  }
  if (fixed.count(variable)) throw NumericalError(ErrorCode::InvalidParameters, "swept variable is also fixed");
  if (outputs.empty()) throw NumericalError(ErrorCode::InvalidParameters, "sweep has no outputs");
}

// ---------------------------------------------------------------- sweeps

namespace {

void set_natural(RunConfig& cfg, const std::string& name, double v) {
  RawCoefficients& r = *cfg.raw;
  if (name == "a1") r.a1 = v;
  else if (name == "a2") r.a2 = v;
  else if (name == "d1") r.d1 = v;
  else if (name == "d2") r.d2 = v;
  else if (name == "m") r.m = v;
  else if (name == "b") cfg.measurement.b = v;
  else if (name == "omega1") cfg.protocol.omega1 = v;
  else if (name == "omega2") cfg.protocol.omega2 = v;
  else throw NumericalError(ErrorCode::InvalidParameters, "unknown natural-mode sweep variable " + name);
}

void set_si(RunConfig& cfg, const std::string& name, double v) {
  PhysicalParams& p = *cfg.physical;
  if (name == "Q") {
    cfg.rates.gamma = p.omega1 / v;
    cfg.rates.lambda = p.omega1 / v;
  } else if (name == "gamma") {
    cfg.rates.gamma = v;
  } else if (name == "lambda") {
    cfg.rates.lambda = v;
  } else if (name == "recoil") {
    cfg.rates.recoil = v;
  } else if (name == "eta") {
    cfg.measurement.eta = v;
  } else if (name == "pressure") {
    p.pressure = v;
  } else if (name == "mass") {
    p.mass = v;
  } else if (name == "omega1") {
    p.omega1 = v;
  } else if (name == "omega2") {
    p.omega2 = v;
  } else {
    throw NumericalError(ErrorCode::InvalidParameters, "unknown si-mode sweep variable " + name);
  }
}

const std::vector<std::string>& sweep_outputs() {
  static const std::vector<std::string> k{"X_xx",  "X_pp",           "riccati_xx", "riccati_pp", "protocol_xx",
                                          "protocol_pp", "zeta", "zeta_one_cycle", "sr_xx", "sr_pp",
                                          "sr_xp", "spectral_radius"};
  return k;
}

std::map<std::string, double> evaluate_point(const RunConfig& cfg, const std::vector<std::string>& outputs) {
  std::map<std::string, double> out;
  for (const auto& o : outputs) out[o] = kNaN;
  try {
    const auto c1 = cfg.coefficients_at(cfg.omega1());
    const auto c2 = cfg.coefficients_at(cfg.omega2());
    const auto m2 = build_matrices(c2);
    const auto sched = build_schedule(c1, c2, 0);
    const bool measured = c1.b != 0.0 || c2.b != 0.0;
    const CycleMap map(c1, c2, sched, measured ? MapKind::Riccati : MapKind::Langevin);
    const double sg = ground_state_variance(cfg.omega2(), c2.m, c2.hbar());

    auto want = [&](const char* k) { return out.count(k) > 0; };
    SymMat2 x{kNaN, kNaN, kNaN};
    try {
      x = lyapunov_asymptote(m2.a, m2.d);
    } catch (const NumericalError&) {
    }
    out["X_xx"] = x.xx;
    out["X_pp"] = x.pp;
    if (want("riccati_xx") || want("riccati_pp")) {
      try {
        const auto r = riccati_asymptote(m2.a, m2.d, m2.b);
        out["riccati_xx"] = r.xx;
        out["riccati_pp"] = r.pp;
      } catch (const NumericalError&) {
      }
    }
    if (want("protocol_xx") || want("protocol_pp") || want("zeta")) {
      const auto e = safe_asymptote(map);
      out["protocol_xx"] = e.xx;
      out["protocol_pp"] = e.pp;
      out["zeta"] = std::sqrt(e.xx / sg);
    }
    if (want("zeta_one_cycle")) {
      try {
        out["zeta_one_cycle"] = std::sqrt(map.apply(map.second_asymptote()).xx / sg);
      } catch (const NumericalError&) {
      }
    }
    if (want("sr_xx") || want("sr_pp") || want("sr_xp")) {
      const auto r = squeeze_rates(c1, c2, sched, x);
      out["sr_xx"] = r.sr_xx;
      out["sr_pp"] = r.sr_pp;
      out["sr_xp"] = r.sr_xp;
    }
    out["spectral_radius"] = spectral_radius(map.f());
  } catch (const NumericalError&) {
  }
  std::map<std::string, double> picked;
  for (const auto& o : outputs) picked[o] = out[o];
  return picked;
}

}  // namespace

Dataset run_sweep(const SweepSpec& spec, const RunConfig& base) {
  spec.validate();
  for (const auto& o : spec.outputs) {
    const auto& known = sweep_outputs();
    if (std::find(known.begin(), known.end(), o) == known.end()) {
      throw NumericalError(ErrorCode::InvalidParameters, "unknown sweep output " + o);
    }
  }
  if (spec.mode != base.mode) throw NumericalError(ErrorCode::InvalidParameters, "sweep mode differs from config mode");

  RunConfig fixed_cfg = base;
  auto setter = spec.mode == UnitSystem::Natural ? set_natural : set_si;
  if (spec.mode == UnitSystem::Natural && !fixed_cfg.raw) fixed_cfg.raw = RawCoefficients{};
  if (spec.mode == UnitSystem::SI && !fixed_cfg.physical) fixed_cfg.physical = PhysicalParams{};
  for (const auto& [k, v] : spec.fixed) setter(fixed_cfg, k, v);
  setter(fixed_cfg, spec.variable, spec.grid.front());  // rejects unknown names early

  const auto rows = parallel_map(spec.grid.size(), [&](std::size_t i) {
    RunConfig cfg = fixed_cfg;
    setter(cfg, spec.variable, spec.grid[i]);
    return evaluate_point(cfg, spec.outputs);
  });

  Dataset d;
  d.figure_id = "sweep_" + spec.variable;
  d.add(spec.variable, spec.grid);
  for (const auto& o : spec.outputs) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r.at(o));
    d.add(o, std::move(col));
  }
  d.metadata = base_metadata(d.figure_id);
  d.metadata["mode"] = spec.mode == UnitSystem::Natural ? "natural" : "si";
  d.metadata["fixed"] = spec.fixed;
  d.metadata["summary"] = "sweep over " + spec.variable + " with " + std::to_string(spec.grid.size()) + " points";
  return d;
}

// ---------------------------------------------------------------- fig 2

namespace {

struct Fig2Coeffs {
  DynamicsCoefficients c1;
  DynamicsCoefficients c2;
};

Fig2Coeffs fig2_coeffs(const Fig2Options& o, double a1, double b) {
  return {natural_coefficients(a1, o.a2, o.d1, o.d2, b, o.omega1, o.m),
          natural_coefficients(a1, o.a2, o.d1, o.d2, b, o.omega2, o.m)};
}

double leading_rate(const Fig2Options& o, double a1) {
  const auto c = fig2_coeffs(o, a1, 0.0);
  return momentum_rate_leading(c.c1, build_schedule(c.c1, c.c2, 0));
}

}  // namespace

double fig2_root(const Fig2Options& o) {
  // Bracket on the grid, then bisect.
  const auto& g = o.a1_grid;
  for (std::size_t i = 1; i < g.size(); ++i) {
    double lo = g[i - 1];
    double hi = g[i];
    double flo = leading_rate(o, lo);
    const double fhi = leading_rate(o, hi);
    if (flo == 0.0) return lo;
    if ((flo > 0.0) == (fhi > 0.0)) continue;
    while (hi - lo > 0.01 * o.root_tolerance) {
      const double mid = 0.5 * (lo + hi);
      const double fm = leading_rate(o, mid);
      if ((fm > 0.0) == (flo > 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }
  throw NumericalError(ErrorCode::NonConverged, "momentum rate does not change sign on the a1 grid");
}

Dataset fig2_threshold(const Fig2Options& o) {
  struct Row {
    double sr_pp_leading{}, sr_xx{}, sr_pp{}, sr_xp{}, rho{}, pp_langevin{}, pp_riccati{};
    bool sign_ok{true};
  };
  const auto rows = parallel_map(o.a1_grid.size(), [&](std::size_t i) {
    Row r;
    const double a1 = o.a1_grid[i];
    const auto free = fig2_coeffs(o, a1, 0.0);
    const auto meas = fig2_coeffs(o, a1, o.b);
    const auto sched = build_schedule(free.c1, free.c2, 0);
    r.sr_pp_leading = momentum_rate_leading(free.c1, sched);
    const CycleMap lmap(free.c1, free.c2, sched, MapKind::Langevin);
    const SymMat2 x2 = *lmap.x_second();
    const auto rates = squeeze_rates(free.c1, free.c2, sched, x2);
    r.sr_xx = rates.sr_xx;
    r.sr_pp = rates.sr_pp;
    r.sr_xp = rates.sr_xp;
    r.sign_ok = rates.negative_sign_matches;
    r.rho = spectral_radius(lmap.f());
    r.pp_langevin = safe_asymptote(lmap).pp;
    r.pp_riccati = safe_asymptote(CycleMap(meas.c1, meas.c2, sched, MapKind::Riccati)).pp;
    return r;
  });

  Dataset d;
  d.figure_id = "fig2";
  d.add("a1", o.a1_grid);
  auto col = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(field(r));
    return v;
  };
  d.add("sr_pp", col([](const Row& r) { return r.sr_pp_leading; }));
  d.add("sr_pp_full", col([](const Row& r) { return r.sr_pp; }));
  d.add("sr_xx", col([](const Row& r) { return r.sr_xx; }));
  d.add("sr_xp", col([](const Row& r) { return r.sr_xp; }));
  d.add("spectral_radius", col([](const Row& r) { return r.rho; }));
  d.add("asymptotic_pp_langevin", col([](const Row& r) { return r.pp_langevin; }));
  d.add("asymptotic_pp_riccati", col([](const Row& r) { return r.pp_riccati; }));

  bool all_sign = true;
  for (const auto& r : rows) all_sign = all_sign && r.sign_ok;
  const double root = fig2_root(o);
  d.metadata = base_metadata("fig2");
  d.metadata["parameters"] = {{"omega1", o.omega1}, {"omega2", o.omega2}, {"a2", o.a2}, {"d1", o.d1},
                              {"d2", o.d2},         {"m", o.m},           {"b", o.b}};
  d.metadata["root_a1"] = root;
  d.metadata["root_tolerance"] = o.root_tolerance;
  d.metadata["sr_pp_convention"] = "leading order in (a2 - a1), negative damping sign";
  d.metadata["negative_sign_matches_cycle_map"] = all_sign;
  char buf[128];
  std::snprintf(buf, sizeof buf, "a1*=%.4f±%.0e (momentum rate changes sign)", root, o.root_tolerance);
  d.metadata["summary"] = buf;
  return d;
}

// ---------------------------------------------------------------- fig 3

namespace {

DynamicsCoefficients fig3_coeffs(const Fig3Options& o, double a, double d, double b, double omega) {
  return natural_coefficients(a, a, d, d, b, omega, o.m);
}

}  // namespace

Dataset fig3a_curves(const Fig3Options& o) {
  const std::size_t nb = o.b_values.size();
  const auto rows = parallel_map(o.omega_grid.size(), [&](std::size_t i) {
    std::vector<double> r;
    const double w = o.omega_grid[i];
    const auto m0 = build_matrices(fig3_coeffs(o, o.a, o.d, 0.0, w));
    r.push_back(lyapunov_asymptote(m0.a, m0.d).xx);
    for (double b : o.b_values) {
      const auto mb = build_matrices(fig3_coeffs(o, o.a, o.d, b, w));
      r.push_back(riccati_asymptote(mb.a, mb.d, mb.b).xx);
    }
    return r;
  });
  Dataset d;
  d.figure_id = "fig3a";
  d.add("omega", o.omega_grid);
  std::vector<double> l;
  for (const auto& r : rows) l.push_back(r[0]);
  d.add("sigma_L_xx", l);
  for (std::size_t k = 0; k < nb; ++k) {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r[k + 1]);
    d.add("sigma_R_xx_b" + short_number(o.b_values[k]), c);
  }
  const double sg = ground_state_variance(o.omega2, o.m, 1.0);
  const double x_inf = o.d / (2.0 * (o.a + o.a));
  d.add("sigma_g_xx", std::vector<double>(o.omega_grid.size(), sg));
  d.add("X_inf_xx", std::vector<double>(o.omega_grid.size(), x_inf));
  d.metadata = base_metadata("fig3a");
  d.metadata["parameters"] = {{"a1", o.a}, {"a2", o.a}, {"d1", o.d}, {"d2", o.d}, {"m", o.m}, {"omega2", o.omega2},
                              {"b_values", o.b_values}};
  d.metadata["sigma_g_xx"] = sg;
  d.metadata["X_inf_xx"] = x_inf;
  char buf[160];
  std::snprintf(buf, sizeof buf, "sigma_g_xx=%.6f X_inf_xx=%.6f sigma_L_xx(max omega)=%.6f", sg, x_inf, l.back());
  d.metadata["summary"] = buf;
  return d;
}

Dataset fig3b_trace(const Fig3Options& o) {
  const auto free1 = fig3_coeffs(o, o.a, o.d, 0.0, o.omega1);
  const auto free2 = fig3_coeffs(o, o.a, o.d, 0.0, o.omega2);
  const auto meas1 = fig3_coeffs(o, o.a, o.d, o.b_trace, o.omega1);
  const auto meas2 = fig3_coeffs(o, o.a, o.d, o.b_trace, o.omega2);
  const auto sched = build_schedule(free1, free2, o.cycles);
  const CycleMap lmap(free1, free2, sched, MapKind::Langevin);
  const CycleMap rmap(meas1, meas2, sched, MapKind::Riccati);

  // Both runs share the unmeasured equilibration at omega2.
  ProtocolRunOptions opts;
  opts.equilibration_time = o.equilibration_time;
  opts.dense_samples = o.dense_samples;
  const auto ltrace = run_protocol(lmap, o.sigma0, opts);
  const auto rtrace = run_protocol(rmap, o.sigma0, opts);
  const SymMat2 start = lmap.equilibrate(o.sigma0, o.equilibration_time);

  std::vector<double> time, cycle, lxx, rxx, lpp, rpp;
  for (std::size_t i = 0; i < ltrace.size(); ++i) {
    time.push_back(ltrace[i].time);
    cycle.push_back(ltrace[i].cycle);
    lxx.push_back(ltrace[i].cov.xx);
    lpp.push_back(ltrace[i].cov.pp);
    rxx.push_back(rtrace[i].cov.xx);
    rpp.push_back(rtrace[i].cov.pp);
  }

  const double sg = ground_state_variance(o.omega2, o.m, 1.0);
  const double x_w2 = lmap.x_second()->xx;
  Dataset d;
  d.figure_id = "fig3b";
  d.add("time", time);
  d.add("cycle", cycle);
  d.add("sxx_langevin", lxx);
  d.add("sxx_riccati", rxx);
  d.add("spp_langevin", lpp);
  d.add("spp_riccati", rpp);
  d.add("sigma_g_xx", std::vector<double>(time.size(), sg));
  d.add("X_omega2_xx", std::vector<double>(time.size(), x_w2));

  const auto la = safe_asymptote(lmap);
  const auto ra = safe_asymptote(rmap);
  const double zeta0 = std::sqrt(x_w2 / sg);
  d.metadata = base_metadata("fig3b");
  d.metadata["parameters"] = {{"a", o.a},       {"d", o.d},           {"m", o.m},
                              {"omega1", o.omega1}, {"omega2", o.omega2}, {"b", o.b_trace},
                              {"cycles", o.cycles}, {"equilibration_time", o.equilibration_time},
                              {"sigma0", sym_json(o.sigma0)}};
  d.metadata["X_omega2_xx"] = x_w2;
  d.metadata["sigma_g_xx"] = sg;
  d.metadata["equilibrated_xx"] = start.xx;
  d.metadata["asymptotic_xx_langevin"] = json_number(la.xx);
  d.metadata["asymptotic_xx_riccati"] = json_number(ra.xx);
  d.metadata["final_xx_langevin"] = lxx.back();
  d.metadata["final_xx_riccati"] = rxx.back();
  d.metadata["class_langevin"] = to_string(classify(std::sqrt(la.xx / sg), zeta0));
  d.metadata["class_riccati"] = to_string(classify(std::sqrt(ra.xx / sg), zeta0));
  d.metadata["ordering_holds"] = ra.xx < la.xx && la.xx < sg;
  d.metadata["convention"] = "state at cycle boundaries; asymptote = protocol fixed point";
  char buf[200];
  std::snprintf(buf, sizeof buf, "asymptotic sxx: riccati=%.6f langevin=%.6f ground=%.6f", ra.xx, la.xx, sg);
  d.metadata["summary"] = buf;
  return d;
}

Dataset fig3c_grid(const Fig3Options& o) {
  const std::size_t na = o.a_grid.size();
  const std::size_t nd = o.d_grid.size();
  const double sg = ground_state_variance(o.omega2, o.m, 1.0);
  const auto rows = parallel_map(na * nd, [&](std::size_t idx) {
    const double a = o.a_grid[idx % na];
    const double dd = o.d_grid[idx / na];
    std::vector<double> r;
    for (double b : o.ratio_b_values) {
      try {
        const auto c1 = fig3_coeffs(o, a, dd, b, o.omega1);
        const auto c2 = fig3_coeffs(o, a, dd, b, o.omega2);
        const auto sched = build_schedule(c1, c2, 0);
        const CycleMap map(c1, c2, sched, b > 0.0 ? MapKind::Riccati : MapKind::Langevin);
        r.push_back(safe_asymptote(map).xx / sg);
      } catch (const NumericalError&) {
        r.push_back(kNaN);
      }
    }
    return r;
  });

  Dataset d;
  d.figure_id = "fig3c";
  std::vector<double> av, dv;
  for (std::size_t idx = 0; idx < na * nd; ++idx) {
    av.push_back(o.a_grid[idx % na]);
    dv.push_back(o.d_grid[idx / na]);
  }
  d.add("a", av);
  d.add("d", dv);
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t k = 0; k < o.ratio_b_values.size(); ++k) {
    std::vector<double> c;
    long squeezed = 0;
    for (const auto& r : rows) {
      c.push_back(r[k]);
      if (r[k] < 1.0) ++squeezed;
    }
    const std::string name = "ratio_b" + short_number(o.ratio_b_values[k]);
    counts[name] = squeezed;
    d.add(name, c);
  }
  // Border per d-slice: the first grid a (ascending) at which the ratio is
  // below one, or null when no point on the slice is squeezed.
  nlohmann::json border = nlohmann::json::object();
  for (std::size_t k = 0; k < o.ratio_b_values.size(); ++k) {
    nlohmann::json slices = nlohmann::json::array();
    for (std::size_t j = 0; j < nd; ++j) {
      nlohmann::json first = nullptr;
      for (std::size_t i = 0; i < na; ++i) {
        if (rows[j * na + i][k] < 1.0) {
          first = o.a_grid[i];
          break;
        }
      }
      slices.push_back(first);
    }
    border["b" + short_number(o.ratio_b_values[k])] = slices;
  }
  d.metadata = base_metadata("fig3c");
  d.metadata["parameters"] = {{"m", o.m}, {"omega1", o.omega1}, {"omega2", o.omega2}, {"b_values", o.ratio_b_values}};
  d.metadata["squeezed_points"] = counts;
  d.metadata["border_first_squeezed_a"] = border;
  d.metadata["ratio_definition"] = "protocol asymptote xx / ground-state xx at omega2";
  d.metadata["summary"] = "squeezed grid points per b: " + counts.dump();
  return d;
}

// ---------------------------------------------------------------- fig 4

NoiseRates rates_for_quality(const PhysicalParams& p, double q, double recoil, bool relative_to_omega1) {
  if (!(q > 0.0)) throw NumericalError(ErrorCode::InvalidParameters, "quality factor must be positive");
  NoiseRates r;
  r.gamma = (relative_to_omega1 ? p.omega1 : p.omega2) / q;
  r.lambda = r.gamma;
  r.recoil = recoil;
  r.mean_occupation = p.mean_occupation_override ? *p.mean_occupation_override
                                                 : mean_occupation(p.omega2, p.chamber_temperature);
  return r;
}

ZetaResult zeta_at(const PhysicalParams& base, double q, double recoil, double eta, bool relative_to_omega1) {
  PhysicalParams p = base;
  p.efficiency = eta;
  const NoiseRates r = rates_for_quality(p, q, recoil, relative_to_omega1);
  const auto c1 = coefficients(p, p.omega1, r);
  const auto c2 = coefficients(p, p.omega2, r);
  const auto sched = build_schedule(c1, c2, 0);
  const CycleMap map(c1, c2, sched, eta > 0.0 ? MapKind::Riccati : MapKind::Langevin);
  const double sg = ground_state_variance(p.omega2, p.mass, kHbar);
  ZetaResult z;
  const SymMat2 start = map.second_asymptote();
  z.initial = std::sqrt(start.xx / sg);
  z.one_cycle = std::sqrt(map.apply(start).xx / sg);
  z.asymptotic = std::sqrt(safe_asymptote(map).xx / sg);
  return z;
}

Dataset fig4a_noise(const Fig4Options& o) {
  const PhysicalParams& p = o.base;
  const double recoil = o.recoil_values.front();
  std::vector<double> gamma, dg, dl, dL, ratio;
  for (double q : o.q_grid) {
    const auto r = rates_for_quality(p, q, recoil, o.q_relative_to_omega1);
    const auto b = noise_breakdown(p, p.omega2, r);
    gamma.push_back(r.gamma);
    dg.push_back(b.d2_gamma);
    dl.push_back(b.d2_lambda);
    dL.push_back(b.d2_Lambda);
    ratio.push_back(b.d2_Lambda / b.d2_gamma);
  }
  // Crossover where d2_Lambda = d2_gamma, interpolated in log Q.
  nlohmann::json crossover = nullptr;
  for (std::size_t i = 1; i < ratio.size(); ++i) {
    if ((ratio[i - 1] - 1.0) * (ratio[i] - 1.0) <= 0.0) {
      const double l0 = std::log(ratio[i - 1]);
      const double l1 = std::log(ratio[i]);
      const double s = l1 == l0 ? 0.0 : -l0 / (l1 - l0);
      crossover = std::exp(std::log(o.q_grid[i - 1]) + s * (std::log(o.q_grid[i]) - std::log(o.q_grid[i - 1])));
      break;
    }
  }
  Dataset d;
  d.figure_id = "fig4a";
  d.add("Q", o.q_grid);
  d.add("gamma", gamma);
  d.add("d2_gamma", dg);
  d.add("d2_lambda", dl);
  d.add("d2_Lambda", dL);
  d.metadata = base_metadata("fig4a");
  d.metadata["parameters"] = to_json(p);
  d.metadata["recoil"] = recoil;
  d.metadata["q_reference"] = o.q_relative_to_omega1 ? "omega1" : "omega2";
  d.metadata["crossover_Q"] = crossover;
  d.metadata["summary"] = "d2_Lambda = d2_gamma at Q=" + (crossover.is_null() ? std::string("none") : short_number(crossover.get<double>()));
  return d;
}

Dataset fig4b_zeta(const Fig4Options& o) {
  struct Combo {
    double recoil, eta;
  };
  std::vector<Combo> combos;
  for (double eta : o.eta_values)
    for (double rec : o.recoil_values) combos.push_back({rec, eta});

  const std::size_t nq = o.q_grid.size();
  const auto results = parallel_map(nq * combos.size(), [&](std::size_t idx) {
    const auto& c = combos[idx / nq];
    try {
      return zeta_at(o.base, o.q_grid[idx % nq], c.recoil, c.eta, o.q_relative_to_omega1);
    } catch (const NumericalError&) {
      return ZetaResult{kNaN, kNaN, kNaN};
    }
  });

  Dataset d;
  d.figure_id = "fig4b";
  d.add("Q", o.q_grid);
  nlohmann::json at_top = nlohmann::json::object();
  nlohmann::json plateau = nlohmann::json::object();
  for (std::size_t k = 0; k < combos.size(); ++k) {
    std::vector<double> z;
    for (std::size_t i = 0; i < nq; ++i) z.push_back(results[k * nq + i].asymptotic);
    const std::string tag = column_tag(combos[k].recoil, combos[k].eta);
    at_top[tag] = json_number(z.back());
    // Plateau onset: smallest Q beyond which |d ln zeta / d ln Q| < 0.05.
    nlohmann::json onset = nullptr;
    for (std::size_t i = nq - 1; i > 0; --i) {
      const double slope = std::log(z[i] / z[i - 1]) / std::log(o.q_grid[i] / o.q_grid[i - 1]);
      if (!(std::abs(slope) < 0.05)) break;
      onset = o.q_grid[i - 1];
    }
    plateau[tag] = onset;
    d.add("zeta_" + tag, z);
  }
  for (std::size_t k = 0; k < combos.size(); ++k) {
    std::vector<double> z;
    for (std::size_t i = 0; i < nq; ++i) z.push_back(results[k * nq + i].one_cycle);
    d.add("zeta_one_cycle_" + column_tag(combos[k].recoil, combos[k].eta), z);
  }
  d.metadata = base_metadata("fig4b");
  d.metadata["parameters"] = to_json(o.base);
  d.metadata["q_reference"] = o.q_relative_to_omega1 ? "omega1" : "omega2";
  d.metadata["convention"] =
      "zeta_* columns: protocol fixed point (position limit when momentum diverges); "
      "zeta_one_cycle_* columns: one cycle from the omega2 steady state";
  d.metadata["zeta_at_max_Q"] = at_top;
  d.metadata["plateau_onset_Q"] = plateau;
  d.metadata["plateau_definition"] = "smallest Q beyond which |d ln zeta / d ln Q| < 0.05";
  std::string s = "zeta at Q=" + short_number(o.q_grid.back()) + ":";
  for (const auto& [k, v] : at_top.items()) s += " " + k + "=" + (v.is_null() ? "nan" : short_number(v.get<double>()));
  d.metadata["summary"] = s;
  return d;
}

// ---------------------------------------------------------------- scenario

Dataset scenario_table(const ScenarioOptions& o) {
  const PhysicalParams& p = o.base;
  const double sg = ground_state_variance(p.omega2, p.mass, kHbar);
  std::vector<double> idx, rec, xx, sgv, zeta;
  const double recs[2] = {o.best_recoil, o.worst_recoil};
  for (int i = 0; i < 2; ++i) {
    NoiseRates r;
    r.gamma = o.gamma;
    r.lambda = o.gamma;
    r.recoil = recs[i];
    r.mean_occupation = p.mean_occupation_override ? *p.mean_occupation_override
                                                   : mean_occupation(p.omega2, p.chamber_temperature);
    auto c = coefficients(p, p.omega2, r);
    c.b = 0.0;
    const auto m = build_matrices(c);
    const SymMat2 x = lyapunov_asymptote(m.a, m.d);
    idx.push_back(i);
    rec.push_back(recs[i]);
    xx.push_back(x.xx * 1e18);
    sgv.push_back(sg * 1e18);
    zeta.push_back(std::sqrt(x.xx / sg));
  }
  Dataset d;
  d.figure_id = "scenario";
  d.add("scenario", idx);
  d.add("recoil", rec);
  d.add("X_omega2_xx_nm2", xx);
  d.add("sigma_g_xx_nm2", sgv);
  d.add("zeta_initial", zeta);
  d.metadata = base_metadata("scenario");
  d.metadata["rows"] = {"best", "worst"};
  d.metadata["parameters"] = to_json(p);
  d.metadata["gamma"] = o.gamma;
  char buf[200];
  std::snprintf(buf, sizeof buf, "ground-state sxx=%.3e nm^2; best X_xx=%.4g nm^2 zeta0=%.4g; worst zeta0=%.4g", sg * 1e18,
                xx[0], zeta[0], zeta[1]);
  d.metadata["summary"] = buf;
  return d;
}

// ---------------------------------------------------------------- dispatch

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> k{"fig2", "fig3a", "fig3b", "fig3c", "fig4a", "fig4b", "scenario"};
  return k;
}

Dataset run_figure(const std::string& id, const RunConfig& cfg, bool cfg_given, std::uint64_t seed) {
  const bool natural = cfg_given && cfg.mode == UnitSystem::Natural;
  const bool si = cfg_given && cfg.mode == UnitSystem::SI;
  Dataset d;
  if (id == "fig2") {
    Fig2Options o;
    if (natural) {
      const auto& r = *cfg.raw;
      o.a2 = r.a2;
      o.d1 = r.d1;
      o.d2 = r.d2;
      o.m = r.m;
      o.omega1 = cfg.protocol.omega1;
      o.omega2 = cfg.protocol.omega2;
      if (cfg.measurement.b) o.b = *cfg.measurement.b;
    }
    d = fig2_threshold(o);
  } else if (id == "fig3a" || id == "fig3b" || id == "fig3c") {
    Fig3Options o;
    if (natural) {
      const auto& r = *cfg.raw;
      o.a = r.a1;
      o.d = r.d1;
      o.m = r.m;
      o.omega1 = cfg.protocol.omega1;
      o.omega2 = cfg.protocol.omega2;
      o.cycles = cfg.protocol.cycles;
      o.equilibration_time = cfg.protocol.equilibration_time;
      if (cfg.measurement.b) o.b_trace = *cfg.measurement.b;
      if (cfg.initial) o.sigma0 = *cfg.initial;
    }
    d = id == "fig3a" ? fig3a_curves(o) : id == "fig3b" ? fig3b_trace(o) : fig3c_grid(o);
  } else if (id == "fig4a" || id == "fig4b") {
    Fig4Options o;
    if (si) {
      o.base = cfg.effective_physical();
      if (cfg.rates.recoil) o.recoil_values = {*cfg.rates.recoil};
      if (cfg.measurement.eta) o.eta_values = {*cfg.measurement.eta};
    }
    d = id == "fig4a" ? fig4a_noise(o) : fig4b_zeta(o);
  } else if (id == "scenario") {
    ScenarioOptions o;
    if (si) {
      o.base = cfg.effective_physical();
      if (cfg.rates.gamma) o.gamma = *cfg.rates.gamma;
    }
    d = scenario_table(o);
  } else {
    throw ConfigError("figure", "unknown figure id '" + id + "'");
  }
  d.metadata["seed"] = seed;
  return d;
}

std::string summary_line(const Dataset& d) {
  const std::string s = d.metadata.value("summary", std::string());
  return d.figure_id + ": " + s;
}

}  // namespace levisqueeze
