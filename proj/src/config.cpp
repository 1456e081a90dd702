#include "levisqueeze/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace levisqueeze {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

std::string where(int line) { return "line " + std::to_string(line); }

// Drops a trailing # comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && in_string) {
      ++i;
    } else if (s[i] == '"') {
      in_string = !in_string;
    } else if (s[i] == '#' && !in_string) {
      return s.substr(0, i);
    }
  }
  return s;
}

nlohmann::json parse_string(std::string_view v, const std::string& key) {
  if (v.size() < 2 || v.back() != '"') throw ConfigError(key, "unterminated string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    char c = v[i];
    if (c == '\\') {
      if (i + 2 >= v.size()) throw ConfigError(key, "bad escape");
      char e = v[++i];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: throw ConfigError(key, std::string("unsupported escape \\") + e);
      }
    } else if (c == '"') {
      throw ConfigError(key, "unexpected quote in string");
    } else {
      out += c;
    }
  }
  return out;
}

nlohmann::json parse_value(std::string_view v, const std::string& key) {
  if (v.empty()) throw ConfigError(key, "missing value");
  if (v.front() == '"') return parse_string(v, key);
  if (v == "true") return true;
  if (v == "false") return false;
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();

  std::string digits;
  for (char c : v) {
    if (c != '_') digits += c;
  }
  if (!digits.empty() && digits.front() == '+') digits.erase(0, 1);
  const bool integral = digits.find_first_of(".eE") == std::string::npos;
  if (integral) {
    std::int64_t i{};
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (ec == std::errc() && ptr == digits.data() + digits.size()) return i;
  }
  double d{};
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw ConfigError(key, "cannot parse value '" + std::string(v) + "'");
  }
  return d;
}

double number_of(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

const nlohmann::json& section_of(const nlohmann::json& root, const char* name) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!root.contains(name)) return empty;
  const auto& s = root.at(name);
  if (!s.is_object()) throw ConfigError(name, "expected a section");
  return s;
}

}  // namespace

nlohmann::json parse_flat_toml(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;
  std::string section;
  int line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3 || line[1] == '[') {
        throw ConfigError(where(line_no), "malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!is_bare_key(section)) throw ConfigError(section, "invalid section name");
      if (root.contains(section)) throw ConfigError(section, "duplicate section");
      root[section] = nlohmann::json::object();
      current = &root[section];
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where(line_no), "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!is_bare_key(key)) throw ConfigError(full, "invalid key");
    if (current->contains(key)) throw ConfigError(full, "duplicate key");
    (*current)[key] = parse_value(trim(line.substr(eq + 1)), full);
  }
  return root;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (!json) return parse_flat_toml(text);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, e.what());
  }
}

PhysicalParams RunConfig::effective_physical() const {
  PhysicalParams p = physical.value_or(PhysicalParams{});
  if (measurement.eta) p.efficiency = *measurement.eta;
  return p;
}

NoiseRates RunConfig::rates_at(double omega) const {
  const PhysicalParams p = effective_physical();
  NoiseRates r = estimate_rates(p, omega, rates.occupation);
  if (rates.gamma) r.gamma = *rates.gamma;
  r.lambda = rates.lambda.value_or(r.gamma);
  if (rates.recoil) r.recoil = *rates.recoil;
  return r;
}

DynamicsCoefficients RunConfig::coefficients_at(double omega) const {
  DynamicsCoefficients c;
  if (mode == UnitSystem::Natural) {
    const RawCoefficients r = raw.value_or(RawCoefficients{});
    c = natural_coefficients(r.a1, r.a2, r.d1, r.d2, measurement.b.value_or(0.0), omega, r.m);
  } else {
    c = coefficients(effective_physical(), omega, rates_at(omega));
    if (measurement.b) c.b = *measurement.b;
  }
  c.validate();
  return c;
}

double RunConfig::omega1() const {
  return mode == UnitSystem::Natural ? protocol.omega1 : effective_physical().omega1;
}

double RunConfig::omega2() const {
  return mode == UnitSystem::Natural ? protocol.omega2 : effective_physical().omega2;
}

double RunConfig::mass() const {
  return mode == UnitSystem::Natural ? raw.value_or(RawCoefficients{}).m : effective_physical().mass;
}

RunConfig default_run_config(UnitSystem mode) {
  RunConfig cfg;
  cfg.mode = mode;
  if (mode == UnitSystem::Natural) {
    cfg.raw = RawCoefficients{};
  } else {
    cfg.physical = PhysicalParams{};
  }
  return cfg;
}

RunConfig run_config_from_json(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config", "expected a table at top level");
  static const char* const kSections[] = {"mode",        "coefficients", "physical", "rates",
                                          "protocol",    "measurement",  "initial",  "output"};
  for (const auto& [key, value] : root.items()) {
    bool known = false;
    for (const char* s : kSections) known = known || key == s;
    if (!known) throw ConfigError(key, "unknown section");
  }

  UnitSystem mode = UnitSystem::Natural;
  if (root.contains("mode")) {
    const auto& m = root.at("mode");
    if (!m.is_string()) throw ConfigError("mode", "expected \"natural\" or \"si\"");
    const auto s = m.get<std::string>();
    if (s == "natural") mode = UnitSystem::Natural;
    else if (s == "si") mode = UnitSystem::SI;
    else throw ConfigError("mode", "expected \"natural\" or \"si\", got \"" + s + "\"");
  }
  RunConfig cfg = default_run_config(mode);

  if (mode == UnitSystem::Natural) {
    if (root.contains("physical")) throw ConfigError("physical", "not allowed in natural mode");
    if (root.contains("rates")) throw ConfigError("rates", "not allowed in natural mode");
    RawCoefficients r;
    for (const auto& [key, value] : section_of(root, "coefficients").items()) {
      const std::string full = "coefficients." + key;
      const double v = number_of(value, full);
      if (key == "a1") r.a1 = v;
      else if (key == "a2") r.a2 = v;
      else if (key == "d1") r.d1 = v;
      else if (key == "d2") r.d2 = v;
      else if (key == "m") r.m = v;
      else throw ConfigError(full, "unknown key");
    }
    cfg.raw = r;
  } else {
    if (root.contains("coefficients")) throw ConfigError("coefficients", "not allowed in si mode");
    if (root.contains("physical")) {
      try {
        cfg.physical = physical_params_from_json(root.at("physical"));
      } catch (const ConfigError& e) {
        throw ConfigError("physical." + e.key(), e.what());
      }
    }
    for (const auto& [key, value] : section_of(root, "rates").items()) {
      const std::string full = "rates." + key;
      if (key == "occupation") {
        const std::string s = value.is_string() ? value.get<std::string>() : "";
        if (s == "recompute") cfg.rates.occupation = OccupationPolicy::RecomputePerSegment;
        else if (s == "frozen") cfg.rates.occupation = OccupationPolicy::FrozenAtOmega2;
        else throw ConfigError(full, "expected \"recompute\" or \"frozen\"");
        continue;
      }
      const double v = number_of(value, full);
      if (!(v >= 0.0)) throw ConfigError(full, "must be >= 0");
      if (key == "gamma") cfg.rates.gamma = v;
      else if (key == "lambda") cfg.rates.lambda = v;
      else if (key == "recoil") cfg.rates.recoil = v;
      else throw ConfigError(full, "unknown key");
    }
  }

  for (const auto& [key, value] : section_of(root, "protocol").items()) {
    const std::string full = "protocol." + key;
    if ((key == "omega1" || key == "omega2") && mode == UnitSystem::SI) {
      throw ConfigError(full, "set trap frequencies in [physical] in si mode");
    }
    if (key == "cycles") {
      if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
        throw ConfigError(full, "expected a non-negative integer");
      }
      cfg.protocol.cycles = static_cast<int>(value.get<std::int64_t>());
      continue;
    }
    const double v = number_of(value, full);
    if (key == "omega1") cfg.protocol.omega1 = v;
    else if (key == "omega2") cfg.protocol.omega2 = v;
    else if (key == "equilibration_time") cfg.protocol.equilibration_time = v;
    else throw ConfigError(full, "unknown key");
    if (!(v >= 0.0)) throw ConfigError(full, "must be >= 0");
  }
  if (mode == UnitSystem::Natural && !(cfg.protocol.omega1 > 0.0 && cfg.protocol.omega1 < cfg.protocol.omega2)) {
    throw ConfigError("protocol.omega1", "need 0 < omega1 < omega2");
  }

  for (const auto& [key, value] : section_of(root, "measurement").items()) {
    const std::string full = "measurement." + key;
    const double v = number_of(value, full);
    if (key == "eta") {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(full, "must lie in [0, 1]");
      if (mode == UnitSystem::Natural) throw ConfigError(full, "natural mode takes the backaction b directly");
      cfg.measurement.eta = v;
    } else if (key == "b") {
      if (!(v >= 0.0)) throw ConfigError(full, "must be >= 0");
      cfg.measurement.b = v;
    } else {
      throw ConfigError(full, "unknown key");
    }
  }

  if (root.contains("initial")) {
    SymMat2 s{};
    bool has_xx = false, has_pp = false;
    for (const auto& [key, value] : section_of(root, "initial").items()) {
      const std::string full = "initial." + key;
      const double v = number_of(value, full);
      if (key == "sxx") { s.xx = v; has_xx = true; }
      else if (key == "sxp") s.xp = v;
      else if (key == "spp") { s.pp = v; has_pp = true; }
      else throw ConfigError(full, "unknown key");
    }
    if (!has_xx || !has_pp) throw ConfigError("initial", "needs sxx and spp");
    if (!(s.xx > 0.0 && s.pp > 0.0 && s.det() > 0.0)) throw ConfigError("initial", "not positive definite");
    cfg.initial = s;
  }

  for (const auto& [key, value] : section_of(root, "output").items()) {
    const std::string full = "output." + key;
    if (key == "format") {
      const std::string s = value.is_string() ? value.get<std::string>() : "";
      if (s == "csv") cfg.output.format = OutputFormat::Csv;
      else if (s == "json") cfg.output.format = OutputFormat::Json;
      else throw ConfigError(full, "expected \"csv\" or \"json\"");
    } else if (key == "path") {
      if (!value.is_string()) throw ConfigError(full, "expected a string");
      cfg.output.path = value.get<std::string>();
    } else if (key == "seed") {
      if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
        throw ConfigError(full, "expected a non-negative integer");
      }
      cfg.output.seed = value.get<std::uint64_t>();
    } else {
      throw ConfigError(full, "unknown key");
    }
  }

  try {
    cfg.coefficients_at(cfg.omega1());
    cfg.coefficients_at(cfg.omega2());
  } catch (const NumericalError& e) {
    throw ConfigError(mode == UnitSystem::Natural ? "coefficients" : "physical", e.what());
  }
  return cfg;
}

}  // namespace levisqueeze
