#pragma once

// Flat "key = value" run configuration. '#' starts a comment; later
// assignments override earlier ones, which is how command-line flags are
// layered over a file.

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "experiments.hpp"
#include "mesh.hpp"
#include "mesh_families.hpp"

namespace sstefan {

class ConfigError : public std::runtime_error {
 public:
  enum class Kind { UnknownKey, InvalidValue, MissingMesh, MissingFile };
  ConfigError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct RunConfig {
  std::string subcommand;
  int test = 1;
  Scheme scheme = Scheme::Mlp1;
  std::vector<std::string> meshes;  // family ids or mesh files, coarse to fine
  std::optional<std::string> reference;
  bool exact_reference = false;
  double r = 0.5;
  std::vector<double> nf{1.0};
  std::uint64_t seed = 1;
  std::size_t paths = 100;
  std::uint32_t path = 0;  // single-path runs
  std::size_t n_max = 0;   // 0: auto from the finest mesh
  std::string output = "out";
  std::optional<std::pair<double, double>> plateau;
  bool plots = true;
  double final_time = 1.0;
  Sym2 lambda{};
  unsigned workers = 1;
  std::size_t q_modes = 0;  // 0: scalar Brownian motion
  double q_decay = 0.5;
  NewtonConfig newton{};
  std::optional<std::string> noise_load, noise_save;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(v);
  while (std::getline(ss, cur, ',')) {
    std::istringstream ws(cur);
    for (std::string t; ws >> t;) out.push_back(t);
  }
  return out;
}

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError(ConfigError::Kind::InvalidValue, "invalid value for '" + key + "': '" + value + "' (" + why + ")");
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty()) bad_value(key, value, "not a number");
  return out;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& value, std::size_t expect = 0) {
  std::vector<double> out;
  for (const auto& t : split_list(value)) out.push_back(parse_number<double>(key, t));
  if (out.empty() || (expect && out.size() != expect))
    bad_value(key, value, expect ? "expected " + std::to_string(expect) + " numbers" : "empty list");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  bad_value(key, v, "expected true or false");
}

/// "1-4" or "1,2,3".
inline std::vector<int> parse_levels(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const auto& t : split_list(value)) {
    const auto dash = t.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_number<int>(key, t));
      continue;
    }
    const int a = parse_number<int>(key, t.substr(0, dash)), b = parse_number<int>(key, t.substr(dash + 1));
    if (a > b) bad_value(key, value, "descending range");
    for (int l = a; l <= b; ++l) out.push_back(l);
  }
  if (out.empty()) bad_value(key, value, "empty level list");
  return out;
}

inline bool is_mesh_source(const std::string& s) {
  return parse_family_id(s).has_value() || std::filesystem::is_regular_file(s);
}

}  // namespace detail

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses the file text, then applies `overrides` in order, then validates.
inline RunConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {}) {
  using namespace detail;
  RunConfig c;
  std::optional<std::string> family;
  std::optional<std::vector<int>> levels;

  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"test", [&](auto& k, auto& v) { c.test = parse_number<int>(k, v); }},
      {"scheme",
       [&](auto& k, auto& v) {
         std::string s = v;
         std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
         if (s == "mlp1" || s == "p1") c.scheme = Scheme::Mlp1;
         else if (s == "hmm") c.scheme = Scheme::Hmm;
         else bad_value(k, v, "expected mlp1 or hmm");
       }},
      {"mesh",
       [&](auto&, auto& v) {
         c.meshes = {v};
         family.reset();
         levels.reset();
       }},
      {"meshes",
       [&](auto&, auto& v) {
         c.meshes = split_list(v);
         family.reset();
         levels.reset();
       }},
      {"family",
       [&](auto& k, auto& v) {
         if (v != "mesh1" && v != "hexa1") bad_value(k, v, "expected mesh1 or hexa1");
         family = v;
       }},
      {"levels", [&](auto& k, auto& v) { levels = parse_levels(k, v); }},
      {"reference",
       [&](auto&, auto& v) {
         c.exact_reference = v == "exact";
         if (v == "exact" || v == "none") c.reference.reset();
         else c.reference = v;
       }},
      {"r", [&](auto& k, auto& v) { c.r = parse_number<double>(k, v); }},
      {"nf", [&](auto& k, auto& v) { c.nf = parse_doubles(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"paths", [&](auto& k, auto& v) { c.paths = parse_number<std::size_t>(k, v); }},
      {"path", [&](auto& k, auto& v) { c.path = parse_number<std::uint32_t>(k, v); }},
      {"n_max", [&](auto& k, auto& v) { c.n_max = v == "auto" ? 0 : parse_number<std::size_t>(k, v); }},
      {"output", [&](auto& k, auto& v) {
         if (v.empty()) bad_value(k, v, "empty path");
         c.output = v;
       }},
      {"plateau",
       [&](auto& k, auto& v) {
         const auto p = parse_doubles(k, v, 2);
         c.plateau = std::pair{p[0], p[1]};
       }},
      {"plots", [&](auto& k, auto& v) { c.plots = parse_bool(k, v); }},
      {"t", [&](auto& k, auto& v) { c.final_time = parse_number<double>(k, v); }},
      {"lambda",
       [&](auto& k, auto& v) {
         const auto p = parse_doubles(k, v);
         if (p.size() == 1) c.lambda = {p[0], 0.0, p[0]};
         else if (p.size() == 3) c.lambda = {p[0], p[1], p[2]};
         else bad_value(k, v, "expected one number or xx, xy, yy");
       }},
      {"workers", [&](auto& k, auto& v) { c.workers = parse_number<unsigned>(k, v); }},
      {"q_modes", [&](auto& k, auto& v) { c.q_modes = parse_number<std::size_t>(k, v); }},
      {"q_decay", [&](auto& k, auto& v) { c.q_decay = parse_number<double>(k, v); }},
      {"merit",
       [&](auto& k, auto& v) {
         if (v == "energy") c.newton.merit = Merit::Energy;
         else if (v == "residual") c.newton.merit = Merit::Residual;
         else bad_value(k, v, "expected energy or residual");
       }},
      {"newton_tol", [&](auto& k, auto& v) { c.newton.tolerance = parse_number<double>(k, v); }},
      {"newton_max", [&](auto& k, auto& v) { c.newton.max_iterations = parse_number<int>(k, v); }},
      {"condense", [&](auto& k, auto& v) { c.newton.condense = parse_bool(k, v); }},
      {"noise_load", [&](auto&, auto& v) { c.noise_load = v; }},
      {"noise_save", [&](auto&, auto& v) { c.noise_save = v; }},
  };

  auto assign = [&](std::string key, const std::string& value, const std::string& where) {
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(ConfigError::Kind::UnknownKey, where + "unknown key '" + key + "'");
    it->second(key, value);
  };

  std::istringstream in(text);
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(no) + ": ";
    if (eq == std::string::npos)
      throw ConfigError(ConfigError::Kind::InvalidValue, where + "expected 'key = value', got '" + line + "'");
    assign(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  for (const auto& [k, v] : overrides) assign(k, trim(v), "");

  if (family || levels) {
    if (!family || !levels) throw ConfigError(ConfigError::Kind::InvalidValue, "'family' and 'levels' go together");
    c.meshes.clear();
    for (int l : *levels) {
      const auto id = family_id(*family, l);
      if (!parse_family_id(id)) bad_value("levels", std::to_string(l), id + " is not a member of " + *family);
      c.meshes.push_back(id);
    }
  }

  if (c.test != 1 && c.test != 2) bad_value("test", std::to_string(c.test), "expected 1 or 2");
  if (!(c.r > 0.0)) bad_value("r", std::to_string(c.r), "must be positive");
  for (double nf : c.nf)
    if (!(nf >= 0.0) || !std::isfinite(nf)) bad_value("nf", std::to_string(nf), "must be finite and nonnegative");
  if (c.paths == 0) bad_value("paths", "0", "need at least one path");
  if (c.n_max && !std::has_single_bit(c.n_max)) bad_value("n_max", std::to_string(c.n_max), "not a power of two");
  if (!(c.final_time > 0.0) || !std::isfinite(c.final_time)) bad_value("T", std::to_string(c.final_time), "must be positive");
  if (c.plateau && !(c.plateau->first < c.plateau->second))
    bad_value("plateau", std::to_string(c.plateau->first) + ", " + std::to_string(c.plateau->second), "empty interval");
  if (const auto [lo, hi] = c.lambda.eigenvalues(); !(lo > 0.0))
    bad_value("lambda", std::to_string(c.lambda.xx) + ", " + std::to_string(c.lambda.xy) + ", " + std::to_string(c.lambda.yy),
              "not positive definite");
  if (c.workers == 0) bad_value("workers", "0", "need at least one worker");
  if (c.q_modes && !(c.q_decay > 0.0)) bad_value("q_decay", std::to_string(c.q_decay), "must be positive");
  try {
    c.newton.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ConfigError::Kind::InvalidValue, e.what());
  }
  if (c.exact_reference && c.test != 1)
    throw ConfigError(ConfigError::Kind::InvalidValue, "reference = exact needs test 1 (test 2 has no exact solution)");

  if (c.meshes.empty()) throw ConfigError(ConfigError::Kind::MissingMesh, "missing mesh: set 'mesh', 'meshes' or 'family' + 'levels'");
  auto check_source = [](const std::string& key, const std::string& m) {
    if (!detail::is_mesh_source(m))
      throw ConfigError(ConfigError::Kind::MissingFile,
                        "'" + key + "': '" + m + "' is neither a family id (mesh1-01..06, hexa1-01..05) nor a file");
  };
  for (const auto& m : c.meshes) check_source("mesh", m);
  if (c.reference) check_source("reference", *c.reference);
  if (c.noise_load && !std::filesystem::is_regular_file(*c.noise_load))
    throw ConfigError(ConfigError::Kind::MissingFile, "'noise_load': no such file '" + *c.noise_load + "'");
  return c;
}

/// Mesh for a family id or a mesh file, labelled by the id or the file stem.
inline LevelSpec resolve_mesh(const std::string& source) {
  if (const auto member = parse_family_id(source))
    return {family_id(member->family, member->level), std::make_shared<const PolytopalMesh>(make_family_mesh(*member))};
  const std::filesystem::path p(source);
  return {p.stem().string(), std::make_shared<const PolytopalMesh>(load_mesh(p))};
}

inline EnsembleSpec ensemble_spec(const RunConfig& c, double nf) {
  EnsembleSpec s;
  s.test = c.test;
  s.scheme = c.scheme;
  s.r = c.r;
  s.nf = nf;
  for (const auto& m : c.meshes) s.levels.push_back(resolve_mesh(m));
  if (c.reference) s.reference = resolve_mesh(*c.reference);
  s.exact_reference = c.exact_reference;
  s.paths = c.paths;
  s.seed = c.seed;
  s.n_max = c.n_max;
  s.workers = c.workers;
  s.final_time = c.final_time;
  s.lambda = c.lambda;
  s.mushy_interval = c.plateau;
  s.newton = c.newton;
  if (c.q_modes) s.qwiener = QWienerSpec::geometric(c.q_modes, c.q_decay);
  return s;
}

}  // namespace sstefan
