#pragma once

// Run configuration: a JSON document (schema version 1) parsed into RunConfig.
// Every field is checked before any compute and errors name the field path,
// e.g. "problem.hamiltonian.alpha: exponent must satisfy α > 1".

#include "mmfg/linmodel.hpp"
#include "mmfg/sweep.hpp"
#include "mmfg/timedep.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mmfg::cli {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// A ValidationError that carries the offending config path.
class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : ValidationError(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// c + sum_t a_t cos(2 pi k_t.x) + b_t sin(2 pi k_t.x).
struct FieldSeries {
  struct Term {
    std::array<int, 2> k{0, 0};
    double cos = 0, sin = 0;
  };
  double constant = 0;
  std::vector<Term> terms;

  static FieldSeries zero() { return {}; }
  static FieldSeries uniform() { return {1.0, {}}; }
  static FieldSeries cosine(double a) { return {0.0, {Term{{1, 0}, a, 0.0}}}; }

  template <class Real>
  GridField<Real> sample(const TorusGrid& g) const {
    return GridField<Real>::from_function(g, [&](const std::array<Real, 2>& x) {
      Real v(constant);
      for (const auto& t : terms) {
        Real arg = two_pi<Real>() * (Real(t.k[0]) * x[0] + Real(t.k[1]) * x[1]);
        using std::cos;
        using std::sin;
        v += Real(t.cos) * cos(arg) + Real(t.sin) * sin(arg);
      }
      return v;
    });
  }

  /// Squared series rescaled to unit mass; rejects a square that vanishes at a node.
  template <class Real>
  GridField<Real> sample_density(const TorusGrid& g, const std::string& path) const {
    auto f = sample<Real>(g);
    auto sq = hadamard(f, f);
    for (std::size_t j = 0; j < sq.size(); ++j)
      if (!(sq[j] > 0)) throw ConfigError(path, "squared series vanishes at node " + std::to_string(j));
    sq *= Real(1) / integrate(sq);
    return sq;
  }
};

struct ProblemConfig {
  int d = 1;
  int n = 64;
  HamiltonianSpec hamiltonian{};
  CouplingSpec coupling{};
  double nu = 0.0;
  FieldSeries V = FieldSeries::cosine(0.5);
  FieldSeries phi = FieldSeries::uniform();
};

enum class StationaryMethod { continuation, picard };

struct SolverConfig {
  StationaryMethod method = StationaryMethod::continuation;
  int k = 0;  // 0: default order for the dimension
  bool warm_start = true;
  PicardOptions picard{};
  ContinuationOptions continuation{};
};

struct LinearConfig {
  std::array<double, 2> b{0.3, 0.0};
  FieldSeries f = FieldSeries::cosine(1.0);
  std::vector<LinMethod> methods{LinMethod::variational, LinMethod::bilinear, LinMethod::continuation};
};

struct TimedepConfig {
  int nt = 16;
  int nx = 32;
  int k = 0;
  FieldSeries V = FieldSeries::zero();
  FieldSeries m0 = FieldSeries::uniform();
  FieldSeries uT = FieldSeries::zero();
  std::vector<double> schedule{1e-1, 1e-2, 1e-3};
  bool warm_start = true;
  PicardOptions picard = td_picard_defaults();
};

struct OutputConfig {
  std::string dir;  // empty: --output-dir, then MMFG_OUTPUT_DIR, then "."
  std::string stem = "mmfg";
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::string command = "verify";
  std::uint64_t seed = 1;
  ProblemConfig problem{};
  SolverConfig solver{};
  double epsilon = 1e-2;
  std::vector<double> schedule{1e-1, 1e-2, 1e-3, 1e-4};
  int bank_size = 32;
  LinearConfig linear{};
  TimedepConfig timedep{};
  OutputConfig output{};

  RegParams reg(double eps) const {
    RegParams r;
    r.eps = eps;
    r.k = solver.k > 0 ? solver.k : RegParams::default_k(problem.d);
    r.variant = solver.method == StationaryMethod::continuation ? RegVariant::penalized : RegVariant::plain;
    return r;
  }

  template <class Real>
  MFGProblem<Real> stationary_problem() const {
    TorusGrid g(problem.d, problem.n);
    return MFGProblem<Real>(g, problem.hamiltonian, problem.coupling, problem.V.sample<Real>(g),
                            problem.phi.sample_density<Real>(g, "problem.phi"), problem.nu);
  }

  template <class Real>
  LinProblem<Real> linear_problem() const {
    TorusGrid g(problem.d, problem.n);
    GridVectorField<Real> b(g);
    for (int a = 0; a < problem.d; ++a) b[a] = GridField<Real>(g, Real(linear.b[std::size_t(a)]));
    return LinProblem<Real>(b, linear.f.sample<Real>(g));
  }

  template <class Real>
  TDProblem<Real> timedep_problem() const {
    SpaceTimeGrid g(timedep.nt, TorusGrid(problem.d, timedep.nx));
    auto v = timedep.V.sample<Real>(g.space());
    return TDProblem<Real>(g, problem.hamiltonian, problem.coupling, SpaceTimeField<Real>::constant_in_time(g, v),
                           timedep.m0.sample_density<Real>(g.space(), "timedep.m0"), timedep.uT.sample<Real>(g.space()),
                           timedep.k);
  }
};

namespace detail {

/// Typed access to one JSON object with path-qualified errors and a check
/// for unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(at(key), "must be finite");
    return x;
  }

  long long integer(const std::string& key, long long def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v.get<long long>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline FieldSeries read_series(const json& j, const std::string& path) {
  if (j.is_string()) {
    auto name = j.get<std::string>();
    if (name == "zero") return FieldSeries::zero();
    if (name == "uniform") return FieldSeries::uniform();
    if (name == "cosine") return FieldSeries::cosine(1.0);
    if (name == "half_cosine") return FieldSeries::cosine(0.5);
    throw ConfigError(path, "unknown preset '" + name + "' (zero, uniform, cosine, half_cosine)");
  }
  Reader r(j, path);
  FieldSeries s;
  s.constant = r.number("constant", 0.0);
  if (r.has("terms")) {
    const auto& arr = r.raw("terms");
    if (!arr.is_array()) throw ConfigError(r.at("terms"), "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      std::string tp = r.at("terms") + "[" + std::to_string(i) + "]";
      Reader t(arr[i], tp);
      FieldSeries::Term term;
      auto k = t.numbers("k", {0, 0});
      if (k.size() < 1 || k.size() > 2) throw ConfigError(t.at("k"), "expected one or two wavenumbers");
      for (std::size_t a = 0; a < k.size(); ++a) {
        if (k[a] != std::floor(k[a])) throw ConfigError(t.at("k"), "wavenumbers must be integers");
        term.k[a] = int(k[a]);
      }
      term.cos = t.number("cos", 0.0);
      term.sin = t.number("sin", 0.0);
      t.finish();
      s.terms.push_back(term);
    }
  }
  r.finish();
  return s;
}

inline void check_series_dim(const FieldSeries& s, int d, int n, const std::string& path) {
  for (const auto& t : s.terms) {
    if (d == 1 && t.k[1] != 0) throw ConfigError(path, "second wavenumber must be 0 when d = 1");
    for (int a = 0; a < d; ++a)
      if (std::abs(t.k[a]) >= n / 2) throw ConfigError(path, "wavenumber must satisfy |k| < n/2");
  }
}

inline std::vector<double> read_schedule(Reader& r, const std::string& key, std::vector<double> def) {
  if (!r.has(key)) return def;
  const auto& v = r.raw(key);
  std::vector<double> out;
  if (v.is_object()) {
    Reader g(v, r.at(key));
    double start = g.number("start", 1e-1), stop = g.number("stop", 1e-4);
    long long count = g.integer("count", 4);
    g.finish();
    if (count < 1) throw ConfigError(g.at("count"), "must be >= 1");
    if (!(start > 0 && stop > 0)) throw ConfigError(r.at(key), "start and stop must be positive");
    for (long long i = 0; i < count; ++i) {
      double t = count == 1 ? 0.0 : double(i) / double(count - 1);
      out.push_back(start * std::pow(stop / start, t));
    }
  } else {
    out = r.numbers(key, def);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::string p = r.at(key) + "[" + std::to_string(i) + "]";
    if (!(out[i] > 0.0 && out[i] < 1.0)) throw ConfigError(p, "epsilon must lie in (0, 1)");
    if (i > 0 && !(out[i] < out[i - 1])) throw ConfigError(p, "schedule must be strictly decreasing");
  }
  return out;
}

inline void read_picard(Reader& r, PicardOptions& o) {
  o.theta = r.number("theta", o.theta);
  o.tol = r.number("tol", o.tol);
  o.max_iter = int(r.integer("max_iter", o.max_iter));
  o.anderson_depth = int(r.integer("anderson_depth", o.anderson_depth));
  o.anderson_start = r.number("anderson_start", o.anderson_start);
  o.patience = int(r.integer("patience", o.patience));
  o.kkt_tol = r.number("kkt_tol", o.kkt_tol);
  try {
    o.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(r.where(), e.what());
  }
  if (!(o.kkt_tol > 0)) throw ConfigError(r.at("kkt_tol"), "must be positive");
}

inline void check_grid(int d, int n, const std::string& path) {
  try {
    TorusGrid g(d, n);
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace detail

inline const char* to_string(StationaryMethod m) {
  return m == StationaryMethod::continuation ? "continuation" : "picard";
}

/// Problem preset "baseline": d = 1, n = 64, alpha = 2, linear g, V = 0.5 cos 2 pi x, phi = 1.
inline RunConfig parse_config(const json& j) {
  using detail::Reader;
  RunConfig c;
  Reader root(j, "");
  long long ver = root.integer("schema_version", -1);
  if (ver != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
  c.command = root.string("command", c.command);
  static const std::set<std::string> commands{"solve-stationary", "sweep", "solve-linear", "solve-timedep", "verify"};
  if (!commands.count(c.command)) throw ConfigError("command", "unknown command '" + c.command + "'");
  long long seed = root.integer("seed", 1);
  if (seed < 0) throw ConfigError("seed", "must be >= 0");
  c.seed = std::uint64_t(seed);

  if (root.has("problem")) {
    Reader p(root.raw("problem"), "problem");
    std::string preset = p.string("preset", "baseline");
    if (preset != "baseline") throw ConfigError(p.at("preset"), "unknown preset '" + preset + "'");
    c.problem.d = int(p.integer("d", c.problem.d));
    c.problem.n = int(p.integer("n", c.problem.n));
    detail::check_grid(c.problem.d, c.problem.n, "problem");
    if (p.has("hamiltonian")) {
      Reader h(p.raw("hamiltonian"), "problem.hamiltonian");
      c.problem.hamiltonian.alpha = h.number("alpha", 2.0);
      auto sc = h.numbers("scale", {1.0, 1.0});
      if (sc.size() != 2) throw ConfigError(h.at("scale"), "expected two entries");
      c.problem.hamiltonian.scale = {sc[0], sc[1]};
      h.finish();
      if (!(c.problem.hamiltonian.alpha > 1.0))
        throw ConfigError(h.at("alpha"), "exponent must satisfy α > 1 (growth condition on H)");
      try {
        c.problem.hamiltonian.validate();
      } catch (const ValidationError& e) {
        throw ConfigError("problem.hamiltonian", e.what());
      }
    }
    if (p.has("coupling")) {
      Reader cp(p.raw("coupling"), "problem.coupling");
      std::string kind = cp.string("kind", "linear");
      if (kind == "linear")
        c.problem.coupling.kind = CouplingKind::linear;
      else if (kind == "power")
        c.problem.coupling.kind = CouplingKind::power;
      else if (kind == "entropy")
        c.problem.coupling.kind = CouplingKind::entropy;
      else
        throw ConfigError(cp.at("kind"), "unknown coupling '" + kind + "' (linear, power, entropy)");
      c.problem.coupling.gamma = cp.number("gamma", 1.0);
      cp.finish();
      try {
        c.problem.coupling.validate();
      } catch (const ValidationError& e) {
        throw ConfigError("problem.coupling.gamma", e.what());
      }
    }
    c.problem.nu = p.number("nu", 0.0);
    if (!(c.problem.nu >= 0.0)) throw ConfigError(p.at("nu"), "viscosity must be >= 0");
    if (p.has("V")) c.problem.V = detail::read_series(p.raw("V"), p.at("V"));
    if (p.has("phi")) c.problem.phi = detail::read_series(p.raw("phi"), p.at("phi"));
    p.finish();
  }
  detail::check_series_dim(c.problem.V, c.problem.d, c.problem.n, "problem.V");
  detail::check_series_dim(c.problem.phi, c.problem.d, c.problem.n, "problem.phi");

  if (root.has("solver")) {
    Reader s(root.raw("solver"), "solver");
    std::string m = s.string("method", "continuation");
    if (m == "continuation")
      c.solver.method = StationaryMethod::continuation;
    else if (m == "picard")
      c.solver.method = StationaryMethod::picard;
    else
      throw ConfigError(s.at("method"), "unknown method '" + m + "' (continuation, picard)");
    c.solver.k = int(s.integer("k", 0));
    if (c.solver.k < 0) throw ConfigError(s.at("k"), "order must be >= 1, or 0 for the default");
    c.solver.warm_start = s.boolean("warm_start", true);
    if (s.has("picard")) {
      Reader pr(s.raw("picard"), "solver.picard");
      detail::read_picard(pr, c.solver.picard);
      pr.finish();
    }
    if (s.has("newton")) {
      Reader nr(s.raw("newton"), "solver.newton");
      auto& nw = c.solver.continuation.newton;
      nw.tol = nr.number("tol", nw.tol);
      nw.path_tol = nr.number("path_tol", nw.path_tol);
      nw.max_iter = int(nr.integer("max_iter", nw.max_iter));
      nw.line_search = nr.boolean("line_search", nw.line_search);
      std::string pc = nr.string("preconditioner", "frozen_block");
      if (pc == "frozen_block")
        nw.preconditioner = Preconditioner::frozen_block;
      else if (pc == "reg_inverse")
        nw.preconditioner = Preconditioner::reg_inverse;
      else
        throw ConfigError(nr.at("preconditioner"), "unknown preconditioner '" + pc + "'");
      nr.finish();
      if (!(nw.tol > 0 && nw.path_tol > 0)) throw ConfigError("solver.newton", "tolerances must be positive");
      if (nw.max_iter < 1) throw ConfigError(nr.at("max_iter"), "must be >= 1");
    }
    if (s.has("lambda")) {
      Reader lr(s.raw("lambda"), "solver.lambda");
      auto& co = c.solver.continuation;
      co.initial_step = lr.number("initial_step", co.initial_step);
      co.min_step = lr.number("min_step", co.min_step);
      co.max_step = lr.number("max_step", co.max_step);
      lr.finish();
      if (!(co.min_step > 0 && co.min_step <= co.initial_step && co.initial_step <= co.max_step && co.max_step <= 1))
        throw ConfigError("solver.lambda", "need 0 < min_step <= initial_step <= max_step <= 1");
    }
    s.finish();
  }

  if (root.has("epsilon")) {
    c.epsilon = root.number("epsilon", c.epsilon);
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ConfigError("epsilon", "epsilon must lie in (0, 1)");
  }
  c.schedule = detail::read_schedule(root, "schedule", c.schedule);

  if (root.has("bank")) {
    Reader b(root.raw("bank"), "bank");
    c.bank_size = int(b.integer("size", c.bank_size));
    b.finish();
    if (c.bank_size < 0) throw ConfigError("bank.size", "must be >= 0");
  }

  if (root.has("linear")) {
    Reader l(root.raw("linear"), "linear");
    auto b = l.numbers("b", {0.3, 0.0});
    if (b.size() != 2) throw ConfigError(l.at("b"), "expected two entries");
    c.linear.b = {b[0], b[1]};
    if (l.has("f")) c.linear.f = detail::read_series(l.raw("f"), l.at("f"));
    if (l.has("methods")) {
      const auto& arr = l.raw("methods");
      if (!arr.is_array() || arr.empty()) throw ConfigError(l.at("methods"), "expected a non-empty array");
      c.linear.methods.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        std::string p = l.at("methods") + "[" + std::to_string(i) + "]";
        if (!arr[i].is_string()) throw ConfigError(p, "expected a string");
        auto name = arr[i].get<std::string>();
        if (name == "variational")
          c.linear.methods.push_back(LinMethod::variational);
        else if (name == "bilinear")
          c.linear.methods.push_back(LinMethod::bilinear);
        else if (name == "continuation")
          c.linear.methods.push_back(LinMethod::continuation);
        else
          throw ConfigError(p, "unknown method '" + name + "'");
      }
    }
    l.finish();
  }
  detail::check_series_dim(c.linear.f, c.problem.d, c.problem.n, "linear.f");

  if (root.has("timedep")) {
    Reader t(root.raw("timedep"), "timedep");
    c.timedep.nt = int(t.integer("nt", c.timedep.nt));
    c.timedep.nx = int(t.integer("nx", c.timedep.nx));
    c.timedep.k = int(t.integer("k", 0));
    if (c.timedep.nt < 8) throw ConfigError(t.at("nt"), "need at least 8 time nodes");
    detail::check_grid(c.problem.d, c.timedep.nx, "timedep.nx");
    if (c.timedep.k < 0) throw ConfigError(t.at("k"), "order must be >= 1, or 0 for the default");
    if (t.has("V")) c.timedep.V = detail::read_series(t.raw("V"), t.at("V"));
    if (t.has("m0")) c.timedep.m0 = detail::read_series(t.raw("m0"), t.at("m0"));
    if (t.has("uT")) c.timedep.uT = detail::read_series(t.raw("uT"), t.at("uT"));
    c.timedep.schedule = detail::read_schedule(t, "schedule", c.timedep.schedule);
    c.timedep.warm_start = t.boolean("warm_start", true);
    if (t.has("picard")) {
      Reader pr(t.raw("picard"), "timedep.picard");
      detail::read_picard(pr, c.timedep.picard);
      pr.finish();
    }
    t.finish();
  }
  for (const auto* s : {&c.timedep.V, &c.timedep.m0, &c.timedep.uT})
    detail::check_series_dim(*s, c.problem.d, c.timedep.nx, "timedep");

  if (root.has("output")) {
    Reader o(root.raw("output"), "output");
    c.output.dir = o.string("dir", "");
    c.output.stem = o.string("stem", c.output.stem);
    o.finish();
    if (c.output.stem.empty() || c.output.stem.find('/') != std::string::npos)
      throw ConfigError("output.stem", "must be a non-empty file name without '/'");
  }
  root.finish();

  // Module preconditions that depend on several fields: build each problem once.
  try {
    (void)c.stationary_problem<double>();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError("problem", e.what());
  }
  try {
    (void)c.timedep_problem<double>();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError("timedep", e.what());
  }
  if (c.command == "solve-linear") {
    try {
      (void)c.linear_problem<double>();
    } catch (const ValidationError& e) {
      throw ConfigError("linear", e.what());
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

/// The configuration as a JSON document, echoed into every report.
inline json to_json(const FieldSeries& s) {
  json j;
  j["constant"] = s.constant;
  json terms = json::array();
  for (const auto& t : s.terms) terms.push_back({{"k", {t.k[0], t.k[1]}}, {"cos", t.cos}, {"sin", t.sin}});
  j["terms"] = terms;
  return j;
}

inline json to_json(const PicardOptions& o) {
  return {{"theta", o.theta},         {"tol", o.tol},           {"max_iter", o.max_iter},
          {"anderson_depth", o.anderson_depth}, {"anderson_start", o.anderson_start},
          {"patience", o.patience},   {"kkt_tol", o.kkt_tol}};
}

inline const char* to_string(CouplingKind k) {
  switch (k) {
    case CouplingKind::linear: return "linear";
    case CouplingKind::power: return "power";
    case CouplingKind::entropy: return "entropy";
  }
  return "unknown";
}

inline json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["problem"] = {{"d", c.problem.d},
                  {"n", c.problem.n},
                  {"hamiltonian",
                   {{"alpha", c.problem.hamiltonian.alpha},
                    {"scale", {c.problem.hamiltonian.scale[0], c.problem.hamiltonian.scale[1]}}}},
                  {"coupling", {{"kind", to_string(c.problem.coupling.kind)}, {"gamma", c.problem.coupling.gamma}}},
                  {"nu", c.problem.nu},
                  {"V", to_json(c.problem.V)},
                  {"phi", to_json(c.problem.phi)}};
  const auto& nw = c.solver.continuation.newton;
  j["solver"] = {{"method", to_string(c.solver.method)},
                 {"k", c.reg(c.epsilon).k},
                 {"warm_start", c.solver.warm_start},
                 {"picard", to_json(c.solver.picard)},
                 {"newton",
                  {{"tol", nw.tol},
                   {"path_tol", nw.path_tol},
                   {"max_iter", nw.max_iter},
                   {"line_search", nw.line_search},
                   {"preconditioner", nw.preconditioner == Preconditioner::frozen_block ? "frozen_block" : "reg_inverse"}}},
                 {"lambda",
                  {{"initial_step", c.solver.continuation.initial_step},
                   {"min_step", c.solver.continuation.min_step},
                   {"max_step", c.solver.continuation.max_step}}}};
  j["epsilon"] = c.epsilon;
  j["schedule"] = c.schedule;
  j["bank"] = {{"size", c.bank_size}};
  json methods = json::array();
  for (auto m : c.linear.methods) methods.push_back(to_string(m));
  j["linear"] = {{"b", {c.linear.b[0], c.linear.b[1]}}, {"f", to_json(c.linear.f)}, {"methods", methods}};
  j["timedep"] = {{"nt", c.timedep.nt},
                  {"nx", c.timedep.nx},
                  {"k", c.timedep.k > 0 ? c.timedep.k : TDProblem<double>::default_k(c.problem.d)},
                  {"V", to_json(c.timedep.V)},
                  {"m0", to_json(c.timedep.m0)},
                  {"uT", to_json(c.timedep.uT)},
                  {"schedule", c.timedep.schedule},
                  {"warm_start", c.timedep.warm_start},
                  {"picard", to_json(c.timedep.picard)}};
  return j;
}

}  // namespace mmfg::cli
