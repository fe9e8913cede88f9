#pragma once

// Run configuration: a flat, sectioned key = value file
//
//   [problem]   kind, dim, sigma, zeta, lambda_min, lambda_max, init, targets, ...
//   [topology]  kind, n, scheme          [torus] rows
//   [optim]     kind, eta, beta, mu, ...
//   [schedule]  kind, warmup_fraction, warmup_start, milestones, decay_factor
//   [run]       steps, seed, metrics_every, steps_per_epoch, threads, out
//
// Every key is addressable as "section.key"; the CLI accepts the same names as
// --section.key overrides. kSchema lists all keys with their defaults.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qgm/core.hpp"
#include "qgm/engine/schedule.hpp"
#include "qgm/oracles.hpp"
#include "qgm/optim/state.hpp"
#include "qgm/topology.hpp"

namespace qgm::engine {

struct SchemaEntry {
  std::string_view key;
  std::string_view default_value;  // empty: unset / derived
  std::string_view help;
};

inline constexpr SchemaEntry kSchema[] = {
    {"problem.kind", "", "toy2d_hetero | rosenbrock | nonconvex_toy | quadratic (required)"},
    {"problem.dim", "10", "quadratic: parameter dimension"},
    {"problem.sigma", "0", "quadratic: per-coordinate gradient noise std"},
    {"problem.zeta", "0", "quadratic: heterogeneity magnitude of the b_i perturbations"},
    {"problem.lambda_min", "0.1", "quadratic: smallest Hessian eigenvalue"},
    {"problem.lambda_max", "1", "quadratic: largest Hessian eigenvalue (L)"},
    {"problem.seed", "", "seed of the problem instance (default: run.seed)"},
    {"problem.init", "", "initial point, comma separated (default: problem specific)"},
    {"problem.targets", "0,5;4,0", "toy2d: per-worker targets, ';' separated"},
    {"problem.magnitude", "1", "toy2d: gradient magnitude"},
    {"problem.a", "8", "nonconvex_toy: frequency a"},
    {"problem.b", "10", "nonconvex_toy: weight b"},
    {"topology.kind", "ring", "ring | torus | complete | social | star | one_peer_exponential"},
    {"topology.n", "4", "number of workers"},
    {"topology.scheme", "mh", "mh | uniform"},
    {"torus.rows", "", "torus row count (default: most square factorisation)"},
    {"optim.kind", "", "optimizer (required)"},
    {"optim.eta", "0.1", "base learning rate"},
    {"optim.beta", "0.9", "momentum"},
    {"optim.mu", "", "quasi-global averaging (default: beta)"},
    {"optim.beta1", "0.9", "Adam first moment"},
    {"optim.beta2", "0.99", "Adam second moment"},
    {"optim.epsilon", "1e-8", "Adam epsilon"},
    {"optim.tau", "1", "local steps (quasi-global buffer refresh period, MimeLite local steps)"},
    {"optim.slowmo_alpha", "1", "SlowMo outer learning rate"},
    {"optim.slowmo_beta", "0.7", "SlowMo slow momentum"},
    {"optim.slowmo_tau", "12", "SlowMo inner steps"},
    {"optim.slowmo_base", "dsgdm", "SlowMo base optimizer"},
    {"optim.dmsgd_option", "II", "DMSGD option: I | II"},
    {"schedule.kind", "constant", "constant | warmup_stage"},
    {"schedule.warmup_fraction", "0.05", "fraction of the run spent warming up"},
    {"schedule.warmup_start", "0.1", "warm-up starting learning rate"},
    {"schedule.milestones", "0.5,0.75", "decay milestones as fractions of the run"},
    {"schedule.decay_factor", "10", "divisor applied at each milestone"},
    {"run.steps", "1000", "number of steps (outer rounds for slowmo and mimelite)"},
    {"run.seed", "1", "master seed"},
    {"run.metrics_every", "10", "metrics cadence in steps"},
    {"run.steps_per_epoch", "50", "steps per epoch (epoch column)"},
    {"run.threads", "1", "worker threads for gradient evaluation"},
    {"run.out", "", "metrics CSV path (default: stdout)"},
    {"run.verbose", "false", "also report per-worker losses"},
};

inline bool is_known_key(std::string_view key) {
  for (const auto& e : kSchema)
    if (e.key == key) return true;
  return false;
}

/// Raw "section.key" -> value map with defaults filled in.
class ConfigMap {
 public:
  ConfigMap() {
    for (const auto& e : kSchema)
      if (!e.default_value.empty()) values_[std::string(e.key)] = std::string(e.default_value);
  }

  static ConfigMap parse(std::istream& in) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
    }
    ConfigMap out;
    for (const auto& [section, body] : tree) {
      if (body.empty() && !body.data().empty())
        throw ConfigError("config key '" + section + "' is outside any [section]");
      for (const auto& [key, value] : body) out.set(section + "." + key, value.data());
    }
    return out;
  }

  static ConfigMap parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static ConfigMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    return parse(in);
  }

  void set(const std::string& key, const std::string& value) {
    if (!is_known_key(key)) throw ConfigError("unknown config field '" + key + "'");
    values_[key] = value;
  }

  bool has(const std::string& key) const {
    auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("missing required config field '" + key + "'");
    return it->second;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("config field '" + key + "': expected a number, got '" + std::string(text) + "'");
  return v;
}

inline long to_long(const std::string& key, std::string_view text) {
  const std::string t = trim(text);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("config field '" + key + "': expected an integer, got '" + std::string(text) + "'");
  return v;
}

inline std::vector<double> to_list(const std::string& key, std::string_view text, char sep = ',') {
  std::vector<double> out;
  std::size_t start = 0;
  const std::string t = trim(text);
  if (t.empty()) return out;
  while (start <= t.size()) {
    const auto end = t.find(sep, start);
    out.push_back(to_double(key, std::string_view(t).substr(start, end == std::string::npos ? end : end - start)));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

inline bool to_bool(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("config field '" + key + "': expected a boolean, got '" + text + "'");
}

}  // namespace detail

struct ProblemConfig {
  oracles::ProblemKind kind = oracles::ProblemKind::quadratic_family;
  oracles::QuadraticOptions quadratic;
  std::vector<Vec> targets;
  double magnitude = 1.0;
  double a = 8.0;
  double b = 10.0;
  std::optional<Vec> init;
};

struct TopologyConfig {
  topology::Kind kind = topology::Kind::ring;
  std::size_t n = 4;
  topology::Scheme scheme = topology::Scheme::metropolis_hastings;
  std::optional<std::size_t> torus_rows;
};

struct RunConfig {
  ProblemConfig problem;
  TopologyConfig topology;
  optim::Method method = optim::Method::dsgd;
  optim::HyperParams hp;
  LrSchedule schedule;
  long steps = 1000;
  std::uint64_t seed = 1;
  long metrics_every = 10;
  long steps_per_epoch = 50;
  int threads = 1;
  std::string out;
  bool verbose = false;
};

inline RunConfig build_config(const ConfigMap& cfg) {
  using namespace detail;
  auto num = [&](const char* key) { return to_double(key, cfg.get(key)); };
  auto integer = [&](const char* key) { return to_long(key, cfg.get(key)); };

  RunConfig rc;
  rc.seed = static_cast<std::uint64_t>(integer("run.seed"));
  rc.steps = integer("run.steps");
  rc.metrics_every = integer("run.metrics_every");
  rc.steps_per_epoch = integer("run.steps_per_epoch");
  rc.threads = static_cast<int>(integer("run.threads"));
  rc.out = cfg.has("run.out") ? cfg.get("run.out") : std::string();
  rc.verbose = to_bool("run.verbose", cfg.get("run.verbose"));
  if (rc.steps < 1) throw ConfigError("config field 'run.steps' must be >= 1");
  if (rc.metrics_every < 1) throw ConfigError("config field 'run.metrics_every' must be >= 1");
  if (rc.steps_per_epoch < 1) throw ConfigError("config field 'run.steps_per_epoch' must be >= 1");
  if (rc.threads < 1) throw ConfigError("config field 'run.threads' must be >= 1");

  auto& p = rc.problem;
  p.kind = oracles::parse_problem_kind(trim(cfg.get("problem.kind")));
  p.quadratic.dim = static_cast<std::size_t>(integer("problem.dim"));
  p.quadratic.sigma = num("problem.sigma");
  p.quadratic.zeta = num("problem.zeta");
  p.quadratic.lambda_min = num("problem.lambda_min");
  p.quadratic.lambda_max = num("problem.lambda_max");
  p.quadratic.seed = cfg.has("problem.seed") ? static_cast<std::uint64_t>(integer("problem.seed")) : rc.seed;
  p.magnitude = num("problem.magnitude");
  p.a = num("problem.a");
  p.b = num("problem.b");
  {
    const std::string t = cfg.get("problem.targets");
    std::size_t start = 0;
    while (start <= t.size()) {
      const auto end = t.find(';', start);
      const auto coords = to_list("problem.targets", t.substr(start, end == std::string::npos ? end : end - start));
      if (coords.size() != 2) throw ConfigError("config field 'problem.targets': each target needs two coordinates");
      p.targets.push_back(Vec{{coords[0], coords[1]}});
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  if (cfg.has("problem.init")) {
    const auto coords = to_list("problem.init", cfg.get("problem.init"));
    p.init = Vec::Map(coords.data(), static_cast<Eigen::Index>(coords.size()));
  }

  auto& t = rc.topology;
  t.kind = topology::parse_kind(trim(cfg.get("topology.kind")));
  const long n = integer("topology.n");
  if (n < 1) throw ConfigError("config field 'topology.n' must be >= 1");
  t.n = static_cast<std::size_t>(n);
  t.scheme = topology::parse_scheme(trim(cfg.get("topology.scheme")));
  if (cfg.has("torus.rows")) t.torus_rows = static_cast<std::size_t>(integer("torus.rows"));
  p.quadratic.workers = t.n;

  rc.method = optim::parse_method(trim(cfg.get("optim.kind")));
  auto& hp = rc.hp;
  hp.eta = num("optim.eta");
  hp.beta = num("optim.beta");
  hp.mu = cfg.has("optim.mu") ? num("optim.mu") : hp.beta;
  hp.beta1 = num("optim.beta1");
  hp.beta2 = num("optim.beta2");
  hp.epsilon = num("optim.epsilon");
  hp.tau = static_cast<int>(integer("optim.tau"));
  hp.slowmo_alpha = num("optim.slowmo_alpha");
  hp.slowmo_beta = num("optim.slowmo_beta");
  hp.slowmo_tau = static_cast<int>(integer("optim.slowmo_tau"));
  hp.slowmo_base = optim::parse_local_kind(trim(cfg.get("optim.slowmo_base")));
  {
    const auto opt = trim(cfg.get("optim.dmsgd_option"));
    if (opt == "I" || opt == "1") hp.dmsgd_option = optim::DmsgdOption::I;
    else if (opt == "II" || opt == "2") hp.dmsgd_option = optim::DmsgdOption::II;
    else throw ConfigError("config field 'optim.dmsgd_option' must be I or II");
  }
  try {
    hp.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("optim: ") + e.what());
  }

  auto& s = rc.schedule;
  const auto skind = trim(cfg.get("schedule.kind"));
  if (skind == "constant") s.kind = ScheduleKind::constant;
  else if (skind == "warmup_stage") s.kind = ScheduleKind::warmup_stage;
  else throw ConfigError("config field 'schedule.kind' must be constant or warmup_stage");
  s.base = hp.eta;
  s.warmup_fraction = num("schedule.warmup_fraction");
  s.warmup_start = num("schedule.warmup_start");
  s.milestones = to_list("schedule.milestones", cfg.has("schedule.milestones") ? cfg.get("schedule.milestones") : "");
  s.decay_factor = num("schedule.decay_factor");
  s.validate();

  if (rc.method == optim::Method::qhm && t.n != 1) throw ConfigError("optim.kind = qhm is single-worker: topology.n must be 1");
  if (p.kind == oracles::ProblemKind::toy2d_hetero && p.targets.size() != t.n)
    throw ConfigError("problem.targets: toy2d needs one target per worker (topology.n = " + std::to_string(t.n) + ")");
  if (p.init) {
    const auto want = p.kind == oracles::ProblemKind::quadratic_family ? static_cast<Eigen::Index>(p.quadratic.dim) : 2;
    if (p.init->size() != want) throw ConfigError("config field 'problem.init' has the wrong dimension");
  }
  return rc;
}

inline oracles::Problem make_problem(const RunConfig& rc) {
  const auto& p = rc.problem;
  switch (p.kind) {
    case oracles::ProblemKind::toy2d_hetero: {
      oracles::Toy2d toy;
      toy.targets = p.targets;
      toy.magnitude = p.magnitude;
      return oracles::Problem(toy, rc.topology.n);
    }
    case oracles::ProblemKind::rosenbrock: return oracles::Problem(oracles::Rosenbrock{}, rc.topology.n);
    case oracles::ProblemKind::nonconvex_toy:
      return oracles::Problem(oracles::NonconvexToy{p.a, p.b}, rc.topology.n);
    case oracles::ProblemKind::quadratic_family:
      return oracles::Problem(oracles::make_quadratic_family(p.quadratic), rc.topology.n);
  }
  throw ConfigError("unknown problem kind");
}

inline Vec initial_point(const RunConfig& rc) {
  if (rc.problem.init) return *rc.problem.init;
  switch (rc.problem.kind) {
    case oracles::ProblemKind::nonconvex_toy: return Vec{{-2.0, 0.0}};
    case oracles::ProblemKind::quadratic_family: return Vec::Zero(static_cast<Eigen::Index>(rc.problem.quadratic.dim));
    default: return Vec::Zero(2);
  }
}

inline topology::GossipSchedule make_gossip(const RunConfig& rc) {
  const auto& t = rc.topology;
  if (t.kind == topology::Kind::one_peer_exponential) return topology::GossipSchedule::exponential(t.n);
  const auto graph = topology::build_graph(t.kind, t.n, {t.torus_rows});
  return topology::GossipSchedule(topology::mixing_matrix(graph, t.scheme));
}

}  // namespace qgm::engine
