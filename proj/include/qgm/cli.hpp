#pragma once

// qgm-sim command line: run, consensus, toy2d, trajectory, partition, topo,
// validate. CSV goes to --out (or stdout); summaries go to stdout when the CSV
// went to a file and to stderr otherwise. Exit codes: 0 ok, 1 usage/config
// error, 2 divergence.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qgm/analysis.hpp"
#include "qgm/consensus.hpp"
#include "qgm/engine/config.hpp"
#include "qgm/engine/engine.hpp"
#include "qgm/heterogeneity.hpp"
#include "qgm/optim.hpp"
#include "qgm/topology.hpp"

namespace qgm::cli {

enum class PlotKind { series, paths, partition };

/// Generic matplotlib script for a CSV written by one of the subcommands.
inline std::string plot_script(const std::string& csv_path, PlotKind kind) {
  std::string body;
  switch (kind) {
    case PlotKind::series:
      body =
          "x = df.columns[0]\n"
          "for col in df.columns[1:]:\n"
          "    plt.semilogy(df[x], df[col].abs() + 1e-300, label=col)\n"
          "plt.xlabel(x)\n";
      break;
    case PlotKind::paths:
      body =
          "xc, yc = ('xbar', 'ybar') if 'xbar' in df.columns else ('x', 'y')\n"
          "for name, g in df.groupby('method', sort=False):\n"
          "    plt.plot(g[xc], g[yc], marker='.', label=name)\n"
          "plt.xlabel(xc)\n"
          "plt.ylabel(yc)\n";
      break;
    case PlotKind::partition:
      body =
          "table = df.pivot(index='client', columns='class', values='count')\n"
          "table.plot.bar(stacked=True, ax=plt.gca())\n";
      break;
  }
  return fmt::format(
      "import sys\n"
      "import matplotlib.pyplot as plt\n"
      "import pandas as pd\n\n"
      "csv = sys.argv[1] if len(sys.argv) > 1 else '{}'\n"
      "df = pd.read_csv(csv)\n"
      "{}"
      "plt.legend()\n"
      "plt.tight_layout()\n"
      "plt.savefig(csv + '.png')\n",
      csv_path, body);
}

namespace detail {

/// Streams the CSV to `path` (or `out` when empty); returns the stream the
/// summary should go to.
class Output {
 public:
  Output(const std::string& path, std::ostream& out, std::ostream& err) : out_(out), err_(err) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ConfigError("cannot open output file '" + path + "'");
    }
  }
  std::ostream& csv() { return file_.is_open() ? file_ : out_; }
  std::ostream& summary() { return file_.is_open() ? out_ : err_; }

 private:
  std::ofstream file_;
  std::ostream& out_;
  std::ostream& err_;
};

inline void write_plot(const std::string& script, const std::string& csv_path, PlotKind kind) {
  if (script.empty()) return;
  if (csv_path.empty()) throw ConfigError("--plot-script needs --out");
  std::ofstream f(script);
  if (!f) throw ConfigError("cannot open plot script '" + script + "'");
  f << plot_script(csv_path, kind);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(engine::detail::trim(item));
  return out;
}

inline Vec parse_point(const std::string& s, const char* what) {
  const auto v = engine::detail::to_list(what, s);
  if (v.size() != 2) throw ConfigError(std::string(what) + " needs two comma-separated coordinates");
  return Vec{{v[0], v[1]}};
}

/// Registers --section.key for every schema key.
inline void add_overrides(CLI::App& cmd, std::map<std::string, std::string>& values) {
  for (const auto& e : engine::kSchema) {
    std::string names = "--" + std::string(e.key);
    if (e.key == "run.threads") names += ",--threads";
    if (e.key == "run.out") names += ",--out";
    if (e.key == "run.seed") names += ",--seed";
    cmd.add_option(names, values[std::string(e.key)], std::string(e.help));
  }
}

inline engine::RunConfig load_config(const std::string& path, CLI::App& cmd,
                                     const std::map<std::string, std::string>& values) {
  auto cfg = path.empty() ? engine::ConfigMap() : engine::ConfigMap::load(path);
  for (const auto& e : engine::kSchema) {
    const std::string key(e.key);
    if (cmd.count("--" + key) > 0) cfg.set(key, values.at(key));
  }
  return engine::build_config(cfg);
}

inline topology::GossipSchedule gossip_for(const std::string& kind, std::size_t n, const std::string& scheme,
                                           std::optional<std::size_t> rows) {
  const auto k = topology::parse_kind(kind);
  if (k == topology::Kind::one_peer_exponential) return topology::GossipSchedule::exponential(n);
  const auto g = topology::build_graph(k, n, {rows});
  return topology::GossipSchedule(topology::mixing_matrix(g, topology::parse_scheme(scheme)));
}

}  // namespace detail

inline int cmd_run(const engine::RunConfig& rc, const std::string& plot, std::ostream& out, std::ostream& err) {
  detail::Output o(rc.out, out, err);
  auto& csv = o.csv();
  csv << engine::kMetricsHeader << '\n';
  const auto result = engine::run(rc, [&](const engine::MetricsRecord& r) {
    csv << engine::to_csv_row(r) << '\n';
    if (rc.verbose) {
      std::string line = fmt::format("step {} worker losses:", r.step);
      for (double l : r.worker_losses) line += fmt::format(" {}", l);
      err << line << '\n';
    }
  });
  csv.flush();
  detail::write_plot(plot, rc.out, PlotKind::series);
  const auto problem = engine::make_problem(rc);
  std::vector<Vec> xs;
  for (const auto& s : result.states) xs.push_back(s.x);
  o.summary() << fmt::format("final loss {} consensus_dist {}\n", problem.global(result.xbar).loss,
                             consensus::consensus_distance(optim::stack_columns(xs)));
  return 0;
}

inline int cmd_validate(const engine::RunConfig& rc, std::ostream& out) {
  const auto gossip = engine::make_gossip(rc);
  const auto problem = engine::make_problem(rc);
  const double rho = gossip.rho();
  out << fmt::format("config ok: problem {} method {} topology {} n={} rho={}\n", oracles::to_string(problem.kind()),
                     optim::to_string(rc.method), topology::to_string(rc.topology.kind), rc.topology.n, rho);
  const auto report = engine::validate_convergence_conditions(rc.hp, rho, rc.topology.n, problem.sigma2(), rc.steps);
  out << report.message() << '\n';
  return 0;
}

struct ConsensusArgs {
  std::string topology = "ring";
  std::size_t n = 16;
  std::string scheme = "mh";
  std::optional<std::size_t> rows;
  double beta = 0.9;
  double mu = 0.9;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  long dim = 16;
  std::string out;
  double tol = 1e-2;
};

inline int cmd_consensus(const ConsensusArgs& a, const std::string& plot, std::ostream& out, std::ostream& err) {
  const auto w = detail::gossip_for(a.topology, a.n, a.scheme, a.rows);
  const Mat x0 = consensus::gaussian_init(a.dim, static_cast<Eigen::Index>(a.n), a.seed);
  const auto g = consensus::gossip_consensus(x0, w, a.steps);
  const auto q = consensus::qg_consensus(x0, w, a.beta, a.mu, a.steps);
  detail::Output o(a.out, out, err);
  auto& csv = o.csv();
  csv << "iter,dist_gossip,dist_qg,mean_drift_qg\n";
  for (std::size_t t = 0; t <= a.steps; ++t)
    csv << fmt::format("{},{},{},{}\n", t, g.distance[t], q.distance[t], q.mean_drift[t]);
  csv.flush();
  detail::write_plot(plot, a.out, PlotKind::series);
  auto show = [](std::optional<std::size_t> v) { return v ? std::to_string(*v) : std::string("not reached"); };
  o.summary() << fmt::format("iterations to {}: gossip {} qg {}\n", a.tol, show(consensus::iterations_to(g.distance, a.tol)),
                             show(consensus::iterations_to(q.distance, a.tol)));
  return 0;
}

struct Toy2dArgs {
  std::vector<std::string> methods{"dsgd", "dsgdm", "qg_dsgdm"};
  double eta = 0.1;
  double beta = 0.9;
  std::optional<double> mu;
  long steps = 60;
  double magnitude = 1.0;
  std::string out;
};

struct Toy2dTrace {
  std::string method;
  std::vector<std::array<Vec, 2>> workers;  // per step, step 0 included
  std::vector<Vec> mean;
};

/// Two agents with targets (0,5) and (4,0) from (0,0), exact averaging each step.
inline Toy2dTrace toy2d_trace(const std::string& method, const Toy2dArgs& a) {
  engine::ConfigMap cfg;
  cfg.set("problem.kind", "toy2d");
  cfg.set("topology.kind", "complete");
  cfg.set("topology.n", "2");
  cfg.set("optim.kind", method);
  cfg.set("optim.eta", fmt::format("{}", a.eta));
  cfg.set("optim.beta", fmt::format("{}", a.beta));
  if (a.mu) cfg.set("optim.mu", fmt::format("{}", *a.mu));
  cfg.set("problem.magnitude", fmt::format("{}", a.magnitude));
  cfg.set("run.steps", std::to_string(a.steps));
  cfg.set("run.metrics_every", std::to_string(a.steps));
  const auto rc = engine::build_config(cfg);
  Toy2dTrace tr;
  tr.method = method;
  const Vec x0 = engine::initial_point(rc);
  tr.workers.push_back({x0, x0});
  tr.mean.push_back(x0);
  engine::run(rc, {}, [&](long, const std::vector<optim::WorkerState>& s) {
    tr.workers.push_back({s[0].x, s[1].x});
    tr.mean.push_back(optim::average_x(s));
  });
  return tr;
}

inline int cmd_toy2d(const Toy2dArgs& a, const std::string& plot, std::ostream& out, std::ostream& err) {
  std::vector<Toy2dTrace> traces;
  for (const auto& m : a.methods) traces.push_back(toy2d_trace(m, a));
  detail::Output o(a.out, out, err);
  auto& csv = o.csv();
  csv << "method,step,x1,y1,x2,y2,xbar,ybar\n";
  for (const auto& tr : traces)
    for (std::size_t t = 0; t < tr.mean.size(); ++t)
      csv << fmt::format("{},{},{},{},{},{},{},{}\n", tr.method, t, tr.workers[t][0](0), tr.workers[t][0](1),
                         tr.workers[t][1](0), tr.workers[t][1](1), tr.mean[t](0), tr.mean[t](1));
  csv.flush();
  detail::write_plot(plot, a.out, PlotKind::paths);
  const Vec center{{2.0, 2.5}};
  for (const auto& tr : traces)
    o.summary() << fmt::format("{} heading_change {} overshoot {}\n", tr.method, analysis::heading_change_sum(tr.mean),
                               analysis::max_overshoot(tr.mean, tr.mean.front(), center));
  return 0;
}

struct TrajectoryArgs {
  std::string problem = "rosenbrock";
  std::vector<std::string> methods{"sgdm", "s_qg_dsgdm"};
  double eta = 0.001;
  double beta = 0.9;
  std::optional<double> mu;
  long steps = 10000;
  std::string init = "0,0";
  double a = 8.0;
  double b = 10.0;
  std::string out;
};

inline optim::Method trajectory_method(const std::string& name) {
  if (name == "sgdm") return optim::Method::dsgdm;
  if (name == "s_qg_dsgdm") return optim::Method::qg_dsgdm;
  if (name == "sgdm_n") return optim::Method::dsgdm_n;
  if (name == "qhm") return optim::Method::qhm;
  throw ConfigError("trajectory method must be one of sgdm, s_qg_dsgdm, sgdm_n, qhm (got '" + name + "')");
}

/// Deterministic single-worker path, initial point included.
inline std::vector<Vec> trajectory(const std::string& method, const TrajectoryArgs& a) {
  const auto kind = oracles::parse_problem_kind(a.problem);
  std::optional<oracles::Problem> problem;
  if (kind == oracles::ProblemKind::rosenbrock) problem.emplace(oracles::Rosenbrock{}, 1);
  else if (kind == oracles::ProblemKind::nonconvex_toy) problem.emplace(oracles::NonconvexToy{a.a, a.b}, 1);
  else throw ConfigError("trajectory problem must be rosenbrock or nonconvex_toy");
  optim::HyperParams hp;
  hp.eta = a.eta;
  hp.beta = a.beta;
  hp.mu = a.mu.value_or(a.beta);
  try {
    hp.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  const auto m = trajectory_method(method);
  const auto w = topology::MixingMatrix::identity(1);
  auto states = optim::make_states(1, detail::parse_point(a.init, "--init"));
  std::vector<Vec> path{states[0].x};
  for (long t = 1; t <= a.steps; ++t) {
    const std::vector<Vec> g{problem->gradient(0, states[0].x).grad};
    states = optim::network_step(m, std::move(states), g, w, hp, t);
    if (!states[0].finite()) throw DivergenceError(method, t);
    path.push_back(states[0].x);
  }
  return path;
}

inline int cmd_trajectory(const TrajectoryArgs& a, const std::string& plot, std::ostream& out, std::ostream& err) {
  std::vector<std::vector<Vec>> paths;
  for (const auto& m : a.methods) paths.push_back(trajectory(m, a));
  detail::Output o(a.out, out, err);
  auto& csv = o.csv();
  csv << "method,step,x,y\n";
  for (std::size_t k = 0; k < paths.size(); ++k)
    for (std::size_t t = 0; t < paths[k].size(); ++t)
      csv << fmt::format("{},{},{},{}\n", a.methods[k], t, paths[k][t](0), paths[k][t](1));
  csv.flush();
  detail::write_plot(plot, a.out, PlotKind::paths);
  for (std::size_t k = 0; k < paths.size(); ++k)
    o.summary() << fmt::format("{} end ({}, {}) heading_change {}\n", a.methods[k], paths[k].back()(0),
                               paths[k].back()(1), analysis::heading_change_sum(paths[k]));
  return 0;
}

struct PartitionArgs {
  std::size_t n = 16;
  double alpha = 1.0;
  std::size_t classes = 10;
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  std::string format = "long";  // long: client,class,count; matrix: one row per client
  std::string out;
};

inline int cmd_partition(const PartitionArgs& a, const std::string& plot, std::ostream& out, std::ostream& err) {
  const auto labels = heterogeneity::balanced_labels(a.samples, a.classes);
  const auto part = heterogeneity::dirichlet_partition(labels, a.n, a.alpha, a.seed);
  const auto stats = heterogeneity::partition_stats(part, labels);
  detail::Output o(a.out, out, err);
  auto& csv = o.csv();
  if (a.format == "matrix") {
    csv << "client";
    for (int k : stats.classes) csv << ",class_" << k;
    csv << '\n';
    for (std::size_t c = 0; c < a.n; ++c) {
      csv << c;
      for (auto v : stats.counts[c]) csv << ',' << v;
      csv << '\n';
    }
  } else {
    csv << "client,class,count\n";
    for (std::size_t c = 0; c < a.n; ++c)
      for (std::size_t k = 0; k < stats.classes.size(); ++k)
        csv << fmt::format("{},{},{}\n", c, stats.classes[k], stats.counts[c][k]);
  }
  csv.flush();
  if (a.format == "long") detail::write_plot(plot, a.out, PlotKind::partition);
  if (!a.out.empty()) o.summary() << fmt::format("{} samples over {} clients\n", part.total(), a.n);
  return 0;
}

struct TopoArgs {
  std::string kind;
  std::size_t n = 0;
  std::string scheme = "mh";
  std::optional<std::size_t> rows;
  std::size_t t = 0;
  std::string out;
};

inline int cmd_topo(const TopoArgs& a, std::ostream& out, std::ostream& err) {
  const auto k = topology::parse_kind(a.kind);
  const auto gossip = detail::gossip_for(a.kind, a.n, a.scheme, a.rows);
  const auto w = gossip.at(a.t);
  detail::Output o(a.out, out, err);
  auto& csv = o.csv();
  for (Eigen::Index i = 0; i < w.weights().rows(); ++i) {
    for (Eigen::Index j = 0; j < w.weights().cols(); ++j) csv << (j ? "," : "") << fmt::format("{}", w(i, j));
    csv << '\n';
  }
  csv.flush();
  if (k == topology::Kind::one_peer_exponential)
    o.summary() << fmt::format("rho {} (round {}: {})\n", gossip.rho(), a.t, w.rho());
  else
    o.summary() << fmt::format("rho {}\n", w.rho());
  return 0;
}

/// Parses argv and dispatches. Never calls std::exit.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decentralized optimization simulator with quasi-global momentum", "qgm-sim"};
  app.require_subcommand(1);
  std::string plot;

  std::string config_path;
  std::map<std::string, std::string> run_values;
  auto* run = app.add_subcommand("run", "Run a configured training experiment, metrics CSV to --out");
  run->add_option("config", config_path, "config file")->check(CLI::ExistingFile);
  detail::add_overrides(*run, run_values);
  run->add_option("--plot-script", plot, "write a plotting script for the CSV");

  std::string validate_path;
  std::map<std::string, std::string> validate_values;
  auto* validate = app.add_subcommand("validate", "Check a config and report the momentum/spectral-gap condition");
  validate->add_option("config", validate_path, "config file")->check(CLI::ExistingFile);
  detail::add_overrides(*validate, validate_values);

  ConsensusArgs ca;
  std::size_t ca_rows = 0;
  auto* cons = app.add_subcommand("consensus", "Gossip vs quasi-global consensus averaging");
  cons->add_option("--topology", ca.topology, "topology kind")->capture_default_str();
  cons->add_option("--n", ca.n, "workers")->capture_default_str();
  cons->add_option("--scheme", ca.scheme, "mh | uniform")->capture_default_str();
  cons->add_option("--rows", ca_rows, "torus rows");
  cons->add_option("--beta", ca.beta)->capture_default_str();
  cons->add_option("--mu", ca.mu)->capture_default_str();
  cons->add_option("--T", ca.steps, "iterations")->capture_default_str();
  cons->add_option("--seed", ca.seed)->capture_default_str();
  cons->add_option("--dim", ca.dim, "rows of X0")->capture_default_str();
  cons->add_option("--tol", ca.tol, "distance reported in the summary")->capture_default_str();
  cons->add_option("--out", ca.out);
  cons->add_option("--plot-script", plot);

  Toy2dArgs ta;
  double ta_mu = 0.0;
  std::string ta_methods = "dsgd,dsgdm,qg_dsgdm";
  auto* toy = app.add_subcommand("toy2d", "Two-agent heterogeneous toy with exact averaging");
  toy->add_option("--methods", ta_methods, "comma-separated optimizers")->capture_default_str();
  toy->add_option("--eta", ta.eta)->capture_default_str();
  toy->add_option("--beta", ta.beta)->capture_default_str();
  toy->add_option("--mu", ta_mu, "default: beta");
  toy->add_option("--steps", ta.steps)->capture_default_str();
  toy->add_option("--magnitude", ta.magnitude)->capture_default_str();
  toy->add_option("--out", ta.out);
  toy->add_option("--plot-script", plot);

  TrajectoryArgs ra;
  double ra_mu = 0.0;
  std::string ra_methods = "sgdm,s_qg_dsgdm";
  auto* traj = app.add_subcommand("trajectory", "Single-worker optimizer paths on 2-D test functions");
  traj->add_option("--problem", ra.problem, "rosenbrock | nonconvex_toy")->capture_default_str();
  traj->add_option("--methods", ra_methods, "subset of sgdm,s_qg_dsgdm,sgdm_n,qhm")->capture_default_str();
  traj->add_option("--eta", ra.eta)->capture_default_str();
  traj->add_option("--beta", ra.beta)->capture_default_str();
  traj->add_option("--mu", ra_mu, "default: beta");
  traj->add_option("--steps", ra.steps)->capture_default_str();
  traj->add_option("--init", ra.init, "x,y")->capture_default_str();
  traj->add_option("--a", ra.a, "nonconvex_toy frequency")->capture_default_str();
  traj->add_option("--b", ra.b, "nonconvex_toy weight")->capture_default_str();
  traj->add_option("--out", ra.out);
  traj->add_option("--plot-script", plot);

  PartitionArgs pa;
  auto* parti = app.add_subcommand("partition", "Dirichlet class partition, long-format counts");
  parti->add_option("--n", pa.n, "clients")->capture_default_str();
  parti->add_option("--alpha", pa.alpha, "concentration")->capture_default_str();
  parti->add_option("--classes", pa.classes)->capture_default_str();
  parti->add_option("--samples", pa.samples)->capture_default_str();
  parti->add_option("--seed", pa.seed)->capture_default_str();
  parti->add_option("--format", pa.format, "long | matrix")
      ->check(CLI::IsMember({"long", "matrix"}))
      ->capture_default_str();
  parti->add_option("--out", pa.out);
  parti->add_option("--plot-script", plot);

  TopoArgs oa;
  std::size_t oa_rows = 0;
  auto* topo = app.add_subcommand("topo", "Print a mixing matrix as CSV and its spectral gap");
  topo->add_option("kind,--kind", oa.kind, "ring | torus | complete | social | star | one_peer_exponential")
      ->required();
  topo->add_option("n,--n", oa.n, "workers")->required();
  topo->add_option("--scheme", oa.scheme, "mh | uniform")->capture_default_str();
  topo->add_option("--rows", oa_rows, "torus rows");
  topo->add_option("--t", oa.t, "round index (one_peer_exponential)")->capture_default_str();
  topo->add_option("--out", oa.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(detail::load_config(config_path, *run, run_values), plot, out, err);
    if (*validate) return cmd_validate(detail::load_config(validate_path, *validate, validate_values), out);
    if (*cons) {
      if (cons->count("--rows")) ca.rows = ca_rows;
      return cmd_consensus(ca, plot, out, err);
    }
    if (*toy) {
      if (toy->count("--mu")) ta.mu = ta_mu;
      ta.methods = detail::split(ta_methods, ',');
      return cmd_toy2d(ta, plot, out, err);
    }
    if (*traj) {
      if (traj->count("--mu")) ra.mu = ra_mu;
      ra.methods = detail::split(ra_methods, ',');
      return cmd_trajectory(ra, plot, out, err);
    }
    if (*parti) return cmd_partition(pa, plot, out, err);
    if (*topo) {
      if (topo->count("--rows")) oa.rows = oa_rows;
      return cmd_topo(oa, out, err);
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace qgm::cli
