#pragma once

// Training loop. Each step: sample gradients (parallel over workers),
// apply the method's half step, gossip, update buffers, log metrics at x-bar.

#include <fmt/format.h>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qgm/consensus.hpp"
#include "qgm/engine/config.hpp"
#include "qgm/engine/parallel.hpp"
#include "qgm/engine/schedule.hpp"
#include "qgm/optim.hpp"
#include "qgm/random.hpp"

namespace qgm::engine {

inline constexpr std::string_view kMetricsHeader =
    "step,epoch,lr,loss,grad_norm,consensus_dist,weight_norm,eff_stepsize";

struct MetricsRecord {
  long step = 0;
  double epoch = 0.0;
  double lr = 0.0;
  double loss = 0.0;          // f(x-bar)
  double grad_norm = 0.0;     // ||grad f(x-bar)||
  double consensus_dist = 0.0;
  double weight_norm = 0.0;   // ||x-bar||
  double eff_stepsize = 0.0;  // lr / ||x-bar||^2, inf when x-bar = 0
  std::vector<double> worker_losses;  // filled when run.verbose is set
};

inline std::string to_csv_row(const MetricsRecord& r) {
  return fmt::format("{},{},{},{},{},{},{},{}", r.step, r.epoch, r.lr, r.loss, r.grad_norm, r.consensus_dist,
                     r.weight_norm, r.eff_stepsize);
}

inline double effective_stepsize(double lr, const Vec& xbar) {
  const double sq = xbar.squaredNorm();
  return sq > 0.0 ? lr / sq : std::numeric_limits<double>::infinity();
}

struct ConvergenceReport {
  double lhs = 0.0;  // beta / (1 - beta)
  double rhs = 0.0;  // rho / 21
  bool satisfied = false;
  std::optional<double> suggested_eta;  // sqrt(n / (sigma^2 T)) when sigma^2 > 0

  std::string message() const {
    std::string out = satisfied ? fmt::format("momentum condition holds: beta/(1-beta) = {} <= rho/21 = {}", lhs, rhs)
                                : fmt::format("warning: momentum condition violated: beta/(1-beta) = {} > rho/21 = {}"
                                              " (informational, the run proceeds)",
                                              lhs, rhs);
    if (suggested_eta) out += fmt::format("\nsuggested eta scale sqrt(n/(sigma^2 T)) = {}", *suggested_eta);
    return out;
  }
};

/// Checks beta/(1-beta) <= rho/21. Equality is accepted up to a relative 1e-12
/// so that beta = rho/(21 + rho) counts as satisfied.
inline ConvergenceReport validate_convergence_conditions(const optim::HyperParams& hp, double rho, std::size_t n = 0,
                                                 std::optional<double> sigma2 = std::nullopt, long steps = 0) {
  ConvergenceReport r;
  r.lhs = hp.beta / (1.0 - hp.beta);
  r.rhs = rho / 21.0;
  r.satisfied = r.lhs <= r.rhs * (1.0 + 1e-12);
  if (sigma2 && *sigma2 > 0.0 && n > 0 && steps > 0)
    r.suggested_eta = std::sqrt(static_cast<double>(n) / (*sigma2 * static_cast<double>(steps)));
  return r;
}

struct RunResult {
  std::vector<optim::WorkerState> states;
  Vec xbar;
  std::vector<MetricsRecord> records;
};

using MetricsCallback = std::function<void(const MetricsRecord&)>;
/// Called after every step with the 1-based step and the worker states.
using StepCallback = std::function<void(long, const std::vector<optim::WorkerState>&)>;

namespace detail {

inline MetricsRecord measure(const oracles::Problem& problem, const std::vector<optim::WorkerState>& states,
                             const RunConfig& rc, long step, double lr) {
  MetricsRecord r;
  r.step = step;
  r.epoch = static_cast<double>(step) / static_cast<double>(rc.steps_per_epoch);
  r.lr = lr;
  const Vec xbar = optim::average_x(states);
  const auto f = problem.global(xbar);
  r.loss = f.loss;
  r.grad_norm = f.grad.norm();
  std::vector<Vec> xs;
  xs.reserve(states.size());
  for (const auto& s : states) xs.push_back(s.x);
  r.consensus_dist = consensus::consensus_distance(optim::stack_columns(xs));
  r.weight_norm = xbar.norm();
  r.eff_stepsize = effective_stepsize(lr, xbar);
  if (rc.verbose)
    for (std::size_t i = 0; i < states.size(); ++i) r.worker_losses.push_back(problem.gradient(i, states[i].x).loss);
  return r;
}

inline void check_finite(const std::vector<optim::WorkerState>& states, optim::Method m, long step) {
  for (const auto& s : states)
    if (!s.finite()) throw DivergenceError(std::string(optim::to_string(m)), step);
}

}  // namespace detail

/// Runs rc.steps steps (outer rounds for slowmo and mimelite). Metrics are
/// emitted after every step that is a multiple of rc.metrics_every.
inline RunResult run(const RunConfig& rc, const MetricsCallback& on_metrics = {}, const StepCallback& on_step = {}) {
  const auto problem = make_problem(rc);
  const auto gossip = make_gossip(rc);
  const std::size_t n = rc.topology.n;
  const Vec x0 = initial_point(rc);
  if (x0.size() != problem.dim()) throw ConfigError("problem.init has the wrong dimension");
  if (rc.method == optim::Method::qhm && n != 1) throw ConfigError("optim.kind = qhm is single-worker");

  WorkerPool pool(static_cast<std::size_t>(rc.threads));
  RunResult result;
  auto states = optim::make_states(n, x0);
  optim::MimeServer server{x0, Vec::Zero(x0.size())};

  auto sample = [&](std::size_t worker, const Vec& x, long call) {
    return problem.sample(worker, x, rng::derive_seed(rc.seed, worker, static_cast<std::uint64_t>(call))).grad;
  };

  std::vector<Vec> grads(n);
  long calls = 0;  // gradient evaluations per worker so far
  for (long step = 1; step <= rc.steps; ++step) {
    optim::HyperParams hp = rc.hp;
    hp.eta = lr_schedule(rc.schedule, step - 1, rc.steps);
    const auto w = gossip.at(static_cast<std::size_t>(step - 1));

    switch (rc.method) {
      case optim::Method::slowmo: {
        const auto grad = [&](std::size_t i, const Vec& x, long k) { return sample(i, x, k); };
        states = optim::slowmo_round(std::move(states), w, hp, hp.slowmo_base, grad, calls);
        calls += hp.slowmo_tau;
        break;
      }
      case optim::Method::mimelite: {
        const auto local = [&](std::size_t i, const Vec& x, long k) { return sample(i, x, k); };
        const auto full = [&](std::size_t i, const Vec& x) { return problem.gradient(i, x).grad; };
        server = optim::mimelite_round(server, n, hp, local, full, calls);
        calls += hp.tau;
        for (auto& s : states) s.x = server.x;
        if (!server.x.allFinite() || !server.s.allFinite())
          throw DivergenceError(std::string(optim::to_string(rc.method)), step);
        break;
      }
      default: {
        const long call = calls;
        pool.parallel_for(n, [&](std::size_t i) { grads[i] = sample(i, optim::sample_point(rc.method, hp, states[i]), call); });
        states = optim::network_step(rc.method, std::move(states), grads, w, hp, step);
        calls += 1;
        break;
      }
    }
    detail::check_finite(states, rc.method, step);
    if (on_step) on_step(step, states);

    if (step % rc.metrics_every == 0) {
      auto rec = detail::measure(problem, states, rc, step, hp.eta);
      if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm))
        throw DivergenceError(std::string(optim::to_string(rc.method)), step);
      if (on_metrics) on_metrics(rec);
      result.records.push_back(std::move(rec));
    }
  }
  result.xbar = optim::average_x(states);
  result.states = std::move(states);
  return result;
}

}  // namespace qgm::engine
