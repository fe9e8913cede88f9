#pragma once

// Methods with an outer loop: SlowMo (slow momentum over tau inner
// decentralized steps followed by an exact average) and MimeLite (server
// statistics applied during client local steps, all clients participating).

#include <functional>
#include <span>
#include <vector>

#include "qgm/optim/local.hpp"

namespace qgm::optim {

/// grad(worker, x, call_index) -> stochastic gradient. call_index numbers the
/// gradient evaluations of a worker so noise streams stay reproducible.
using WorkerGradientFn = std::function<Vec(std::size_t, const Vec&, long)>;

/// Exact average, then m <- beta m + (x_0 - x_tau) / gamma and
/// x_0 <- x_0 - alpha gamma m, broadcast to every worker.
inline std::vector<WorkerState> slowmo_outer_update(std::vector<WorkerState> states, const HyperParams& hp,
                                                    double gamma) {
  const Vec x_tau = average_x(states);
  const Vec x0 = states.front().slow_x;
  const Vec slow_m = hp.slowmo_beta * states.front().slow_m + (x0 - x_tau) / gamma;
  const Vec next = x0 - hp.slowmo_alpha * gamma * slow_m;
  for (auto& s : states) {
    s.slow_m = slow_m;
    s.slow_x = next;
    s.x = next;
  }
  return states;
}

/// One SlowMo round: hp.slowmo_tau base steps with gossip at rate gamma = hp.eta,
/// then the slow-momentum outer update. Base optimizer buffers are kept
/// per worker across rounds.
inline std::vector<WorkerState> slowmo_round(std::vector<WorkerState> states, const topology::MixingMatrix& w,
                                             const HyperParams& hp, LocalKind base, const WorkerGradientFn& grad,
                                             long first_call = 0) {
  for (int k = 0; k < hp.slowmo_tau; ++k) {
    std::vector<Vec> grads;
    for (std::size_t i = 0; i < states.size(); ++i) grads.push_back(grad(i, states[i].x, first_call + k));
    states = local_sgd_round(base, std::move(states), grads, w, hp, k + 1);
  }
  return slowmo_outer_update(std::move(states), hp, hp.eta);
}

struct MimeServer {
  Vec x;
  Vec s;  // server optimizer statistics (momentum)
};

/// One MimeLite round with SGDm as the base optimizer. Each client runs
/// hp.tau local steps y <- y - eta ((1 - beta) g + beta s) from y = x;
/// then s <- (1 - beta) mean_i grad f_i(x) + beta s and x <- mean_i y_i.
inline MimeServer mimelite_round(const MimeServer& server, std::size_t clients, const HyperParams& hp,
                                 const WorkerGradientFn& local_grad,
                                 const std::function<Vec(std::size_t, const Vec&)>& full_grad, long first_call = 0) {
  const auto d = server.x.size();
  Vec y_sum = Vec::Zero(d);
  Vec full_sum = Vec::Zero(d);
  for (std::size_t i = 0; i < clients; ++i) {
    Vec y = server.x;
    for (int k = 0; k < hp.tau; ++k) {
      const Vec g = local_grad(i, y, first_call + k);
      y -= hp.eta * ((1.0 - hp.beta) * g + hp.beta * server.s);
    }
    y_sum += y;
    full_sum += full_grad(i, server.x);
  }
  const double n = static_cast<double>(clients);
  MimeServer next;
  next.s = (1.0 - hp.beta) * (full_sum / n) + hp.beta * server.s;
  next.x = y_sum / n;
  return next;
}

}  // namespace qgm::optim
