#pragma once

// Heavy-ball / Nesterov local steps and the quasi-global momentum buffer.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "qgm/optim/state.hpp"

namespace qgm::optim {

/// Local half step x -> x^{t+1/2}. DSGDm variants update `m_local`; the
/// quasi-global variants read `m_hat` and leave it for qg_buffer_update.
/// Nesterov follows the PyTorch recursion (no dampening).
inline WorkerState local_half_step(LocalKind kind, WorkerState s, const Vec& g, const HyperParams& hp) {
  if (g.size() != s.dim()) throw ConstraintError("gradient dimension mismatch");
  switch (kind) {
    case LocalKind::dsgd:
      s.x -= hp.eta * g;
      break;
    case LocalKind::dsgdm:
      s.m_local = hp.beta * s.m_local + g;
      s.x -= hp.eta * s.m_local;
      break;
    case LocalKind::dsgdm_n:
      s.m_local = hp.beta * s.m_local + g;
      s.x -= hp.eta * (hp.beta * s.m_local + g);
      break;
    case LocalKind::qg_dsgdm:
      s.x -= hp.eta * (hp.beta * s.m_hat + g);
      break;
    case LocalKind::qg_dsgdm_n: {
      const Vec m = hp.beta * s.m_hat + g;
      s.x -= hp.eta * (hp.beta * m + g);
      break;
    }
  }
  return s;
}

/// m_hat <- mu m_hat + (1 - mu) (x_before - x_after) / eta.
inline WorkerState qg_buffer_update(WorkerState s, const Vec& x_before, const Vec& x_after, double eta, double mu) {
  if (eta == 0.0) throw ParameterError("qg_buffer_update: eta must be non-zero");
  s.m_hat = mu * s.m_hat + (1.0 - mu) * ((x_before - x_after) / eta);
  return s;
}

/// Whether the quasi-global buffer is refreshed at 1-based step t.
inline bool qg_multistep_gate(long step_index, int tau) {
  if (tau < 1) throw ParameterError("tau must be >= 1");
  return step_index % tau == 0;
}

/// One round of a half-step method: local half step on every worker, gossip,
/// then (quasi-global kinds) the buffer update gated on `step_index`.
inline std::vector<WorkerState> local_sgd_round(LocalKind kind, std::vector<WorkerState> states,
                                                std::span<const Vec> grads, const topology::MixingMatrix& w,
                                                const HyperParams& hp, long step_index) {
  if (grads.size() != states.size()) throw ConstraintError("one gradient per worker required");
  std::vector<Vec> before;
  before.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    before.push_back(states[i].x);
    states[i] = local_half_step(kind, std::move(states[i]), grads[i], hp);
  }
  states = gossip(std::move(states), w);
  if (is_quasi_global(kind) && qg_multistep_gate(step_index, hp.tau))
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Vec after = states[i].x;
      states[i] = qg_buffer_update(std::move(states[i]), before[i], after, hp.eta, hp.mu);
    }
  return states;
}

/// Single-worker quasi-hyperbolic form of QG-DSGDm:
///   m <- b m + g,  x <- x - eta ((1 - mu/b) m + (mu/b) g),  b = mu + (1 - mu) beta.
/// The buffer lives in `m_hat` and equals the QG buffer divided by (1 - mu).
inline WorkerState qhm_step(WorkerState s, const Vec& g, const HyperParams& hp) {
  const double bhat = hp.mu + (1.0 - hp.mu) * hp.beta;
  if (bhat == 0.0) {
    s.m_hat = g;
    s.x -= hp.eta * g;
    return s;
  }
  s.m_hat = bhat * s.m_hat + g;
  const double nu = hp.mu / bhat;
  s.x -= hp.eta * ((1.0 - nu) * s.m_hat + nu * g);
  return s;
}

/// QHM in the (nu, beta) parameterisation with a normalised buffer:
///   m <- beta m + (1 - beta) g,  x <- x - eta ((1 - nu) g + nu m).
inline WorkerState qhm_nu_step(WorkerState s, const Vec& g, double eta, double beta, double nu) {
  s.m_local = beta * s.m_local + (1.0 - beta) * g;
  s.x -= eta * ((1.0 - nu) * g + nu * s.m_local);
  return s;
}

using GradientFn = std::function<Vec(const Vec&)>;

/// Single-worker QG-DSGDm-N with the gradient taken at the look-ahead point:
///   x' = x - eta beta m,  m_t = beta m + grad(x'),  x <- x - eta m_t,
///   m <- mu m + (1 - mu) m_t.
inline WorkerState qg_nesterov_lookahead_step(WorkerState s, const GradientFn& grad, const HyperParams& hp) {
  const Vec g = grad(s.x - hp.eta * hp.beta * s.m_hat);
  const Vec mt = hp.beta * s.m_hat + g;
  s.x -= hp.eta * mt;
  s.m_hat = hp.mu * s.m_hat + (1.0 - hp.mu) * mt;
  return s;
}

/// Closed form of qg_nesterov_lookahead_step in the b = mu + (1 - mu) beta
/// parameterisation (buffer scaled by 1 / (1 - mu)):
///   x' = x - eta beta (1 - mu) m,  m <- b m + grad(x'),
///   x <- x - eta ((1 - mu/b) m + (mu/b) grad(x')).
inline WorkerState qhm_nesterov_step(WorkerState s, const GradientFn& grad, const HyperParams& hp) {
  const double bhat = hp.mu + (1.0 - hp.mu) * hp.beta;
  const Vec g = grad(s.x - hp.eta * hp.beta * (1.0 - hp.mu) * s.m_hat);
  if (bhat == 0.0) {
    s.m_hat = g;
    s.x -= hp.eta * g;
    return s;
  }
  s.m_hat = bhat * s.m_hat + g;
  const double nu = hp.mu / bhat;
  s.x -= hp.eta * ((1.0 - nu) * s.m_hat + nu * g);
  return s;
}

}  // namespace qgm::optim
