#pragma once

// Decentralized Adam with local buffers, and its quasi-global variant where
// the first and second moment buffers are fed the unit-normalised model
// difference of consecutive synchronised iterates. Neither applies bias
// correction.

#include <span>
#include <vector>

#include "qgm/optim/state.hpp"

namespace qgm::optim {

/// Adam half step reading (m_hat, v) as the previous buffers: returns the
/// state with x replaced by x^{t+1/2}; buffers unchanged.
inline WorkerState qg_adam_half_step(WorkerState s, const Vec& g, const HyperParams& hp) {
  const Vec m = hp.beta1 * s.m_hat + (1.0 - hp.beta1) * g;
  const Vec v = hp.beta2 * s.v + (1.0 - hp.beta2) * g.cwiseProduct(g);
  s.x.array() -= hp.eta * m.array() / (v.array().sqrt() + hp.epsilon);
  return s;
}

/// d = x_before - x_after, d_hat = d / ||d|| (zero when d = 0), then
/// m_hat <- beta1 m_hat + (1 - beta1) d_hat, v <- beta2 v + (1 - beta2) d_hat^2.
inline WorkerState qg_adam_buffer_update(WorkerState s, const Vec& x_before, const Vec& x_after,
                                         const HyperParams& hp) {
  const Vec d = x_before - x_after;
  const double norm = d.norm();
  const Vec d_hat = norm > 0.0 ? Vec(d / norm) : Vec(Vec::Zero(d.size()));
  s.m_hat = hp.beta1 * s.m_hat + (1.0 - hp.beta1) * d_hat;
  s.v = hp.beta2 * s.v + (1.0 - hp.beta2) * d_hat.cwiseProduct(d_hat);
  return s;
}

inline std::vector<WorkerState> qg_dadam_step(std::vector<WorkerState> states, std::span<const Vec> grads,
                                              const topology::MixingMatrix& w, const HyperParams& hp) {
  if (grads.size() != states.size()) throw ConstraintError("one gradient per worker required");
  std::vector<Vec> before;
  for (std::size_t i = 0; i < states.size(); ++i) {
    before.push_back(states[i].x);
    states[i] = qg_adam_half_step(std::move(states[i]), grads[i], hp);
  }
  states = gossip(std::move(states), w);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Vec after = states[i].x;
    states[i] = qg_adam_buffer_update(std::move(states[i]), before[i], after, hp);
  }
  return states;
}

/// Adam on local gradients (buffers m_local, v), followed by gossip of x only.
inline std::vector<WorkerState> dadam_step(std::vector<WorkerState> states, std::span<const Vec> grads,
                                           const topology::MixingMatrix& w, const HyperParams& hp) {
  if (grads.size() != states.size()) throw ConstraintError("one gradient per worker required");
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    const Vec& g = grads[i];
    s.m_local = hp.beta1 * s.m_local + (1.0 - hp.beta1) * g;
    s.v = hp.beta2 * s.v + (1.0 - hp.beta2) * g.cwiseProduct(g);
    s.x.array() -= hp.eta * s.m_local.array() / (s.v.array().sqrt() + hp.epsilon);
  }
  return gossip(std::move(states), w);
}

}  // namespace qgm::optim
