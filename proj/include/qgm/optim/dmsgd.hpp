#pragma once

// DMSGD written in the unified "half step with beta m_hat + g, gossip, buffer"
// template, with m_hat in units of a gradient:
//
//   m_hat^t = [mu (x^{t-1/2} - x^{t+1/2}) + (1 - mu)(x^t - x^{t+1})] / eta
//
// Option II takes its half step (and its gradient) from the previous
// pre-gossip iterate x^{t-1/2}, which makes the first bracket equal to
// eta (beta m_hat^{t-1} + g^t). Option I steps from the synchronised iterate,
// so x^{t-1/2} has to be rebuilt from x^{t-1}, m_hat^{t-2} and g^{t-1}.
// On the first step there is no history: x^{t-1} = x^t, g^{t-1} = 0 and
// m_hat^{t-2} = 0.

#include <span>
#include <vector>

#include "qgm/optim/state.hpp"

namespace qgm::optim {

/// Point at which DMSGD samples its gradient.
inline const Vec& dmsgd_sample_point(const WorkerState& s, DmsgdOption option) {
  return option == DmsgdOption::II ? s.x_half : s.x;
}

inline std::vector<WorkerState> dmsgd_step(std::vector<WorkerState> states, std::span<const Vec> grads,
                                           const topology::MixingMatrix& w, const HyperParams& hp,
                                           DmsgdOption option) {
  if (grads.size() != states.size()) throw ConstraintError("one gradient per worker required");
  const double eta = hp.eta, beta = hp.beta, mu = hp.mu;
  std::vector<Vec> x_sync(states.size());
  std::vector<Vec> halves(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    x_sync[i] = s.x;
    const Vec& base = option == DmsgdOption::II ? s.x_half : s.x;
    halves[i] = base - eta * (beta * s.m_hat + grads[i]);
  }
  auto mixed = mix(halves, w);
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    const Vec& g = grads[i];
    const Vec sync_move = (x_sync[i] - mixed[i]) / eta;
    Vec m_new;
    if (option == DmsgdOption::II) {
      m_new = mu * (beta * s.m_hat + g) + (1.0 - mu) * sync_move;
    } else {
      const Vec x_before = s.has_history ? s.x_prev : x_sync[i];
      const Vec g_before = s.has_history ? s.g_prev : Vec(Vec::Zero(g.size()));
      m_new = mu * (beta * s.m_hat + g + (x_before - x_sync[i]) / eta - beta * s.m_hat_prev - g_before) +
              (1.0 - mu) * sync_move;
    }
    s.m_hat_prev = s.m_hat;
    s.m_hat = std::move(m_new);
    s.x_prev = x_sync[i];
    s.g_prev = g;
    s.x_half = halves[i];
    s.x = std::move(mixed[i]);
    s.has_history = true;
  }
  return states;
}

}  // namespace qgm::optim
