#pragma once

// Bias-correcting baselines: D2 / D2+ and gradient tracking.

#include <span>
#include <vector>

#include "qgm/optim/state.hpp"

namespace qgm::optim {

enum class D2Variant { d2, d2_plus };

/// eta_t (x^{t-1} - x^t) / eta_used, the model-difference term inside the D2
/// update. eta_used is eta_t for D2 and eta_{t-1} for D2+.
inline Vec d2_correction(const Vec& x_prev, const Vec& x, double eta_t, double eta_prev, D2Variant variant) {
  const double eta_used = variant == D2Variant::d2 ? eta_t : eta_prev;
  return eta_t * ((x_prev - x) / eta_used);
}

/// X <- W (X - eta_t ((X^{t-1} - X^t) / eta_used + G^t - G^{t-1})).
/// The first step has no history and is a plain DSGD step.
inline std::vector<WorkerState> d2_step(std::vector<WorkerState> states, std::span<const Vec> grads,
                                        const topology::MixingMatrix& w, const HyperParams& hp, D2Variant variant) {
  if (grads.size() != states.size()) throw ConstraintError("one gradient per worker required");
  std::vector<Vec> halves(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    if (!s.has_history) {
      halves[i] = s.x - hp.eta * grads[i];
    } else {
      const double eta_used = variant == D2Variant::d2 ? hp.eta : s.eta_prev;
      halves[i] = s.x - hp.eta * ((s.x_prev - s.x) / eta_used + grads[i] - s.g_prev);
    }
  }
  auto mixed = mix(halves, w);
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    s.x_prev = s.x;
    s.g_prev = grads[i];
    s.eta_prev = hp.eta;
    s.x = std::move(mixed[i]);
    s.has_history = true;
  }
  return states;
}

/// Gradient tracking with grads sampled at the current x^t:
///   y^t = W y^{t-1} + g^t - g^{t-1}   (y^0 = g^0)
///   x^{t+1} = W (x^t - eta u^t),  u = y, or with momentum m <- beta m + y, u = y + beta m.
inline std::vector<WorkerState> gt_step(std::vector<WorkerState> states, std::span<const Vec> grads,
                                        const topology::MixingMatrix& w, const HyperParams& hp, bool with_momentum) {
  if (grads.size() != states.size()) throw ConstraintError("one gradient per worker required");
  const std::size_t n = states.size();
  if (states.front().has_history) {
    std::vector<Vec> ys;
    for (const auto& s : states) ys.push_back(s.y_tracker);
    auto mixed = mix(ys, w);
    for (std::size_t i = 0; i < n; ++i) states[i].y_tracker = mixed[i] + grads[i] - states[i].g_prev;
  } else {
    for (std::size_t i = 0; i < n; ++i) states[i].y_tracker = grads[i];
  }
  std::vector<Vec> halves(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = states[i];
    if (with_momentum) {
      s.m_local = hp.beta * s.m_local + s.y_tracker;
      halves[i] = s.x - hp.eta * (s.y_tracker + hp.beta * s.m_local);
    } else {
      halves[i] = s.x - hp.eta * s.y_tracker;
    }
  }
  auto mixed = mix(halves, w);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = states[i];
    s.g_prev = grads[i];
    s.x = std::move(mixed[i]);
    s.has_history = true;
  }
  return states;
}

}  // namespace qgm::optim
