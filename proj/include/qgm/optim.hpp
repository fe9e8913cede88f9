#pragma once

#include "qgm/optim/adam.hpp"
#include "qgm/optim/dmsgd.hpp"
#include "qgm/optim/local.hpp"
#include "qgm/optim/outer.hpp"
#include "qgm/optim/state.hpp"
#include "qgm/optim/tracking.hpp"

namespace qgm::optim {

/// Where a method evaluates its gradient for the coming step.
inline const Vec& sample_point(Method m, const HyperParams& hp, const WorkerState& s) {
  if (m == Method::dmsgd) return dmsgd_sample_point(s, hp.dmsgd_option);
  return s.x;
}

/// True for methods whose step is a single (gradients -> half step -> gossip)
/// round handled by network_step.
inline bool is_single_round(Method m) { return m != Method::slowmo && m != Method::mimelite; }

/// Advances every worker by one step of `m`. grads[i] must be sampled at
/// sample_point(m, hp, states[i]); step_index is 1-based.
inline std::vector<WorkerState> network_step(Method m, std::vector<WorkerState> states, std::span<const Vec> grads,
                                             const topology::MixingMatrix& w, const HyperParams& hp,
                                             long step_index) {
  switch (m) {
    case Method::dsgd: return local_sgd_round(LocalKind::dsgd, std::move(states), grads, w, hp, step_index);
    case Method::dsgdm: return local_sgd_round(LocalKind::dsgdm, std::move(states), grads, w, hp, step_index);
    case Method::dsgdm_n: return local_sgd_round(LocalKind::dsgdm_n, std::move(states), grads, w, hp, step_index);
    case Method::qg_dsgdm: return local_sgd_round(LocalKind::qg_dsgdm, std::move(states), grads, w, hp, step_index);
    case Method::qg_dsgdm_n:
      return local_sgd_round(LocalKind::qg_dsgdm_n, std::move(states), grads, w, hp, step_index);
    case Method::qhm:
      for (std::size_t i = 0; i < states.size(); ++i) states[i] = qhm_step(std::move(states[i]), grads[i], hp);
      return gossip(std::move(states), w);
    case Method::dadam: return dadam_step(std::move(states), grads, w, hp);
    case Method::qg_dadam: return qg_dadam_step(std::move(states), grads, w, hp);
    case Method::dmsgd: return dmsgd_step(std::move(states), grads, w, hp, hp.dmsgd_option);
    case Method::d2: return d2_step(std::move(states), grads, w, hp, D2Variant::d2);
    case Method::d2_plus: return d2_step(std::move(states), grads, w, hp, D2Variant::d2_plus);
    case Method::gt: return gt_step(std::move(states), grads, w, hp, false);
    case Method::gt_momentum: return gt_step(std::move(states), grads, w, hp, true);
    case Method::slowmo:
    case Method::mimelite:
      break;
  }
  throw ConstraintError(std::string(to_string(m)) + " is a multi-step method; use its round function");
}

}  // namespace qgm::optim
