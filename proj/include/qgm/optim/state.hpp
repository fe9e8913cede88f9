#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qgm/core.hpp"
#include "qgm/topology.hpp"

namespace qgm::optim {

enum class Method {
  dsgd,
  dsgdm,
  dsgdm_n,
  qg_dsgdm,
  qg_dsgdm_n,
  qhm,
  dadam,
  qg_dadam,
  dmsgd,
  d2,
  d2_plus,
  gt,
  gt_momentum,
  slowmo,
  mimelite,
};

inline constexpr Method kAllMethods[] = {
    Method::dsgd,  Method::dsgdm,   Method::dsgdm_n, Method::qg_dsgdm, Method::qg_dsgdm_n,
    Method::qhm,   Method::dadam,   Method::qg_dadam, Method::dmsgd,   Method::d2,
    Method::d2_plus, Method::gt,    Method::gt_momentum, Method::slowmo, Method::mimelite,
};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::dsgd: return "dsgd";
    case Method::dsgdm: return "dsgdm";
    case Method::dsgdm_n: return "dsgdm_n";
    case Method::qg_dsgdm: return "qg_dsgdm";
    case Method::qg_dsgdm_n: return "qg_dsgdm_n";
    case Method::qhm: return "qhm";
    case Method::dadam: return "dadam";
    case Method::qg_dadam: return "qg_dadam";
    case Method::dmsgd: return "dmsgd";
    case Method::d2: return "d2";
    case Method::d2_plus: return "d2_plus";
    case Method::gt: return "gt";
    case Method::gt_momentum: return "gt_momentum";
    case Method::slowmo: return "slowmo";
    case Method::mimelite: return "mimelite";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (s == to_string(m)) return m;
  throw ConfigError("unknown optimizer kind '" + std::string(s) + "'");
}

/// Local update rules that fit the "half step, then gossip" pattern.
enum class LocalKind { dsgd, dsgdm, dsgdm_n, qg_dsgdm, qg_dsgdm_n };

inline LocalKind parse_local_kind(std::string_view s) {
  if (s == "dsgd") return LocalKind::dsgd;
  if (s == "dsgdm") return LocalKind::dsgdm;
  if (s == "dsgdm_n") return LocalKind::dsgdm_n;
  if (s == "qg_dsgdm") return LocalKind::qg_dsgdm;
  if (s == "qg_dsgdm_n") return LocalKind::qg_dsgdm_n;
  throw ConfigError("unknown local step kind '" + std::string(s) + "'");
}

inline bool is_quasi_global(LocalKind k) { return k == LocalKind::qg_dsgdm || k == LocalKind::qg_dsgdm_n; }

enum class DmsgdOption { I, II };

struct HyperParams {
  double eta = 0.1;
  double beta = 0.9;
  double mu = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  int tau = 1;
  double slowmo_alpha = 1.0;
  double slowmo_beta = 0.7;
  int slowmo_tau = 12;
  LocalKind slowmo_base = LocalKind::dsgdm;
  DmsgdOption dmsgd_option = DmsgdOption::II;

  void validate() const {
    if (!(eta > 0.0)) throw ParameterError("eta must be > 0");
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v < 1.0)) throw ParameterError(std::string(name) + " must lie in [0, 1)");
    };
    unit(beta, "beta");
    unit(mu, "mu");
    unit(beta1, "beta1");
    unit(beta2, "beta2");
    unit(slowmo_beta, "slowmo_beta");
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be > 0");
    if (tau < 1) throw ParameterError("tau must be >= 1");
    if (slowmo_tau < 1) throw ParameterError("slowmo_tau must be >= 1");
    if (!(slowmo_alpha > 0.0)) throw ParameterError("slowmo_alpha must be > 0");
  }
};

/// One node's parameters plus every buffer any of the step rules uses. All
/// buffers start at zero.
struct WorkerState {
  Vec x;
  Vec m_hat;       // quasi-global buffer (also DMSGD's m-hat and QHM's buffer)
  Vec m_hat_prev;  // DMSGD option I: m-hat two steps back
  Vec m_local;     // local momentum
  Vec v;           // second moment (Adam variants)
  Vec x_prev;      // previous synchronised iterate (D2, DMSGD option I)
  Vec x_half;      // DMSGD option II: previous pre-gossip iterate
  Vec g_prev;      // previous gradient (D2, GT, DMSGD option I)
  Vec y_tracker;   // gradient tracking variable
  Vec slow_x;      // SlowMo outer iterate
  Vec slow_m;      // SlowMo slow momentum
  double eta_prev = 0.0;
  bool has_history = false;

  WorkerState() = default;
  explicit WorkerState(const Vec& x0)
      : x(x0),
        m_hat(Vec::Zero(x0.size())),
        m_hat_prev(Vec::Zero(x0.size())),
        m_local(Vec::Zero(x0.size())),
        v(Vec::Zero(x0.size())),
        x_prev(x0),
        x_half(x0),
        g_prev(Vec::Zero(x0.size())),
        y_tracker(Vec::Zero(x0.size())),
        slow_x(x0),
        slow_m(Vec::Zero(x0.size())) {}

  Eigen::Index dim() const { return x.size(); }

  bool finite() const {
    return x.allFinite() && m_hat.allFinite() && m_hat_prev.allFinite() && m_local.allFinite() && v.allFinite() &&
           x_prev.allFinite() && x_half.allFinite() && g_prev.allFinite() && y_tracker.allFinite() &&
           slow_x.allFinite() && slow_m.allFinite();
  }
};

inline std::vector<WorkerState> make_states(std::size_t n, const Vec& x0) {
  return std::vector<WorkerState>(n, WorkerState(x0));
}

/// Stacks a list of vectors as columns of a d x n matrix.
inline Mat stack_columns(std::span<const Vec> cols) {
  if (cols.empty()) return Mat();
  Mat out(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].size() != out.rows()) throw ConstraintError("dimension mismatch between workers");
    out.col(static_cast<Eigen::Index>(i)) = cols[i];
  }
  return out;
}

/// One gossip round on a list of vectors: out_i = sum_j w_ji in_j.
inline std::vector<Vec> mix(std::span<const Vec> in, const topology::MixingMatrix& w) {
  if (in.size() != w.size()) throw ConstraintError("gossip: worker count does not match the mixing matrix");
  const Mat mixed = stack_columns(in) * w.weights();
  std::vector<Vec> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = mixed.col(static_cast<Eigen::Index>(i));
  return out;
}

/// Replaces every x_i by its gossip average; the other buffers are untouched.
inline std::vector<WorkerState> gossip(std::vector<WorkerState> states, const topology::MixingMatrix& w) {
  std::vector<Vec> xs;
  xs.reserve(states.size());
  for (const auto& s : states) xs.push_back(s.x);
  auto mixed = mix(xs, w);
  for (std::size_t i = 0; i < states.size(); ++i) states[i].x = std::move(mixed[i]);
  return states;
}

inline Vec average_x(std::span<const WorkerState> states) {
  Vec mean = Vec::Zero(states.front().dim());
  for (const auto& s : states) mean += s.x;
  return mean / static_cast<double>(states.size());
}

}  // namespace qgm::optim
