#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "qgm/core.hpp"

namespace qgm::engine {

enum class ScheduleKind { constant, warmup_stage };

/// Learning-rate schedule. warmup_stage ramps linearly from
/// min(warmup_start, base) to base over the first warmup_fraction of the run,
/// then divides by decay_factor each time the run passes a milestone fraction.
struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base = 0.1;
  double warmup_fraction = 0.0;
  double warmup_start = 0.1;
  std::vector<double> milestones;
  double decay_factor = 10.0;

  void validate() const {
    if (!(base > 0.0)) throw ConfigError("schedule: base learning rate must be > 0");
    if (kind == ScheduleKind::constant) return;
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
      throw ConfigError("schedule.warmup_fraction must lie in [0, 1)");
    if (!(warmup_start > 0.0)) throw ConfigError("schedule.warmup_start must be > 0");
    if (!(decay_factor > 0.0)) throw ConfigError("schedule.decay_factor must be > 0");
    double last = 0.0;
    for (double m : milestones) {
      if (!(m > last && m < 1.0)) throw ConfigError("schedule.milestones must be strictly increasing in (0, 1)");
      last = m;
    }
  }
};

/// Learning rate for 0-based `step` of a run with `total_steps` steps.
inline double lr_schedule(const LrSchedule& sched, long step, long total_steps) {
  if (sched.kind == ScheduleKind::constant) return sched.base;
  sched.validate();
  const double total = static_cast<double>(std::max(total_steps, 1L));
  const double s = static_cast<double>(step);
  const double warm_steps = sched.warmup_fraction * total;
  if (s < warm_steps) {
    const double start = std::min(sched.warmup_start, sched.base);
    return start + (sched.base - start) * (s / warm_steps);
  }
  const double progress = s / total;
  double eta = sched.base;
  for (double m : sched.milestones)
    if (progress >= m) eta /= sched.decay_factor;
  return eta;
}

}  // namespace qgm::engine
