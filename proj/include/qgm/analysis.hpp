#pragma once

// Path statistics for 2-D optimizer traces.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "qgm/core.hpp"

namespace qgm::analysis {

/// Sum over consecutive moves of the absolute turning angle in [0, pi].
/// Moves shorter than rel_min_step times the diagonal of the path's bounding
/// box are skipped: they are invisible at any plotting resolution, and the
/// creeping tail of a converged run would otherwise count as oscillation.
inline double heading_change_sum(std::span<const Vec> path, double rel_min_step = 1e-6) {
  if (path.size() < 3) return 0.0;
  Vec lo = path.front(), hi = path.front();
  for (const auto& p : path) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double min_step = rel_min_step * (hi - lo).norm();
  double total = 0.0;
  bool have = false;
  double last = 0.0;
  for (std::size_t t = 1; t < path.size(); ++t) {
    const Vec d = path[t] - path[t - 1];
    if (d.norm() <= min_step) continue;
    const double heading = std::atan2(d(1), d(0));
    if (have) {
      double turn = std::abs(heading - last);
      if (turn > std::numbers::pi) turn = 2.0 * std::numbers::pi - turn;
      total += turn;
    }
    last = heading;
    have = true;
  }
  return total;
}

/// Largest signed distance travelled past `center` along the direction
/// start -> center; 0 if the path never crosses it.
inline double max_overshoot(std::span<const Vec> path, const Vec& start, const Vec& center) {
  const Vec dir = center - start;
  const double len = dir.norm();
  if (len == 0.0) return 0.0;
  double worst = 0.0;
  for (const auto& p : path) worst = std::max(worst, (p - center).dot(dir) / len);
  return worst;
}

}  // namespace qgm::analysis
