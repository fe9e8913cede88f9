#pragma once

// Gradient-free average consensus: plain gossip X <- X W against the
// quasi-global recursion
//   X^{t+1} = (X^t - beta M^{t-1}) W,  M^t = mu M^{t-1} + (1 - mu)(X^t - X^{t+1}),
// with workers as the columns of X (d x n) and M^{-1} = 0.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "qgm/core.hpp"
#include "qgm/random.hpp"
#include "qgm/topology.hpp"

namespace qgm::consensus {

/// sqrt((1/n) sum_i ||x_i - xbar||^2) over the columns of X.
inline double consensus_distance(const Mat& x) {
  if (x.cols() == 0) return 0.0;
  const Vec mean = x.rowwise().mean();
  return std::sqrt((x.colwise() - mean).squaredNorm() / static_cast<double>(x.cols()));
}

struct ConsensusRun {
  std::vector<double> distance;    // length T + 1, distance[0] is the initial one
  std::vector<double> mean_drift;  // ||xbar^t - xbar^0||, same length
  Mat final_x;
};

inline ConsensusRun gossip_consensus(const Mat& x0, const topology::GossipSchedule& w, std::size_t steps) {
  if (static_cast<std::size_t>(x0.cols()) != w.size()) throw ConstraintError("X0 columns must equal W size");
  ConsensusRun run;
  Mat x = x0;
  const Vec mean0 = x0.rowwise().mean();
  run.distance.reserve(steps + 1);
  run.distance.push_back(consensus_distance(x));
  run.mean_drift.push_back(0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    x = x * w.at(t).weights();
    run.distance.push_back(consensus_distance(x));
    run.mean_drift.push_back((x.rowwise().mean() - mean0).norm());
  }
  run.final_x = std::move(x);
  return run;
}

inline ConsensusRun qg_consensus(const Mat& x0, const topology::GossipSchedule& w, double beta, double mu,
                                 std::size_t steps) {
  if (static_cast<std::size_t>(x0.cols()) != w.size()) throw ConstraintError("X0 columns must equal W size");
  if (!(beta >= 0.0 && beta < 1.0) || !(mu >= 0.0 && mu < 1.0))
    throw ParameterError("qg_consensus requires beta, mu in [0, 1)");
  ConsensusRun run;
  Mat x = x0;
  Mat m = Mat::Zero(x0.rows(), x0.cols());
  const Vec mean0 = x0.rowwise().mean();
  run.distance.reserve(steps + 1);
  run.distance.push_back(consensus_distance(x));
  run.mean_drift.push_back(0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    Mat next = (x - beta * m) * w.at(t).weights();
    m = mu * m + (1.0 - mu) * (x - next);
    x = std::move(next);
    run.distance.push_back(consensus_distance(x));
    run.mean_drift.push_back((x.rowwise().mean() - mean0).norm());
  }
  run.final_x = std::move(x);
  return run;
}

/// First iteration whose distance is <= tol, if any.
inline std::optional<std::size_t> iterations_to(const std::vector<double>& trace, double tol) {
  for (std::size_t t = 0; t < trace.size(); ++t)
    if (trace[t] <= tol) return t;
  return std::nullopt;
}

/// d x n matrix of i.i.d. standard normals from a seeded stream.
inline Mat gaussian_init(Eigen::Index d, Eigen::Index n, std::uint64_t seed) {
  rng::Stream stream(seed, 0xC0C0u, 0);
  Mat x(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) x(i, j) = stream.normal();
  return x;
}

}  // namespace qgm::consensus
