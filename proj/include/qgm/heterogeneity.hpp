#pragma once

// Non-iid client shards via per-class Dirichlet allocation.
//
// For every class k the samples of that class (in ascending index order) are
// split across the n clients with proportions p ~ Dir(alpha * 1_n). Counts are
// rounded with the largest-remainder method, so every index lands in exactly
// one shard. Small alpha concentrates a class on few clients; large alpha gives
// every client roughly the global class histogram.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "qgm/core.hpp"
#include "qgm/random.hpp"

namespace qgm::heterogeneity {

struct Partition {
  std::size_t n = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> shards;  // sorted ascending

  std::size_t total() const {
    std::size_t s = 0;
    for (const auto& sh : shards) s += sh.size();
    return s;
  }
};

/// Per-client class-count matrix, rows = clients, columns = classes.
struct ClassCounts {
  std::vector<int> classes;                 // distinct labels, ascending
  std::vector<std::vector<std::size_t>> counts;  // [client][class index]
};

/// Splits `total` items by `weights` (summing to 1) with largest remainder;
/// ties go to the lower client index.
inline std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> out(n);
  std::vector<double> frac(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = static_cast<double>(total) * weights[i];
    out[i] = static_cast<std::size_t>(std::floor(quota));
    frac[i] = quota - static_cast<double>(out[i]);
    assigned += out[i];
  }
  // Rounding can overshoot when the weights sum to slightly above one.
  while (assigned > total) {
    auto it = std::max_element(out.begin(), out.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % n) {
    ++out[order[k]];
    ++assigned;
  }
  return out;
}

/// Draws p ~ Dir(alpha * 1_n) from `stream`, normalised in log space.
inline std::vector<double> dirichlet(rng::Stream& stream, std::size_t n, double alpha) {
  std::vector<double> logs(n);
  for (auto& l : logs) l = stream.log_gamma(alpha);
  const double top = *std::max_element(logs.begin(), logs.end());
  std::vector<double> p(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(logs[i] - top);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline Partition dirichlet_partition(std::span<const int> labels, std::size_t n, double alpha, std::uint64_t seed) {
  if (n < 1) throw ParameterError("dirichlet_partition requires n >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("dirichlet_partition requires alpha > 0");
  if (labels.empty()) throw ParameterError("dirichlet_partition requires non-empty labels");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  Partition part;
  part.n = n;
  part.alpha = alpha;
  part.seed = seed;
  part.shards.assign(n, {});

  std::uint64_t class_ordinal = 0;
  for (const auto& [label, indices] : by_class) {
    rng::Stream stream(seed, 0xD1C1u, class_ordinal++);
    const auto p = dirichlet(stream, n, alpha);
    const auto counts = largest_remainder(indices.size(), p);
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t k = 0; k < counts[c]; ++k) part.shards[c].push_back(indices[cursor++]);
  }

  // Empty-shard repair: lowest index of the lowest-id largest shard moves over.
  if (labels.size() >= n) {
    for (std::size_t c = 0; c < n; ++c) {
      if (!part.shards[c].empty()) continue;
      std::size_t donor = 0;
      for (std::size_t j = 1; j < n; ++j)
        if (part.shards[j].size() > part.shards[donor].size()) donor = j;
      auto& src = part.shards[donor];
      auto lowest = std::min_element(src.begin(), src.end());
      part.shards[c].push_back(*lowest);
      src.erase(lowest);
    }
  }
  for (auto& sh : part.shards) std::sort(sh.begin(), sh.end());
  return part;
}

inline ClassCounts partition_stats(const Partition& part, std::span<const int> labels) {
  if (part.total() != labels.size())
    throw ConstraintError("partition covers " + std::to_string(part.total()) + " samples but " +
                          std::to_string(labels.size()) + " labels were given");
  ClassCounts out;
  std::map<int, std::size_t> column;
  for (int l : labels) column.emplace(l, 0);
  for (auto& [label, col] : column) {
    col = out.classes.size();
    out.classes.push_back(label);
  }
  out.counts.assign(part.n, std::vector<std::size_t>(out.classes.size(), 0));
  for (std::size_t c = 0; c < part.n; ++c)
    for (auto idx : part.shards[c]) {
      if (idx >= labels.size()) throw ConstraintError("shard index out of range of the label array");
      ++out.counts[c][column.at(labels[idx])];
    }
  return out;
}

/// Balanced synthetic labels: sample i has class i mod classes.
inline std::vector<int> balanced_labels(std::size_t samples, std::size_t classes) {
  if (classes < 1) throw ParameterError("need at least one class");
  std::vector<int> labels(samples);
  for (std::size_t i = 0; i < samples; ++i) labels[i] = static_cast<int>(i % classes);
  return labels;
}

}  // namespace qgm::heterogeneity
