#pragma once

// Communication graphs, doubly stochastic mixing matrices, spectral gap.
//
// Convention used across the library: worker states are columns of a d x n
// matrix X and one gossip round is X <- X W, i.e. x_i <- sum_j w_ji x_j. For
// the symmetric matrices produced from undirected graphs this is the same as
// x_i <- sum_j w_ij x_j.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qgm/core.hpp"

namespace qgm::topology {

enum class Kind { ring, torus, complete, social, star, one_peer_exponential };
enum class Scheme { metropolis_hastings, uniform_neighbor };

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::ring: return "ring";
    case Kind::torus: return "torus";
    case Kind::complete: return "complete";
    case Kind::social: return "social";
    case Kind::star: return "star";
    case Kind::one_peer_exponential: return "one_peer_exponential";
  }
  return "?";
}

inline Kind parse_kind(std::string_view s) {
  for (Kind k : {Kind::ring, Kind::torus, Kind::complete, Kind::social, Kind::star, Kind::one_peer_exponential})
    if (s == to_string(k)) return k;
  if (s == "exponential" || s == "one_peer_exp") return Kind::one_peer_exponential;
  throw ConfigError("unknown topology kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Scheme s) {
  return s == Scheme::metropolis_hastings ? "metropolis_hastings" : "uniform_neighbor";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "mh" || s == "metropolis_hastings") return Scheme::metropolis_hastings;
  if (s == "uniform" || s == "uniform_neighbor") return Scheme::uniform_neighbor;
  throw ConfigError("unknown mixing scheme '" + std::string(s) + "'");
}

using Edge = std::pair<std::size_t, std::size_t>;

/// Davis "Southern Women" affiliation network: 18 women (nodes 0..17) and the
/// 14 events they attended (nodes 18..31), 89 edges. Node order matches the
/// networkx generator davis_southern_women_graph().
inline const std::vector<Edge>& davis_southern_women_edges() {
  static const std::vector<Edge> edges = {
      {0, 18},  {0, 19},  {0, 20},  {0, 21},  {0, 22},  {0, 23},  {0, 25},  {0, 26},  {1, 18},  {1, 19},
      {1, 20},  {1, 22},  {1, 23},  {1, 24},  {1, 25},  {2, 19},  {2, 20},  {2, 21},  {2, 22},  {2, 23},
      {2, 24},  {2, 25},  {2, 26},  {3, 18},  {3, 20},  {3, 21},  {3, 22},  {3, 23},  {3, 24},  {3, 25},
      {4, 20},  {4, 21},  {4, 22},  {4, 24},  {5, 20},  {5, 22},  {5, 23},  {5, 25},  {6, 22},  {6, 23},
      {6, 24},  {6, 25},  {7, 23},  {7, 25},  {7, 26},  {8, 22},  {8, 24},  {8, 25},  {8, 26},  {9, 24},
      {9, 25},  {9, 26},  {9, 29},  {10, 25}, {10, 26}, {10, 27}, {10, 29}, {11, 25}, {11, 26}, {11, 27},
      {11, 29}, {11, 30}, {11, 31}, {12, 24}, {12, 25}, {12, 26}, {12, 27}, {12, 29}, {12, 30}, {12, 31},
      {13, 23}, {13, 24}, {13, 26}, {13, 27}, {13, 28}, {13, 29}, {13, 30}, {13, 31}, {14, 24}, {14, 25},
      {14, 27}, {14, 28}, {14, 29}, {15, 25}, {15, 26}, {16, 26}, {16, 28}, {17, 26}, {17, 28}};
  return edges;
}

inline constexpr std::size_t kSocialNodes = 32;

struct GraphParams {
  std::optional<std::size_t> torus_rows;
};

/// Undirected communication graph. For one_peer_exponential the edge set is
/// empty: the peer of each node changes every step (see one_peer_exponential_matrix).
class Graph {
 public:
  Graph(Kind kind, std::size_t n, std::vector<Edge> edges) : kind_(kind), n_(n) {
    std::set<Edge> unique;
    for (auto [a, b] : edges) {
      if (a == b) continue;
      if (a >= n || b >= n) throw ConstraintError("edge endpoint out of range");
      unique.insert(std::minmax(a, b));
    }
    edges_.assign(unique.begin(), unique.end());
    neighbors_.resize(n);
    for (auto [a, b] : edges_) {
      neighbors_[a].push_back(b);
      neighbors_[b].push_back(a);
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  }

  Kind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t degree(std::size_t i) const { return neighbors_.at(i).size(); }
  bool is_static() const noexcept { return kind_ != Kind::one_peer_exponential; }

  bool is_connected() const {
    if (n_ <= 1) return true;
    std::vector<bool> seen(n_, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : neighbors_[u])
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          q.push(v);
        }
    }
    return count == n_;
  }

  bool is_regular() const {
    if (n_ == 0) return true;
    const auto d0 = degree(0);
    for (std::size_t i = 1; i < n_; ++i)
      if (degree(i) != d0) return false;
    return true;
  }

 private:
  Kind kind_;
  std::size_t n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Row count used for an n-node torus when none is given: the largest divisor
/// r <= sqrt(n) with r >= 2 and n / r >= 2.
inline std::optional<std::size_t> default_torus_rows(std::size_t n) {
  for (auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n))); r >= 2; --r)
    if (n % r == 0 && n / r >= 2) return r;
  return std::nullopt;
}

inline bool is_power_of_two(std::size_t n) { return n >= 1 && std::has_single_bit(n); }

inline Graph build_graph(Kind kind, std::size_t n, const GraphParams& params = {}) {
  if (n < 1) throw ConstraintError("graph requires n >= 1");
  std::vector<Edge> edges;
  switch (kind) {
    case Kind::ring:
      for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
      break;
    case Kind::complete:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      break;
    case Kind::star:
      for (std::size_t i = 1; i < n; ++i) edges.emplace_back(0, i);
      break;
    case Kind::torus: {
      const auto rows = params.torus_rows ? params.torus_rows : default_torus_rows(n);
      if (!rows || *rows < 2 || n % *rows != 0 || n / *rows < 2)
        throw ConstraintError("torus requires n = rows * cols with rows, cols >= 2 (n = " + std::to_string(n) + ")");
      const std::size_t r = *rows, c = n / r;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const auto a = i * c + j;
          edges.emplace_back(a, ((i + 1) % r) * c + j);
          edges.emplace_back(a, i * c + (j + 1) % c);
        }
      break;
    }
    case Kind::social:
      if (n != kSocialNodes) throw ConstraintError("social topology requires n = 32");
      edges = davis_southern_women_edges();
      break;
    case Kind::one_peer_exponential:
      if (!is_power_of_two(n)) throw ConstraintError("one_peer_exponential requires n a power of two");
      return Graph(kind, n, {});
  }
  Graph g(kind, n, std::move(edges));
  if (!g.is_connected()) throw ConstraintError("graph is not connected");
  return g;
}

/// Result of the spectral-gap computation. `disconnected` is set when the
/// second singular value reaches 1, in which case rho is reported as 0.
struct SpectralGap {
  double rho = 0.0;
  double sigma2 = 1.0;
  bool disconnected = false;
};

/// rho = 1 - sigma_2(W)^2, with sigma_2 the largest singular value of W - 11^T/n.
inline SpectralGap spectral_gap(const Mat& w) {
  const auto n = w.rows();
  if (n != w.cols()) throw ConstraintError("mixing matrix must be square");
  const Mat centered = w - Mat::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::JacobiSVD<Mat> svd(centered);
  const double sigma = n > 0 ? svd.singularValues()(0) : 0.0;
  SpectralGap out;
  out.sigma2 = sigma;
  if (sigma >= 1.0 - 1e-12) {
    out.rho = 0.0;
    out.disconnected = true;
  } else {
    out.rho = 1.0 - sigma * sigma;
  }
  return out;
}

/// Doubly stochastic gossip matrix with its spectral gap.
class MixingMatrix {
 public:
  MixingMatrix(Mat weights, Scheme scheme) : weights_(std::move(weights)), scheme_(scheme) {
    gap_ = spectral_gap(weights_);
  }
  /// For matrices whose spectrum is known in closed form.
  MixingMatrix(Mat weights, Scheme scheme, SpectralGap gap)
      : weights_(std::move(weights)), scheme_(scheme), gap_(gap) {}

  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  const Mat& weights() const noexcept { return weights_; }
  double operator()(std::size_t i, std::size_t j) const {
    return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double rho() const noexcept { return gap_.rho; }
  const SpectralGap& gap() const noexcept { return gap_; }
  Scheme scheme() const noexcept { return scheme_; }

  /// Largest |row sum - 1| and |column sum - 1|.
  double stochasticity_error() const {
    const double rows = (weights_.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double cols = (weights_.colwise().sum().array() - 1.0).abs().maxCoeff();
    return std::max(rows, cols);
  }

  static MixingMatrix identity(std::size_t n) {
    return MixingMatrix(Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                        Scheme::uniform_neighbor);
  }

 private:
  Mat weights_;
  Scheme scheme_;
  SpectralGap gap_;
};

inline MixingMatrix mixing_matrix(const Graph& g, Scheme scheme = Scheme::metropolis_hastings) {
  if (!g.is_static()) throw ConstraintError("mixing_matrix requires a static graph; use one_peer_exponential_matrix");
  if (!g.is_connected()) throw ConstraintError("mixing_matrix requires a connected graph");
  const auto n = static_cast<Eigen::Index>(g.size());
  Mat w = Mat::Zero(n, n);
  if (scheme == Scheme::uniform_neighbor) {
    if (!g.is_regular()) throw ConstraintError("uniform_neighbor weights require a regular graph (scheme mismatch)");
    const double weight = g.size() ? 1.0 / static_cast<double>(g.degree(0) + 1) : 1.0;
    for (auto [a, b] : g.edges()) {
      w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = weight;
      w(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = weight;
    }
  } else {
    for (auto [a, b] : g.edges()) {
      const double weight = 1.0 / static_cast<double>(1 + std::max(g.degree(a), g.degree(b)));
      w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = weight;
      w(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = weight;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double off = 0.0;
    for (auto j : g.neighbors(static_cast<std::size_t>(i))) off += w(i, static_cast<Eigen::Index>(j));
    w(i, i) = 1.0 - off;
  }
  return MixingMatrix(std::move(w), scheme);
}

/// W_t = (I + P)/2 where P sends node i to node i + 2^(t mod log2 n).
inline MixingMatrix one_peer_exponential_matrix(std::size_t n, std::size_t t) {
  if (!is_power_of_two(n)) throw ConstraintError("one_peer_exponential requires n a power of two");
  const auto en = static_cast<Eigen::Index>(n);
  Mat w = Mat::Zero(en, en);
  if (n == 1) {
    w(0, 0) = 1.0;
    return MixingMatrix(std::move(w), Scheme::uniform_neighbor);
  }
  const auto log2n = static_cast<std::size_t>(std::countr_zero(n));
  const std::size_t offset = std::size_t{1} << (t % log2n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    w(ei, ei) += 0.5;
    w(ei, static_cast<Eigen::Index>((i + offset) % n)) += 0.5;
  }
  // (I + P)/2 is normal with eigenvalues (1 + e^{2 pi i j offset / n}) / 2, so
  // its singular values are |cos(pi j offset / n)|.
  double sigma = 0.0;
  for (std::size_t j = 1; j < n; ++j)
    sigma = std::max(sigma, std::abs(std::cos(std::numbers::pi * static_cast<double>(j * offset) / static_cast<double>(n))));
  SpectralGap gap;
  gap.sigma2 = sigma;
  gap.disconnected = sigma >= 1.0 - 1e-12;
  gap.rho = gap.disconnected ? 0.0 : 1.0 - sigma * sigma;
  return MixingMatrix(std::move(w), Scheme::uniform_neighbor, gap);
}

/// Either a fixed matrix or the time-varying one-peer exponential sequence.
class GossipSchedule {
 public:
  explicit GossipSchedule(MixingMatrix w) : static_(std::move(w)), n_(static_->size()) {}
  static GossipSchedule exponential(std::size_t n) {
    GossipSchedule s(n);
    (void)one_peer_exponential_matrix(n, 0);  // validates n
    return s;
  }

  std::size_t size() const noexcept { return n_; }
  bool time_varying() const noexcept { return !static_.has_value(); }

  MixingMatrix at(std::size_t t) const { return static_ ? *static_ : one_peer_exponential_matrix(n_, t); }

  /// rho of the static matrix. For the exponential sequence a single round is
  /// not connected (rho = 0) for n > 2; the gap reported is that of the
  /// product over one period of log2(n) rounds, which is the exact average.
  double rho() const {
    if (static_) return static_->rho();
    Mat prod = Mat::Identity(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    const auto period = n_ > 1 ? static_cast<std::size_t>(std::countr_zero(n_)) : 1;
    for (std::size_t t = 0; t < period; ++t) prod = prod * one_peer_exponential_matrix(n_, t).weights();
    return spectral_gap(prod).rho;
  }

 private:
  explicit GossipSchedule(std::size_t n) : n_(n) {}
  std::optional<MixingMatrix> static_;
  std::size_t n_;
};

}  // namespace qgm::topology
