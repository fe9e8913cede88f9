#pragma once

// Gradient oracles for the test problems: the two-agent heterogeneous toy,
// Rosenbrock, the log-cosh non-convex toy, and a family of per-worker
// quadratics with tunable smoothness, noise and heterogeneity.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qgm/core.hpp"
#include "qgm/random.hpp"

namespace qgm::oracles {

struct GradientSample {
  Vec grad;
  double loss = 0.0;
  std::size_t worker = 0;
  std::uint64_t step_seed = 0;
  bool converged = false;  // toy2d only: x sits exactly on the target
};

/// Two agents pulled toward their own target with a constant-magnitude
/// gradient. A descent step moves toward the target.
struct Toy2d {
  std::vector<Vec> targets;
  double magnitude = 1.0;

  static Toy2d standard() {
    Toy2d t;
    t.targets = {Vec{{0.0, 5.0}}, Vec{{4.0, 0.0}}};
    return t;
  }

  GradientSample gradient(std::size_t worker, const Vec& x) const {
    const Vec& target = targets.at(worker);
    const Vec diff = x - target;
    const double dist = diff.norm();
    GradientSample s;
    s.worker = worker;
    s.loss = dist;
    if (dist == 0.0) {
      s.grad = Vec::Zero(2);
      s.converged = true;
    } else {
      s.grad = magnitude * diff / dist;
    }
    return s;
  }
};

/// f(x, y) = (y - x^2)^2 + 100 (x - 1)^2, minimum at (1, 1).
struct Rosenbrock {
  static double value(const Vec& p) {
    const double x = p(0), y = p(1);
    const double r = y - x * x;
    return r * r + 100.0 * (x - 1.0) * (x - 1.0);
  }
  GradientSample gradient(std::size_t worker, const Vec& p) const {
    const double x = p(0), y = p(1);
    GradientSample s;
    s.worker = worker;
    s.grad = Vec{{-4.0 * x * (y - x * x) + 200.0 * (x - 1.0), 2.0 * (y - x * x)}};
    s.loss = value(p);
    return s;
  }
};

/// log(e^u + e^-u) without overflow.
inline double log_two_cosh(double u) {
  const double a = std::abs(u);
  return a + std::log1p(std::exp(-2.0 * a));
}

/// f(x, y) = log(e^x + e^-x) + b log(e^v + e^-v), v = e^x (y - sin(a x)).
struct NonconvexToy {
  double a = 8.0;
  double b = 10.0;

  double value(const Vec& p) const {
    const double v = std::exp(p(0)) * (p(1) - std::sin(a * p(0)));
    return log_two_cosh(p(0)) + b * log_two_cosh(v);
  }
  GradientSample gradient(std::size_t worker, const Vec& p) const {
    const double x = p(0), y = p(1);
    const double ex = std::exp(x);
    const double v = ex * (y - std::sin(a * x));
    const double dv_dx = v - a * ex * std::cos(a * x);
    const double tv = std::tanh(v);
    GradientSample s;
    s.worker = worker;
    s.grad = Vec{{std::tanh(x) + b * tv * dv_dx, b * tv * ex}};
    s.loss = value(p);
    return s;
  }
};

/// f_i(x) = 1/2 ||A_i x - b_i||^2 with additive Gaussian gradient noise of
/// per-coordinate standard deviation `sigma`.
struct QuadraticFamily {
  std::vector<Mat> a;
  std::vector<Vec> b;
  double sigma = 0.0;
  // Analytic constants of the construction.
  double smoothness = 0.0;  // L = max_i lambda_max(A_i^T A_i)
  double sigma2 = 0.0;      // dim * sigma^2
  double zeta2 = 0.0;       // (1/n) sum_i ||grad f_i - grad f||^2 (x-independent here)

  std::size_t workers() const { return a.size(); }
  Eigen::Index dim() const { return a.empty() ? 0 : a.front().cols(); }

  double loss(std::size_t worker, const Vec& x) const {
    return 0.5 * (a.at(worker) * x - b.at(worker)).squaredNorm();
  }
  Vec exact_gradient(std::size_t worker, const Vec& x) const {
    const Mat& aw = a.at(worker);
    return aw.transpose() * (aw * x - b.at(worker));
  }
  GradientSample gradient(std::size_t worker, const Vec& x) const {
    GradientSample s;
    s.worker = worker;
    s.grad = exact_gradient(worker, x);
    s.loss = loss(worker, x);
    return s;
  }
  GradientSample sample(std::size_t worker, const Vec& x, std::uint64_t step_seed) const {
    GradientSample s = gradient(worker, x);
    s.step_seed = step_seed;
    if (sigma > 0.0) {
      rng::Stream stream(step_seed, 0x9A55u, worker);
      for (Eigen::Index k = 0; k < s.grad.size(); ++k) s.grad(k) += sigma * stream.normal();
    }
    return s;
  }
  /// Minimiser of the average loss.
  Vec minimizer() const {
    const auto d = dim();
    Mat h = Mat::Zero(d, d);
    Vec r = Vec::Zero(d);
    for (std::size_t i = 0; i < workers(); ++i) {
      h += a[i].transpose() * a[i];
      r += a[i].transpose() * b[i];
    }
    return h.ldlt().solve(r);
  }
  /// (1/n) sum_i ||grad f_i(x) - grad f(x)||^2 evaluated at x.
  double heterogeneity(const Vec& x) const {
    const auto n = workers();
    Vec mean = Vec::Zero(dim());
    std::vector<Vec> grads;
    for (std::size_t i = 0; i < n; ++i) {
      grads.push_back(exact_gradient(i, x));
      mean += grads.back();
    }
    mean /= static_cast<double>(n);
    double acc = 0.0;
    for (const auto& g : grads) acc += (g - mean).squaredNorm();
    return acc / static_cast<double>(n);
  }
};

struct QuadraticOptions {
  std::size_t dim = 10;
  std::size_t workers = 4;
  double zeta = 0.0;  // heterogeneity magnitude of the b_i perturbations
  double sigma = 0.0;
  double lambda_min = 0.1;
  double lambda_max = 1.0;
  std::uint64_t seed = 1;
};

/// A_i = A = diag(sqrt(lambda)) Q^T for a seeded rotation Q with eigenvalues
/// of A^T A spaced linearly in [lambda_min, lambda_max]; b_i = b + zeta e_(i mod dim).
inline QuadraticFamily make_quadratic_family(const QuadraticOptions& opt) {
  if (opt.dim < 1 || opt.workers < 1) throw ParameterError("quadratic family needs dim >= 1 and workers >= 1");
  if (!(opt.lambda_min > 0.0) || opt.lambda_max < opt.lambda_min)
    throw ParameterError("quadratic family needs 0 < lambda_min <= lambda_max");
  const auto d = static_cast<Eigen::Index>(opt.dim);
  rng::Stream stream(opt.seed, 0x0A0Au, 0);
  Mat gauss(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) gauss(i, j) = stream.normal();
  const Mat q = Eigen::HouseholderQR<Mat>(gauss).householderQ();
  Vec sqrt_lambda(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double t = d > 1 ? static_cast<double>(k) / static_cast<double>(d - 1) : 1.0;
    sqrt_lambda(k) = std::sqrt(opt.lambda_min + t * (opt.lambda_max - opt.lambda_min));
  }
  const Mat a = sqrt_lambda.asDiagonal() * q.transpose();
  Vec base(d);
  for (Eigen::Index k = 0; k < d; ++k) base(k) = stream.normal();

  QuadraticFamily fam;
  fam.sigma = opt.sigma;
  fam.smoothness = opt.lambda_max;
  fam.sigma2 = static_cast<double>(opt.dim) * opt.sigma * opt.sigma;
  std::vector<Vec> units;
  Vec mean_unit = Vec::Zero(d);
  for (std::size_t i = 0; i < opt.workers; ++i) {
    Vec u = Vec::Zero(d);
    u(static_cast<Eigen::Index>(i % opt.dim)) = 1.0;
    units.push_back(u);
    mean_unit += u;
    fam.a.push_back(a);
    fam.b.push_back(base + opt.zeta * u);
  }
  mean_unit /= static_cast<double>(opt.workers);
  // grad f_i - grad f = -zeta A^T (u_i - mean u), independent of x.
  double acc = 0.0;
  for (const auto& u : units) acc += (a.transpose() * (u - mean_unit)).squaredNorm();
  fam.zeta2 = opt.zeta * opt.zeta * acc / static_cast<double>(opt.workers);
  return fam;
}

enum class ProblemKind { toy2d_hetero, rosenbrock, nonconvex_toy, quadratic_family };

inline std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::toy2d_hetero: return "toy2d_hetero";
    case ProblemKind::rosenbrock: return "rosenbrock";
    case ProblemKind::nonconvex_toy: return "nonconvex_toy";
    case ProblemKind::quadratic_family: return "quadratic";
  }
  return "?";
}

inline ProblemKind parse_problem_kind(std::string_view s) {
  if (s == "toy2d" || s == "toy2d_hetero") return ProblemKind::toy2d_hetero;
  if (s == "rosenbrock") return ProblemKind::rosenbrock;
  if (s == "nonconvex_toy" || s == "nonconvex") return ProblemKind::nonconvex_toy;
  if (s == "quadratic" || s == "quadratic_family") return ProblemKind::quadratic_family;
  throw ConfigError("unknown problem kind '" + std::string(s) + "'");
}

/// A problem instance shared by `workers` nodes. Rosenbrock and the non-convex
/// toy give every worker the same function.
class Problem {
 public:
  using Data = std::variant<Toy2d, Rosenbrock, NonconvexToy, QuadraticFamily>;

  Problem(Data data, std::size_t workers) : data_(std::move(data)), workers_(workers) {
    if (workers_ < 1) throw ConstraintError("problem needs at least one worker");
    if (auto* t = std::get_if<Toy2d>(&data_); t && t->targets.size() != workers_)
      throw ConstraintError("toy2d_hetero needs exactly one target per worker (" + std::to_string(t->targets.size()) +
                            " targets, " + std::to_string(workers_) + " workers)");
    if (auto* q = std::get_if<QuadraticFamily>(&data_); q && q->workers() != workers_)
      throw ConstraintError("quadratic family worker count does not match");
  }

  ProblemKind kind() const {
    return std::visit(
        [](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Toy2d>) return ProblemKind::toy2d_hetero;
          else if constexpr (std::is_same_v<T, Rosenbrock>) return ProblemKind::rosenbrock;
          else if constexpr (std::is_same_v<T, NonconvexToy>) return ProblemKind::nonconvex_toy;
          else return ProblemKind::quadratic_family;
        },
        data_);
  }

  std::size_t workers() const noexcept { return workers_; }
  Eigen::Index dim() const {
    if (auto* q = std::get_if<QuadraticFamily>(&data_)) return q->dim();
    return 2;
  }
  const Data& data() const noexcept { return data_; }
  bool stochastic() const {
    auto* q = std::get_if<QuadraticFamily>(&data_);
    return q && q->sigma > 0.0;
  }

  /// Deterministic gradient of f_worker.
  GradientSample gradient(std::size_t worker, const Vec& x) const {
    return std::visit([&](const auto& d) { return d.gradient(worker, x); }, data_);
  }

  /// Stochastic gradient keyed by step_seed (equal to gradient() for the
  /// noise-free problems).
  GradientSample sample(std::size_t worker, const Vec& x, std::uint64_t step_seed) const {
    if (auto* q = std::get_if<QuadraticFamily>(&data_)) return q->sample(worker, x, step_seed);
    auto s = gradient(worker, x);
    s.step_seed = step_seed;
    return s;
  }

  /// f(x) = (1/n) sum_i f_i(x) and its gradient.
  GradientSample global(const Vec& x) const {
    GradientSample out;
    out.grad = Vec::Zero(x.size());
    for (std::size_t i = 0; i < workers_; ++i) {
      const auto s = gradient(i, x);
      out.grad += s.grad;
      out.loss += s.loss;
    }
    out.grad /= static_cast<double>(workers_);
    out.loss /= static_cast<double>(workers_);
    return out;
  }

  std::optional<double> sigma2() const {
    if (auto* q = std::get_if<QuadraticFamily>(&data_)) return q->sigma2;
    return 0.0;
  }

 private:
  Data data_;
  std::size_t workers_;
};

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|, |fd|).
/// `loss` and `grad` must be deterministic.
inline double finite_difference_check(const std::function<double(const Vec&)>& loss,
                                      const std::function<Vec(const Vec&)>& grad, const Vec& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be positive");
  const Vec g = grad(x);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec up = x, down = x;
    up(k) += h;
    down(k) -= h;
    const double fd = (loss(up) - loss(down)) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(g(k)), std::abs(fd)});
    worst = std::max(worst, std::abs(g(k) - fd) / scale);
  }
  return worst;
}

/// Convenience overload for a worker of a problem.
inline double finite_difference_check(const Problem& p, std::size_t worker, const Vec& x, double h) {
  return finite_difference_check([&](const Vec& y) { return p.gradient(worker, y).loss; },
                                 [&](const Vec& y) { return p.gradient(worker, y).grad; }, x, h);
}

}  // namespace qgm::oracles
