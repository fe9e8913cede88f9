#include <gtest/gtest.h>

#include <cmath>

#include "qgm/optim.hpp"
#include "qgm/oracles.hpp"
#include "qgm/random.hpp"
#include "qgm/topology.hpp"

using namespace qgm;
using namespace qgm::optim;
namespace topo = qgm::topology;

namespace {

Vec scalar(double v) { return Vec::Constant(1, v); }

topo::MixingMatrix ring(std::size_t n) { return topo::mixing_matrix(topo::build_graph(topo::Kind::ring, n)); }
topo::MixingMatrix complete(std::size_t n) { return topo::mixing_matrix(topo::build_graph(topo::Kind::complete, n)); }

oracles::QuadraticFamily quadratics(std::size_t n, double zeta, std::size_t dim = 5, std::uint64_t seed = 3) {
  oracles::QuadraticOptions o;
  o.dim = dim;
  o.workers = n;
  o.zeta = zeta;
  o.seed = seed;
  return oracles::make_quadratic_family(o);
}

std::vector<Vec> grads_at(const oracles::Problem& p, const std::vector<WorkerState>& s) {
  std::vector<Vec> g;
  for (std::size_t i = 0; i < s.size(); ++i) g.push_back(p.gradient(i, s[i].x).grad);
  return g;
}

Vec rosen_grad(const Vec& x) { return oracles::Rosenbrock{}.gradient(0, x).grad; }

double rel_diff(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  rng::Stream s(seed, 0x77);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = s.normal();
  return m;
}

}  // namespace

// ---- gossip --------------------------------------------------------------

TEST(Gossip, IdentityLeavesStatesUnchanged) {
  auto s = make_states(3, Vec::Zero(2));
  s[0].x = Vec{{1.0, 2.0}};
  s[1].m_hat = Vec{{5.0, 5.0}};
  const auto out = gossip(s, topo::MixingMatrix::identity(3));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out[i].x, s[i].x);
    EXPECT_EQ(out[i].m_hat, s[i].m_hat);
  }
}

TEST(Gossip, CompleteTwoAverages) {
  auto s = make_states(2, Vec::Zero(2));
  s[1].x = Vec{{4.0, 2.0}};
  s[1].m_local = Vec{{7.0, 7.0}};
  const auto out = gossip(s, complete(2));
  EXPECT_EQ(out[0].x, (Vec{{2.0, 1.0}}));
  EXPECT_EQ(out[1].x, (Vec{{2.0, 1.0}}));
  EXPECT_EQ(out[1].m_local, (Vec{{7.0, 7.0}}));
}

TEST(Gossip, RingThreeIsUniform) {
  auto s = make_states(3, scalar(0));
  for (int i = 0; i < 3; ++i) s[i].x = scalar(i + 1);
  const auto out = gossip(s, ring(3));
  for (const auto& w : out) EXPECT_NEAR(w.x(0), 2.0, 1e-15);
}

TEST(Gossip, SizeMismatch) {
  EXPECT_THROW(gossip(make_states(3, scalar(0)), complete(4)), ConstraintError);
  auto s = make_states(2, scalar(0));
  s[1].x = Vec::Zero(2);
  EXPECT_THROW(gossip(s, complete(2)), ConstraintError);
}

// ---- local half step ------------------------------------------------------

TEST(LocalHalfStep, Dsgd) {
  HyperParams hp;
  hp.eta = 0.1;
  const auto s = local_half_step(LocalKind::dsgd, WorkerState(scalar(1.0)), scalar(0.5), hp);
  EXPECT_DOUBLE_EQ(s.x(0), 0.95);
}

TEST(LocalHalfStep, DsgdmFirstStepIsSgd) {
  HyperParams hp;
  hp.eta = 1.0;
  const auto s = local_half_step(LocalKind::dsgdm, WorkerState(scalar(3.0)), scalar(1.0), hp);
  EXPECT_EQ(s.m_local(0), 1.0);
  EXPECT_EQ(s.x(0), 2.0);
  const auto s2 = local_half_step(LocalKind::dsgdm, s, scalar(1.0), hp);
  EXPECT_DOUBLE_EQ(s2.m_local(0), 1.9);
  EXPECT_NEAR(s2.x(0), 0.1, 1e-15);
}

TEST(LocalHalfStep, NesterovPytorchConvention) {
  HyperParams hp;
  hp.eta = 1.0;
  const auto s = local_half_step(LocalKind::dsgdm_n, WorkerState(scalar(0.0)), scalar(1.0), hp);
  EXPECT_EQ(s.m_local(0), 1.0);
  EXPECT_DOUBLE_EQ(s.x(0), -1.9);
}

TEST(LocalHalfStep, QuasiGlobalReadsButKeepsBuffer) {
  HyperParams hp;
  hp.eta = 0.5;
  hp.beta = 0.5;
  WorkerState w(scalar(0.0));
  w.m_hat = scalar(2.0);
  const auto a = local_half_step(LocalKind::qg_dsgdm, w, scalar(1.0), hp);
  EXPECT_DOUBLE_EQ(a.x(0), -1.0);
  EXPECT_EQ(a.m_hat(0), 2.0);
  // m_tmp = 0.5 * 2 + 1 = 2, x -= 0.5 * (0.5 * 2 + 1)
  const auto b = local_half_step(LocalKind::qg_dsgdm_n, w, scalar(1.0), hp);
  EXPECT_DOUBLE_EQ(b.x(0), -1.0);
  EXPECT_EQ(b.m_hat(0), 2.0);
  EXPECT_THROW(local_half_step(LocalKind::dsgd, w, Vec::Zero(2), hp), ConstraintError);
}

TEST(LocalKinds, ParseRoundTrip) {
  EXPECT_EQ(parse_local_kind("qg_dsgdm_n"), LocalKind::qg_dsgdm_n);
  EXPECT_THROW(parse_local_kind("adam"), ConfigError);
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("sgd"), ConfigError);
}

TEST(HyperParams, Validation) {
  HyperParams hp;
  EXPECT_NO_THROW(hp.validate());
  hp.beta = 1.0;
  EXPECT_THROW(hp.validate(), ParameterError);
  hp = HyperParams{};
  hp.eta = 0.0;
  EXPECT_THROW(hp.validate(), ParameterError);
  hp = HyperParams{};
  hp.tau = 0;
  EXPECT_THROW(hp.validate(), ParameterError);
  hp = HyperParams{};
  hp.mu = -0.1;
  EXPECT_THROW(hp.validate(), ParameterError);
}

// ---- quasi-global buffer ---------------------------------------------------

TEST(QgBuffer, ZeroInit) {
  const auto s = qg_buffer_update(WorkerState(Vec::Zero(2)), Vec{{1.0, 0.0}}, Vec::Zero(2), 1.0, 0.9);
  EXPECT_NEAR(s.m_hat(0), 0.1, 1e-15);
  EXPECT_EQ(s.m_hat(1), 0.0);
}

TEST(QgBuffer, MuZeroIsDifference) {
  WorkerState w(Vec::Zero(2));
  w.m_hat = Vec{{9.0, 9.0}};
  const auto s = qg_buffer_update(w, Vec{{1.0, 3.0}}, Vec{{0.5, 1.0}}, 0.5, 0.0);
  EXPECT_EQ(s.m_hat, (Vec{{1.0, 4.0}}));
}

TEST(QgBuffer, TwoUpdatesUnrolled) {
  const double mu = 0.7, eta = 0.25;
  const Vec d1{{1.0, -2.0}}, d2{{0.5, 3.0}};
  auto s = qg_buffer_update(WorkerState(Vec::Zero(2)), eta * d1, Vec::Zero(2), eta, mu);
  s = qg_buffer_update(s, eta * d2, Vec::Zero(2), eta, mu);
  const Vec expect = mu * (1 - mu) * d1 + (1 - mu) * d2;
  EXPECT_LT((s.m_hat - expect).norm(), 1e-15);
}

TEST(QgBuffer, ZeroEtaRejected) {
  EXPECT_THROW(qg_buffer_update(WorkerState(scalar(0)), scalar(1), scalar(0), 0.0, 0.5), ParameterError);
}

TEST(QgGate, Examples) {
  for (long t = 1; t <= 10; ++t) EXPECT_TRUE(qg_multistep_gate(t, 1));
  std::vector<long> hits;
  for (long t = 1; t <= 8; ++t)
    if (qg_multistep_gate(t, 4)) hits.push_back(t);
  EXPECT_EQ(hits, (std::vector<long>{4, 8}));
  EXPECT_THROW(qg_multistep_gate(1, 0), ParameterError);
}

// ---- exact identities ------------------------------------------------------

TEST(Identity, MuZeroQgIsDsgdmSingleWorker) {
  HyperParams hp;
  hp.eta = 1e-3;
  hp.beta = 0.9;
  hp.mu = 0.0;
  const auto w = topo::MixingMatrix::identity(1);
  auto qg = make_states(1, Vec{{-1.0, 1.5}});
  auto hb = qg;
  double worst = 0.0;
  for (long t = 1; t <= 1000; ++t) {
    const std::vector<Vec> gq{rosen_grad(qg[0].x)}, gh{rosen_grad(hb[0].x)};
    qg = local_sgd_round(LocalKind::qg_dsgdm, std::move(qg), gq, w, hp, t);
    hb = local_sgd_round(LocalKind::dsgdm, std::move(hb), gh, w, hp, t);
    worst = std::max(worst, rel_diff(qg[0].x, hb[0].x));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Identity, SingleWorkerQgIsQhm) {
  HyperParams hp;
  hp.eta = 1e-3;
  hp.beta = 0.9;
  hp.mu = 0.9;
  const auto w = topo::MixingMatrix::identity(1);
  auto qg = make_states(1, Vec{{-1.0, 1.5}});
  WorkerState qh = qg[0];
  double worst = 0.0;
  for (long t = 1; t <= 1000; ++t) {
    const std::vector<Vec> g{rosen_grad(qg[0].x)};
    qg = local_sgd_round(LocalKind::qg_dsgdm, std::move(qg), g, w, hp, t);
    qh = qhm_step(std::move(qh), rosen_grad(qh.x), hp);
    worst = std::max(worst, rel_diff(qg[0].x, qh.x));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Identity, QhmWithMuZeroIsHeavyBall) {
  HyperParams hp;
  hp.eta = 1e-3;
  hp.mu = 0.0;
  WorkerState a(Vec{{0.0, 0.0}}), b = a;
  for (int t = 0; t < 1000; ++t) {
    a = qhm_step(std::move(a), rosen_grad(a.x), hp);
    b = local_half_step(LocalKind::dsgdm, std::move(b), rosen_grad(b.x), hp);
    ASSERT_EQ(a.x, b.x);
  }
}

TEST(Identity, QhmDegenerateBetaMuZeroIsSgd) {
  HyperParams hp;
  hp.eta = 0.1;
  hp.beta = 0.0;
  hp.mu = 0.0;
  const auto s = qhm_step(WorkerState(scalar(1.0)), scalar(2.0), hp);
  EXPECT_DOUBLE_EQ(s.x(0), 0.8);
}

TEST(Identity, NesterovLookaheadMatchesClosedForm) {
  HyperParams hp;
  hp.eta = 1e-3;
  hp.beta = 0.9;
  hp.mu = 0.8;
  WorkerState a(Vec{{-1.0, 1.5}}), b = a;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    a = qg_nesterov_lookahead_step(std::move(a), rosen_grad, hp);
    b = qhm_nesterov_step(std::move(b), rosen_grad, hp);
    worst = std::max(worst, rel_diff(a.x, b.x));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Identity, NesterovRescalingIsQhmNu) {
  const double eta = 1e-3, beta = 0.9;
  HyperParams hp;
  hp.eta = eta;
  hp.beta = beta;
  WorkerState a(Vec{{-1.0, 1.5}}), b = a;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    a = local_half_step(LocalKind::dsgdm_n, std::move(a), rosen_grad(a.x), hp);
    b = qhm_nu_step(std::move(b), rosen_grad(b.x), eta / (1.0 - beta), beta, beta);
    worst = std::max(worst, rel_diff(a.x, b.x));
  }
  EXPECT_LE(worst, 1e-10);
}

namespace {

// Direct matrix recursion: X_half = X - eta (beta M + G), X' = X_half W,
// M' = mu M + (1 - mu)(X - X') / eta on gated steps, else M' = M.
struct MatrixQg {
  Mat x, m;
  void step(const Mat& g, const Mat& w, double eta, double beta, double mu, bool refresh) {
    const Mat next = (x - eta * (beta * m + g)) * w;
    if (refresh) m = mu * m + (1.0 - mu) * (x - next) / eta;
    x = next;
  }
};

Mat grad_matrix(const oracles::QuadraticFamily& f, const Mat& x) {
  Mat g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) g.col(i) = f.exact_gradient(static_cast<std::size_t>(i), x.col(i));
  return g;
}

double max_rel(const std::vector<WorkerState>& s, const Mat& x, bool buffer) {
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec ref = x.col(static_cast<Eigen::Index>(i));
    worst = std::max(worst, rel_diff(buffer ? s[i].m_hat : s[i].x, ref));
  }
  return worst;
}

void compare_with_matrix_form(int tau, std::uint64_t seed) {
  const std::size_t n = 8;
  const auto fam = quadratics(n, 2.0, 5, seed);
  const auto w = ring(n);
  HyperParams hp;
  hp.eta = 0.2;
  hp.beta = 0.9;
  hp.mu = 0.6;
  hp.tau = tau;
  const Mat x0 = random_mat(5, n, seed);
  MatrixQg ref{x0, Mat::Zero(5, n)};
  std::vector<WorkerState> s;
  for (std::size_t i = 0; i < n; ++i) s.emplace_back(Vec(x0.col(static_cast<Eigen::Index>(i))));
  double worst_x = 0.0, worst_m = 0.0;
  for (long t = 1; t <= 1000; ++t) {
    std::vector<Vec> g;
    for (std::size_t i = 0; i < n; ++i) g.push_back(fam.exact_gradient(i, s[i].x));
    s = local_sgd_round(LocalKind::qg_dsgdm, std::move(s), g, w, hp, t);
    ref.step(grad_matrix(fam, ref.x), w.weights(), hp.eta, hp.beta, hp.mu, t % tau == 0);
    worst_x = std::max(worst_x, max_rel(s, ref.x, false));
    worst_m = std::max(worst_m, max_rel(s, ref.m, true));
  }
  EXPECT_LE(worst_x, 1e-12) << "tau " << tau;
  EXPECT_LE(worst_m, 1e-12) << "tau " << tau;
}

}  // namespace

TEST(MatrixForm, PerWorkerMatchesMatrixRecursion) {
  for (std::uint64_t seed : {1u, 2u, 3u}) compare_with_matrix_form(1, seed);
}

TEST(MatrixForm, TwoStepGateFreezesBufferOnOddSteps) { compare_with_matrix_form(2, 4); }

TEST(MatrixForm, FourStepGate) { compare_with_matrix_form(4, 5); }

TEST(AveragedIterate, MeanFollowsCentralisedMomentumStep) {
  const std::size_t n = 6;
  const auto fam = quadratics(n, 1.5, 4, 9);
  const oracles::Problem p(fam, n);
  const auto w = ring(n);
  HyperParams hp;
  hp.eta = 0.1;
  hp.mu = 0.5;
  std::vector<WorkerState> s;
  const Mat x0 = random_mat(4, n, 9);
  for (std::size_t i = 0; i < n; ++i) s.emplace_back(Vec(x0.col(static_cast<Eigen::Index>(i))));
  double worst = 0.0;
  for (long t = 1; t <= 500; ++t) {
    const auto g = grads_at(p, s);
    Vec m_bar = Vec::Zero(4), g_bar = Vec::Zero(4);
    for (std::size_t i = 0; i < n; ++i) {
      m_bar += s[i].m_hat / double(n);
      g_bar += g[i] / double(n);
    }
    const Vec predicted = average_x(s) - hp.eta * (hp.beta * m_bar + g_bar);
    s = local_sgd_round(LocalKind::qg_dsgdm, std::move(s), g, w, hp, t);
    worst = std::max(worst, rel_diff(average_x(s), predicted));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Homogeneity, EveryMethodCollapsesToSingleWorker) {
  const auto fam1 = quadratics(1, 0.0, 3, 2);
  const auto fam4 = quadratics(4, 0.0, 3, 2);
  const oracles::Problem p1(fam1, 1), p4(fam4, 4);
  const auto w = ring(4);
  HyperParams hp;
  hp.eta = 0.05;
  const Vec x0{{1.0, -2.0, 0.5}};
  for (Method m : kAllMethods) {
    if (!is_single_round(m)) continue;
    auto one = make_states(1, x0);
    auto four = make_states(4, x0);
    for (long t = 1; t <= 200; ++t) {
      std::vector<Vec> g1{p1.gradient(0, sample_point(m, hp, one[0])).grad}, g4;
      for (std::size_t i = 0; i < 4; ++i) g4.push_back(p4.gradient(i, sample_point(m, hp, four[i])).grad);
      one = network_step(m, std::move(one), g1, topo::MixingMatrix::identity(1), hp, t);
      four = network_step(m, std::move(four), g4, w, hp, t);
    }
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(rel_diff(four[i].x, one[0].x), 1e-12) << to_string(m);
  }
}

TEST(FixedPoint, StaysPutWithZeroGradientAndIdenticalWorkers) {
  const auto w = ring(5);
  HyperParams hp;
  const Vec x0{{0.3, -0.7}};
  for (Method m : kAllMethods) {
    if (!is_single_round(m)) continue;
    auto s = make_states(5, x0);
    const std::vector<Vec> g(5, Vec::Zero(2));
    for (long t = 1; t <= 50; ++t) s = network_step(m, std::move(s), g, w, hp, t);
    for (const auto& st : s) EXPECT_LE((st.x - x0).norm(), 1e-15) << to_string(m);
  }
}

TEST(NetworkStep, OuterLoopMethodsRejected) {
  auto s = make_states(2, scalar(0));
  const std::vector<Vec> g(2, scalar(0));
  EXPECT_THROW(network_step(Method::slowmo, s, g, complete(2), HyperParams{}, 1), ConstraintError);
  EXPECT_THROW(network_step(Method::mimelite, s, g, complete(2), HyperParams{}, 1), ConstraintError);
}

// ---- Adam variants ---------------------------------------------------------

TEST(Dadam, FirstStepBuffers) {
  HyperParams hp;
  hp.eta = 0.01;
  const Vec g{{1.0, 0.0, 0.0}};
  auto s = dadam_step(make_states(1, Vec::Zero(3)), std::vector<Vec>{g}, topo::MixingMatrix::identity(1), hp);
  EXPECT_NEAR(s[0].m_local(0), 0.1, 1e-15);
  EXPECT_NEAR(s[0].v(0), 0.01, 1e-15);
  EXPECT_EQ(s[0].v(1), 0.0);
  EXPECT_NEAR(s[0].x(0), -0.01 * 0.1 / (0.1 + 1e-8), 1e-15);
}

TEST(QgDadam, FirstHalfStepUsesZeroBuffers) {
  HyperParams hp;
  hp.eta = 0.01;
  const auto s = qg_adam_half_step(WorkerState(Vec::Zero(3)), Vec{{1.0, 0.0, 0.0}}, hp);
  // m = 0.1, v = 0.01
  EXPECT_NEAR(s.x(0), -0.01 * 0.1 / (0.1 + 1e-8), 1e-15);
  EXPECT_EQ(s.x(1), 0.0);
  EXPECT_EQ(s.m_hat, Vec::Zero(3));
}

TEST(QgDadam, ZeroDirectionDecaysBuffers) {
  HyperParams hp;
  WorkerState w(Vec::Zero(2));
  w.m_hat = Vec{{1.0, 2.0}};
  w.v = Vec{{4.0, 4.0}};
  const auto s = qg_adam_buffer_update(w, Vec{{3.0, 3.0}}, Vec{{3.0, 3.0}}, hp);
  EXPECT_LT((s.m_hat - 0.9 * Vec{{1.0, 2.0}}).norm(), 1e-15);
  EXPECT_LT((s.v - 0.99 * Vec{{4.0, 4.0}}).norm(), 1e-15);
}

TEST(QgDadam, NormalisedDirectionOnRosenbrock) {
  HyperParams hp;
  hp.eta = 1e-3;
  auto s = make_states(2, Vec{{-1.0, 1.0}});
  s[1].x = Vec{{0.5, 0.5}};
  const auto w = complete(2);
  for (int t = 0; t < 10; ++t) {
    const auto prev = s;
    std::vector<Vec> g;
    for (const auto& st : s) g.push_back(rosen_grad(st.x));
    s = qg_dadam_step(std::move(s), g, w, hp);
    for (std::size_t i = 0; i < 2; ++i) {
      ASSERT_TRUE(s[i].finite());
      const Vec d_hat = (s[i].m_hat - hp.beta1 * prev[i].m_hat) / (1.0 - hp.beta1);
      const double norm = d_hat.norm();
      EXPECT_TRUE(norm < 1e-12 || std::abs(norm - 1.0) < 1e-9) << norm;
    }
  }
}

// ---- DMSGD -----------------------------------------------------------------

TEST(Dmsgd, MuOneOptionTwoIsLocalMomentum) {
  HyperParams hp;
  hp.eta = 0.1;
  hp.beta = 0.8;
  hp.mu = 1.0;
  auto s = make_states(2, scalar(1.0));
  s[0].m_hat = scalar(2.0);
  s[1].m_hat = scalar(-1.0);
  const std::vector<Vec> g{scalar(0.5), scalar(3.0)};
  const auto out = dmsgd_step(s, g, complete(2), hp, DmsgdOption::II);
  EXPECT_NEAR(out[0].m_hat(0), 0.8 * 2.0 + 0.5, 1e-15);
  EXPECT_NEAR(out[1].m_hat(0), -0.8 + 3.0, 1e-15);
}

TEST(Dmsgd, MuZeroOptionTwoIsSynchronisedDifference) {
  HyperParams hp;
  hp.eta = 0.1;
  hp.mu = 0.0;
  auto s = make_states(2, scalar(1.0));
  s[1].x = scalar(-1.0);
  s[1].x_half = scalar(-1.0);
  const std::vector<Vec> g{scalar(0.5), scalar(3.0)};
  const auto out = dmsgd_step(s, g, complete(2), hp, DmsgdOption::II);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out[i].m_hat(0), (s[i].x(0) - out[i].x(0)) / hp.eta, 1e-14);
}

namespace {

// The re-organised two-buffer form: keep x^{t-1/2} explicitly and define
// m_hat^t = [mu (x^{t-1/2} - x^{t+1/2}) + (1 - mu)(x^t - x^{t+1})] / eta.
struct DmsgdReference {
  std::vector<double> x, half_prev, m;
  void step(const std::vector<double>& g, double eta, double beta, double mu, bool option_two) {
    const double w = 0.5;  // complete graph, n = 2
    std::vector<double> half(2);
    for (int i = 0; i < 2; ++i) half[i] = (option_two ? half_prev[i] : x[i]) - eta * (beta * m[i] + g[i]);
    const double avg = w * half[0] + w * half[1];
    for (int i = 0; i < 2; ++i) {
      m[i] = (mu * (half_prev[i] - half[i]) + (1.0 - mu) * (x[i] - avg)) / eta;
      half_prev[i] = half[i];
      x[i] = avg;
    }
  }
};

void compare_dmsgd(DmsgdOption option) {
  HyperParams hp;
  hp.eta = 0.1;
  hp.beta = 0.9;
  hp.mu = 0.6;
  hp.dmsgd_option = option;
  const bool two = option == DmsgdOption::II;
  // f_i = 1/2 a_i (x - b_i)^2
  const double a[2] = {1.0, 3.0}, b[2] = {2.0, -1.0};
  auto grad = [&](int i, double x) { return a[i] * (x - b[i]); };
  auto s = make_states(2, scalar(0.0));
  s[0].x = s[0].x_half = s[0].x_prev = scalar(1.0);
  s[1].x = s[1].x_half = s[1].x_prev = scalar(-2.0);
  DmsgdReference ref{{1.0, -2.0}, {1.0, -2.0}, {0.0, 0.0}};
  for (long t = 1; t <= 5; ++t) {
    std::vector<Vec> g;
    std::vector<double> gr;
    for (int i = 0; i < 2; ++i) {
      g.push_back(scalar(grad(i, sample_point(Method::dmsgd, hp, s[i])(0))));
      gr.push_back(grad(i, two ? ref.half_prev[i] : ref.x[i]));
    }
    s = dmsgd_step(std::move(s), g, complete(2), hp, option);
    ref.step(gr, hp.eta, hp.beta, hp.mu, two);
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(s[i].x(0), ref.x[i], 1e-12) << "step " << t;
      EXPECT_NEAR(s[i].m_hat(0), ref.m[i], 1e-12) << "step " << t;
    }
  }
}

}  // namespace

TEST(Dmsgd, OptionTwoMatchesReorganisedForm) { compare_dmsgd(DmsgdOption::II); }

TEST(Dmsgd, OptionOneMatchesReorganisedForm) { compare_dmsgd(DmsgdOption::I); }

// ---- D2 / GT -----------------------------------------------------------------

TEST(D2, VariantsAgreeUnderConstantRate) {
  HyperParams hp;
  hp.eta = 0.1;
  auto a = make_states(3, Vec::Zero(2));
  for (int i = 0; i < 3; ++i) a[i].x = Vec{{double(i), 1.0 - i}};
  auto b = a;
  const auto w = ring(3);
  for (long t = 1; t <= 2; ++t) {
    std::vector<Vec> g;
    for (int i = 0; i < 3; ++i) g.push_back(Vec{{0.3 * i + t, -1.0}});
    a = d2_step(std::move(a), g, w, hp, D2Variant::d2);
    b = d2_step(std::move(b), g, w, hp, D2Variant::d2_plus);
  }
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i].x, b[i].x);
}

TEST(D2, HomogeneousCompleteGraphIsDsgd) {
  const auto fam = quadratics(4, 0.0, 4, 6);
  const oracles::Problem p(fam, 4);
  HyperParams hp;
  hp.eta = 0.3;
  const auto w = complete(4);
  auto d2 = make_states(4, Vec::Ones(4));
  auto sgd = d2;
  double worst = 0.0;
  for (long t = 1; t <= 300; ++t) {
    d2 = d2_step(std::move(d2), grads_at(p, d2), w, hp, D2Variant::d2);
    sgd = local_sgd_round(LocalKind::dsgd, std::move(sgd), grads_at(p, sgd), w, hp, t);
    for (int i = 0; i < 4; ++i) worst = std::max(worst, (d2[i].x - sgd[i].x).norm());
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(D2, DecayMagnifiesCorrection) {
  const Vec prev = scalar(1.0), x = scalar(0.0);
  const double plain = d2_correction(prev, x, 0.01, 0.1, D2Variant::d2)(0);
  const double plus = d2_correction(prev, x, 0.01, 0.1, D2Variant::d2_plus)(0);
  EXPECT_NEAR(plain, 1.0, 1e-15);
  EXPECT_NEAR(plus, 0.1, 1e-15);
  EXPECT_NEAR(plain / plus, 10.0, 1e-12);
}

TEST(GradientTracking, SingleWorkerIsSgd) {
  HyperParams hp;
  hp.eta = 1e-3;
  auto gt = make_states(1, Vec{{-1.0, 1.0}});
  WorkerState sgd = gt[0];
  const auto w = topo::MixingMatrix::identity(1);
  for (int t = 0; t < 100; ++t) {
    const Vec g = rosen_grad(gt[0].x);
    gt = gt_step(std::move(gt), std::vector<Vec>{g}, w, hp, false);
    EXPECT_LE((gt[0].y_tracker - g).norm(), 1e-12);
    sgd = local_half_step(LocalKind::dsgd, std::move(sgd), rosen_grad(sgd.x), hp);
  }
  EXPECT_LE(rel_diff(gt[0].x, sgd.x), 1e-12);
}

TEST(GradientTracking, SingleWorkerMomentumIsNesterovSgd) {
  HyperParams hp;
  hp.eta = 1e-3;
  auto gt = make_states(1, Vec{{-1.0, 1.0}});
  WorkerState ref = gt[0];
  for (int t = 0; t < 100; ++t) {
    gt = gt_step(std::move(gt), std::vector<Vec>{rosen_grad(gt[0].x)}, topo::MixingMatrix::identity(1), hp, true);
    ref = local_half_step(LocalKind::dsgdm_n, std::move(ref), rosen_grad(ref.x), hp);
  }
  EXPECT_LE(rel_diff(gt[0].x, ref.x), 1e-12);
}

TEST(GradientTracking, TrackerSumEqualsGradientSum) {
  const auto fam = quadratics(5, 2.0, 3, 8);
  const oracles::Problem p(fam, 5);
  HyperParams hp;
  hp.eta = 0.1;
  auto s = make_states(5, Vec::Zero(3));
  const auto w = ring(5);
  for (long t = 1; t <= 100; ++t) {
    const auto g = grads_at(p, s);
    s = gt_step(std::move(s), g, w, hp, false);
    Vec ys = Vec::Zero(3), gs = Vec::Zero(3);
    for (int i = 0; i < 5; ++i) {
      ys += s[i].y_tracker;
      gs += g[i];
    }
    ASSERT_LE((ys - gs).norm(), 1e-12 * (1.0 + gs.norm()));
  }
}

TEST(GradientTracking, RemovesHeterogeneityBias) {
  const auto fam = quadratics(4, 2.0, 4, 10);
  const oracles::Problem p(fam, 4);
  const Vec xstar = fam.minimizer();
  HyperParams hp;
  hp.eta = 0.1;
  const auto w = ring(4);
  auto gt = make_states(4, Vec::Zero(4));
  auto sgd = gt;
  for (long t = 1; t <= 3000; ++t) {
    gt = gt_step(std::move(gt), grads_at(p, gt), w, hp, false);
    sgd = local_sgd_round(LocalKind::dsgd, std::move(sgd), grads_at(p, sgd), w, hp, t);
  }
  double gt_err = 0.0, sgd_err = 0.0;
  for (int i = 0; i < 4; ++i) {
    gt_err = std::max(gt_err, (gt[i].x - xstar).norm());
    sgd_err = std::max(sgd_err, (sgd[i].x - xstar).norm());
  }
  EXPECT_LE(gt_err, 1e-6);
  EXPECT_GT(sgd_err, 1e-3);
}

// ---- SlowMo / MimeLite ---------------------------------------------------

TEST(SlowMo, ZeroSlowMomentumIsExactAverage) {
  HyperParams hp;
  hp.slowmo_beta = 0.0;
  hp.slowmo_alpha = 1.0;
  auto s = make_states(3, Vec::Zero(2));
  for (int i = 0; i < 3; ++i) s[i].x = Vec{{double(i), 2.0 * i}};
  const Vec avg = average_x(s);
  const auto out = slowmo_outer_update(s, hp, 0.1);
  for (const auto& st : out) EXPECT_LE((st.x - avg).norm(), 1e-15);
}

TEST(SlowMo, SingleInnerStepIsScaledSgd) {
  HyperParams hp;
  hp.eta = 1e-3;
  hp.slowmo_tau = 1;
  hp.slowmo_beta = 0.0;
  hp.slowmo_alpha = 2.0;
  auto s = make_states(1, Vec{{-1.0, 1.0}});
  Vec ref = s[0].x;
  auto grad = [](std::size_t, const Vec& x, long) { return rosen_grad(x); };
  for (int r = 0; r < 50; ++r) {
    s = slowmo_round(std::move(s), topo::MixingMatrix::identity(1), hp, LocalKind::dsgd, grad, r);
    ref -= 2.0 * hp.eta * rosen_grad(ref);
  }
  EXPECT_LE(rel_diff(s[0].x, ref), 1e-12);
}

TEST(SlowMo, DefaultsDecreaseLossMonotonically) {
  const auto fam = quadratics(4, 1.0, 5, 12);
  const oracles::Problem p(fam, 4);
  const double fstar = p.global(fam.minimizer()).loss;
  // Slow momentum on top of heavy ball overshoots on quadratics unless the
  // combined rate eta * tau / ((1 - beta)(1 - slowmo_beta)) stays below ~1.
  HyperParams hp;
  hp.eta = 5e-4;
  auto s = make_states(4, Vec::Constant(5, 3.0));
  const double initial = p.global(average_x(s)).loss - fstar;
  auto grad = [&](std::size_t i, const Vec& x, long) { return p.gradient(i, x).grad; };
  std::vector<double> losses;
  for (int r = 0; r < 20; ++r) {
    s = slowmo_round(std::move(s), ring(4), hp, LocalKind::dsgdm, grad, r * hp.slowmo_tau);
    losses.push_back(p.global(average_x(s)).loss - fstar);
  }
  for (std::size_t r = 2; r < losses.size(); ++r) EXPECT_LE(losses[r], losses[r - 1]) << "round " << r;
  EXPECT_LT(losses.back(), 0.01 * initial);
}

TEST(MimeLite, NoMomentumIsParallelSgd) {
  const auto fam = quadratics(3, 1.0, 2, 13);
  const oracles::Problem p(fam, 3);
  HyperParams hp;
  hp.eta = 0.2;
  hp.beta = 0.0;
  hp.tau = 1;
  const MimeServer server{Vec{{1.0, -1.0}}, Vec::Zero(2)};
  auto g = [&](std::size_t i, const Vec& x, long) { return p.gradient(i, x).grad; };
  auto full = [&](std::size_t i, const Vec& x) { return p.gradient(i, x).grad; };
  const auto next = mimelite_round(server, 3, hp, g, full);
  const Vec expect = server.x - hp.eta * p.global(server.x).grad;
  EXPECT_LE((next.x - expect).norm(), 1e-14);
}

TEST(MimeLite, FirstRoundStatistics) {
  const auto fam = quadratics(3, 1.0, 2, 13);
  const oracles::Problem p(fam, 3);
  HyperParams hp;
  hp.beta = 0.9;
  hp.tau = 3;
  const MimeServer server{Vec{{1.0, -1.0}}, Vec::Zero(2)};
  auto g = [&](std::size_t i, const Vec& x, long) { return p.gradient(i, x).grad; };
  auto full = [&](std::size_t i, const Vec& x) { return p.gradient(i, x).grad; };
  const auto next = mimelite_round(server, 3, hp, g, full);
  EXPECT_LE((next.s - 0.1 * p.global(server.x).grad).norm(), 1e-14);
}

TEST(MimeLite, HeterogeneousQuadraticsConverge) {
  const auto fam = quadratics(4, 2.0, 5, 14);
  const oracles::Problem p(fam, 4);
  const double fstar = p.global(fam.minimizer()).loss;
  HyperParams hp;
  hp.eta = 0.1;
  hp.beta = 0.9;
  hp.tau = 5;
  MimeServer server{Vec::Constant(5, 3.0), Vec::Zero(5)};
  auto g = [&](std::size_t i, const Vec& x, long) { return p.gradient(i, x).grad; };
  auto full = [&](std::size_t i, const Vec& x) { return p.gradient(i, x).grad; };
  const double initial = p.global(server.x).loss - fstar;
  for (int r = 0; r < 20; ++r) server = mimelite_round(server, 4, hp, g, full, r * hp.tau);
  EXPECT_LE(p.global(server.x).loss - fstar, initial / 10.0);
}
