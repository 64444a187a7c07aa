#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gradcritic/errors.hpp"
#include "gradcritic/lstd.hpp"
#include "gradcritic/oracle.hpp"
#include "oracles.hpp"

using namespace gradcritic;

namespace {

// Action 0 moves to state 0 and action 1 to state 1, from either state.
FiniteMdp switch_mdp(double gamma) {
  FiniteMdp m = make_mdp(2, 2, gamma);
  m.transition << 1, 0, 0, 1, 1, 0, 0, 1;
  m.reward << 1, 0, 0.5, 2;
  m.mu0 << 0.5, 0.5;
  return m;
}

// One transition per pair: with a uniform behaviour this is the exact occupancy.
Dataset every_pair_once(const FiniteMdp& m) {
  Dataset d;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) d.transitions.push_back({s, a, m.r(s, a), a, 0, true});
  return d;
}

struct Case {
  FiniteMdp mdp;
  Policy policy;
  Policy behavior;
};

Case random_case(std::uint64_t seed, int ns = 5, int na = 2) {
  Rng r(seed, 5);
  return {testsupport::small_mdp(seed, ns, na, 0.9), testsupport::random_tabular(ns, na, r),
          testsupport::random_tabular(ns, na, r)};
}

// omega_TD from the population equations, solved by QR in test code.
Vec omega_by_qr(const Case& c, const Policy& pol, const FeatureMap& f) {
  const Vec d = behavior_occupancy(c.mdp, c.behavior);
  const auto pi = testsupport::pi_table(c.mdp, pol);
  const int na = c.mdp.n_actions, nf = f.n_features();
  Mat a = Mat::Zero(nf, nf);
  Vec b = Vec::Zero(nf);
  for (int s = 0; s < c.mdp.n_states; ++s)
    for (int ac = 0; ac < na; ++ac) {
      const int k = s * na + ac;
      Vec next = Vec::Zero(nf);
      for (int s2 = 0; s2 < c.mdp.n_states; ++s2)
        for (int a2 = 0; a2 < na; ++a2)
          next += c.mdp.transition(k, s2) * pi[s2 * na + a2] * f.table.row(s2 * na + a2).transpose();
      a += d(k) * f.table.row(k).transpose() * (f.table.row(k).transpose() - c.mdp.gamma * next).transpose();
      b += d(k) * c.mdp.reward(k) * f.table.row(k).transpose();
    }
  return a.colPivHouseholderQr().solve(b);
}

}  // namespace

TEST_CASE("A with gamma 0 is the empirical second moment") {
  const Case c = random_case(1);
  Rng r(1, 0);
  const Dataset data = collect_dataset(c.mdp, c.behavior, 300, 50, r);
  FiniteMdp m0 = c.mdp;
  m0.gamma = 0;
  Rng fr(1, 2);
  const FeatureMap f = random_features(m0, 4, fr);
  const AbEstimate ab = estimate_a_b(m0, data, f, c.policy, sample_next_actions(m0, data, c.policy, r));
  Mat m2 = Mat::Zero(4, 4);
  for (const auto& t : data.transitions) m2 += f.row(t.s, t.a).transpose() * f.row(t.s, t.a);
  CHECK((ab.a_hat - m2 / 300.0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exact-frequency dataset reproduces the population A and b") {
  const FiniteMdp m = switch_mdp(0.8);
  const Policy beh = Policy::tabular(2, 2);
  Policy pol = Policy::tabular(2, 2);
  pol.set_theta((Vec(4) << 0.3, -0.2, 1.0, 0.1).finished());
  const FeatureMap f = one_hot_features(m);
  const AbEstimate ab = estimate_a_b(m, every_pair_once(m), f, pol, {});
  const LstdSolution pop = population_fixed_point(m, beh, pol, f, f);
  CHECK((ab.a_hat - pop.a_hat).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((ab.b_hat - pop.b_hat).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sampled next actions are seeded") {
  const Case c = random_case(2);
  Rng r(2, 0);
  const Dataset data = collect_dataset(c.mdp, c.behavior, 200, 50, r);
  const FeatureMap f = one_hot_features(c.mdp);
  Rng a(9, 9), b(9, 9);
  const LstdSolution x = lstd_fit(c.mdp, data, f, f, c.policy, a);
  const LstdSolution y = lstd_fit(c.mdp, data, f, f, c.policy, b);
  CHECK(x.a_hat == y.a_hat);
  CHECK(x.g_matrix == y.g_matrix);
}

TEST_CASE("lstd value on a single state") {
  FiniteMdp m = make_mdp(1, 1, 0.5);
  m.transition(0, 0) = 1;
  m.reward(0) = 1;
  m.mu0(0) = 1;
  Dataset d;
  d.transitions.push_back({0, 0, 1.0, 0, 0, true});
  const FeatureMap f = one_hot_features(m);
  const AbEstimate ab = estimate_a_b(m, d, f, Policy::tabular(1, 1), {});
  CHECK(lstd_value(ab.a_hat, ab.b_hat)(0) == doctest::Approx(2.0));
}

TEST_CASE("population LSTD with one-hot features is exact") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Case c = random_case(seed);
    const FeatureMap f = one_hot_features(c.mdp);
    const LstdSolution td = population_fixed_point(c.mdp, c.behavior, c.policy, f, f);
    const LstdSolution tq = population_fixed_point(c.mdp, c.behavior, c.policy, f, f, QSource::True);
    const Vec q = testsupport::iterate_q(c.mdp, c.policy);
    const Mat gam = true_gamma(c.mdp, c.policy);
    CHECK((f.table * td.omega - q).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((f.table * tq.g_matrix - gam).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((f.table * td.g_matrix - gam).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(relative_residual(td.a_hat, td.omega, td.b_hat) < 1e-9);
    CHECK(relative_residual(td.a_grad, td.g_matrix, td.b_matrix) < 1e-9);
    // Swapping behaviour for target changes D only.
    const LstdSolution on = population_fixed_point(c.mdp, c.policy, c.policy, f, f);
    CHECK((on.omega - td.omega).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((on.g_matrix - td.g_matrix).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("duplicating the dataset leaves omega unchanged") {
  const Case c = random_case(3);
  Rng r(3, 0);
  Dataset data = collect_dataset(c.mdp, c.behavior, 400, 50, r);
  const FeatureMap f = one_hot_features(c.mdp);
  const AbEstimate a1 = estimate_a_b(c.mdp, data, f, c.policy, {});
  Dataset twice = data;
  twice.transitions.insert(twice.transitions.end(), data.transitions.begin(), data.transitions.end());
  const AbEstimate a2 = estimate_a_b(c.mdp, twice, f, c.policy, {});
  CHECK((lstd_value(a1.a_hat, a1.b_hat) - lstd_value(a2.a_hat, a2.b_hat)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gradient critic vanishes without discounting") {
  Case c = random_case(4);
  c.mdp.gamma = 0;
  Rng r(4, 0);
  const Dataset data = collect_dataset(c.mdp, c.behavior, 200, 50, r);
  const FeatureMap f = one_hot_features(c.mdp);
  const GammaEstimate g = lstd_gamma(c.mdp, data, f, c.policy, c.mdp.reward, sample_next_actions(c.mdp, data, c.policy, r));
  CHECK(g.g_matrix.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rank-one gradient features give the projected fixed point") {
  const Case c = random_case(5);
  Rng fr(5, 1);
  const FeatureMap f1 = random_features(c.mdp, 1, fr);
  const FeatureMap oh = one_hot_features(c.mdp);
  const LstdSolution sol = population_fixed_point(c.mdp, c.behavior, c.policy, oh, f1, QSource::True);
  const Vec d = behavior_occupancy(c.mdp, c.behavior);
  const PolicyTables pt = policy_tables(c.mdp, c.policy);
  const Mat p = pair_kernel_nonterminal(c.mdp, pt.pi);
  const Vec q = q_values(c.mdp, c.policy);
  const Mat phig = f1.table * sol.g_matrix;
  const Mat backup = c.mdp.gamma * p * ((pt.score.array().colwise() * q.array()).matrix() + phig);
  const Projection proj = weighted_projection(f1, d, backup);
  CHECK((proj.projected - phig).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("G_TD is the derivative of omega_TD") {
  for (std::uint64_t seed : {10u, 11u}) {
    const Case c = random_case(seed, 3);
    const FeatureMap oh = one_hot_features(c.mdp);
    Rng fr(seed, 1);
    const FeatureMap rd = random_features(c.mdp, 3, fr);
    for (const FeatureMap& f : {oh, rd}) {
      const LstdSolution sol = population_fixed_point(c.mdp, c.behavior, c.policy, f, f);
      const Mat fd = testsupport::fd_jacobian(c.policy, [&](const Policy& p) { return omega_by_qr(c, p, f); }, 1e-5);
      CHECK((fd - sol.g_matrix).cwiseAbs().maxCoeff() < 1e-5);
      CHECK(td_jacobian_check(c.mdp, c.behavior, c.policy, f, 1e-5) < 1e-5);
    }
    // Central differences: halving h shrinks the error by about four.
    const double e1 = td_jacobian_check(c.mdp, c.behavior, c.policy, rd, 1e-2);
    const double e2 = td_jacobian_check(c.mdp, c.behavior, c.policy, rd, 5e-3);
    CHECK(e2 < e1);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));
  }
}

TEST_CASE("sample LSTD gradient critic approaches the population one") {
  const Case c = random_case(12);
  const FeatureMap f = one_hot_features(c.mdp);
  const LstdSolution pop = population_fixed_point(c.mdp, c.behavior, c.policy, f, f);
  std::vector<double> medians;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    std::vector<double> errs;
    for (int seed = 0; seed < 20; ++seed) {
      Rng r(seed, n);
      const Dataset data = collect_dataset(c.mdp, c.behavior, n, 1000000, r);
      const LstdSolution s = lstd_fit(c.mdp, data, f, f, c.policy, r);
      errs.push_back((s.g_matrix - pop.g_matrix).norm());
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    medians.push_back(errs[10]);
  }
  CHECK(medians[1] < medians[0]);
  CHECK(medians[2] < medians[1]);
}

TEST_CASE("singular A: ridge flag or error") {
  const Case c = random_case(6);
  // Two identical transitions cannot identify ten features.
  Dataset d;
  d.transitions.push_back({0, 0, 1.0, 1, 0, true});
  d.transitions.push_back({1, 1, 0.0, 2, 1, false});
  Rng fr(6, 0);
  const FeatureMap f = random_features(c.mdp, 3, fr);
  Rng r(6, 1);
  const LstdSolution s = lstd_fit(c.mdp, d, f, f, c.policy, r);
  CHECK(s.regularized);
  CHECK(s.omega.allFinite());
  Rng r2(6, 1);
  LstdOptions strict;
  strict.singular = SingularPolicy::Throw;
  CHECK_THROWS_AS(lstd_fit(c.mdp, d, f, f, c.policy, r2, strict), SingularMatrixError);
}

TEST_CASE("generalized least squares splits into columns") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(seed, 3);
    const int x = 10, k = 4, nf = 4;
    Mat p(x, x);
    for (int i = 0; i < x; ++i) {
      for (int j = 0; j < x; ++j) p(i, j) = r.uniform();
      p.row(i) /= p.row(i).sum();
    }
    Vec d(x);
    for (int i = 0; i < x; ++i) d(i) = r.uniform() + 0.1;
    d /= d.sum();
    Mat c(x, k), phi(x, nf);
    for (int i = 0; i < x; ++i) {
      for (int j = 0; j < k; ++j) c(i, j) = r.normal();
      for (int j = 0; j < nf; ++j) phi(i, j) = r.normal();
    }
    const Mat h = generalized_ls(x, p, d, c, phi, 0.9);
    const Mat a = phi.transpose() * d.asDiagonal() * (phi - 0.9 * p * phi);
    for (int j = 0; j < k; ++j) {
      const Vec col = a.colPivHouseholderQr().solve(Vec(phi.transpose() * d.asDiagonal() * c.col(j)));
      CHECK((h.col(j) - col).cwiseAbs().maxCoeff() < 1e-12 * (1 + col.cwiseAbs().maxCoeff()));
    }
    const Mat h1 = generalized_ls(x, p, d, c.col(0), phi, 0.9);
    CHECK((h1.col(0) - h.col(0)).cwiseAbs().maxCoeff() < 1e-12);
    const Mat h0 = generalized_ls(x, p, d, c, Mat::Identity(x, x), 0.0);
    CHECK((h0 - c).cwiseAbs().maxCoeff() < 1e-12);
  }
}
