#include <doctest.h>

#include <cmath>

#include "gradcritic/estimators.hpp"
#include "gradcritic/lstd.hpp"
#include "gradcritic/oracle.hpp"
#include "oracles.hpp"

using namespace gradcritic;
using testsupport::fd_gradient;
using testsupport::fd_jacobian;

namespace {

FiniteMdp one_state(double r, double gamma) {
  FiniteMdp m = make_mdp(1, 1, gamma);
  m.transition(0, 0) = 1;
  m.reward(0) = r;
  m.mu0(0) = 1;
  return m;
}

// Pair kernel built by explicit loops for the unrolled Gamma series.
Mat loop_kernel(const FiniteMdp& m, const Policy& p) {
  const auto pi = testsupport::pi_table(m, p);
  const int na = m.n_actions;
  Mat k = Mat::Zero(m.n_pairs(), m.n_pairs());
  for (int s = 0; s < m.n_states; ++s) {
    if (m.is_terminal(s)) continue;
    for (int a = 0; a < na; ++a)
      for (int s2 = 0; s2 < m.n_states; ++s2)
        for (int a2 = 0; a2 < na; ++a2) k(s * na + a, s2 * na + a2) = m.transition(s * na + a, s2) * pi[s2 * na + a2];
  }
  return k;
}

struct Case {
  FiniteMdp mdp;
  Policy policy;
  Policy behavior;
};

Case random_case(std::uint64_t seed, int ns = 5, int na = 2, double gamma = 0.9) {
  Rng r(seed, 99);
  Case c{testsupport::small_mdp(seed, ns, na, gamma), testsupport::random_tabular(ns, na, r),
         testsupport::random_tabular(ns, na, r)};
  return c;
}

}  // namespace

TEST_CASE("q on degenerate MDPs") {
  const FiniteMdp m = one_state(1.0, 0.5);
  const Policy p = Policy::tabular(1, 1);
  CHECK(q_values(m, p)(0) == doctest::Approx(2.0));
  CHECK(return_j(m, p) == doctest::Approx(1.0));
  Case c = random_case(1);
  c.mdp.gamma = 0.0;
  CHECK(q_values(c.mdp, c.policy).isApprox(c.mdp.reward));
  const auto pi = testsupport::pi_table(c.mdp, c.policy);
  double j = 0;
  for (int k = 0; k < c.mdp.n_pairs(); ++k) j += c.mdp.mu0(k / 2) * pi[k] * c.mdp.reward(k);
  CHECK(return_j(c.mdp, c.policy) == doctest::Approx(j));
  CHECK(true_gamma(c.mdp, c.policy).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("q and J agree with value iteration") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Case c = random_case(seed);
    CHECK((q_values(c.mdp, c.policy) - testsupport::iterate_q(c.mdp, c.policy)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(return_j(c.mdp, c.policy) == doctest::Approx(testsupport::iterate_j(c.mdp, c.policy)).epsilon(1e-10));
  }
  const auto env = testsupport::imani();
  CHECK((q_values(env.mdp, env.init_policy) - testsupport::iterate_q(env.mdp, env.init_policy)).norm() < 1e-10);
}

TEST_CASE("q matches Monte Carlo rollouts") {
  Case c = random_case(3);
  c.mdp.reward_noise_std = 0.1;
  const Vec q = q_values(c.mdp, c.policy);
  Rng r(3, 1);
  const int n = 100000;
  const int s0 = 2, a0 = 1;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    int s = s0, a = a0;
    double g = 0, disc = 1;
    for (int t = 0; t < 200; ++t) {
      const StepResult st = step(c.mdp, s, a, r);
      g += disc * st.r;
      disc *= c.mdp.gamma;
      s = st.s_next;
      a = c.policy.sample(s, r);
    }
    sum += g;
    sum2 += g * g;
  }
  const double m = sum / n, se = std::sqrt((sum2 / n - m * m) / n);
  CHECK(std::abs(m - q(sa_index(s0, a0, 2))) < 3 * se);
}

TEST_CASE("J matches discounted Monte Carlo returns") {
  const Case c = random_case(4);
  Rng r(4, 1);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    int s = sample_start(c.mdp, r);
    double g = 0, disc = 1;
    for (int t = 0; t < 200; ++t) {
      const int a = c.policy.sample(s, r);
      const StepResult st = step(c.mdp, s, a, r);
      g += disc * st.r;
      disc *= c.mdp.gamma;
      s = st.s_next;
    }
    g *= 1 - c.mdp.gamma;
    sum += g;
    sum2 += g * g;
  }
  const double m = sum / n, se = std::sqrt((sum2 / n - m * m) / n);
  CHECK(std::abs(m - return_j(c.mdp, c.policy)) < 3 * se);
}

TEST_CASE("discounted state distribution") {
  FiniteMdp m = make_mdp(2, 1, 0.5);
  m.transition << 0, 1, 1, 0;
  m.mu0 << 1, 0;
  const Policy p = Policy::tabular(2, 1);
  const OccupancyBundle b = discounted_distributions(m, p);
  CHECK(b.mu_gamma(0) == doctest::Approx(2.0 / 3));
  CHECK(b.mu_gamma(1) == doctest::Approx(1.0 / 3));

  Case c = random_case(6);
  c.mdp.gamma = 0;
  CHECK(discounted_distributions(c.mdp, c.policy).mu_gamma.isApprox(c.mdp.mu0));

  // Sampling view: restart from mu0 with probability 1 - gamma at every step.
  const Case e = random_case(7);
  const Vec mg = discounted_distributions(e.mdp, e.policy).mu_gamma;
  Rng r(7, 1);
  Vec freq = Vec::Zero(5);
  int s = sample_start(e.mdp, r);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    freq(s) += 1;
    if (r.uniform() < 1 - e.mdp.gamma)
      s = sample_start(e.mdp, r);
    else
      s = step(e.mdp, s, e.policy.sample(s, r), r).s_next;
  }
  freq /= n;
  CHECK(0.5 * (freq - mg).cwiseAbs().sum() < 1e-2);
}

TEST_CASE("true gradient: symmetric bandit optimum") {
  FiniteMdp m = make_mdp(1, 2, 0.5);
  m.transition << 1, 1;
  m.reward << 1, 1;
  m.mu0 << 1;
  CHECK(true_policy_gradient(m, Policy::tabular(1, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("true gradient and Gamma match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Case c = random_case(seed);
    const Vec g = true_policy_gradient(c.mdp, c.policy);
    const Vec fd =
        fd_gradient(c.policy, [&](const Policy& p) { return testsupport::iterate_j(c.mdp, p) / (1 - c.mdp.gamma); }, 1e-5);
    CHECK(testsupport::rel_err(g, fd) < 1e-5);
    CHECK(true_policy_gradient(c.mdp, c.policy, true).isApprox((1 - c.mdp.gamma) * g));
    const Mat gam = true_gamma(c.mdp, c.policy);
    const Mat fdq = fd_jacobian(c.policy, [&](const Policy& p) { return testsupport::iterate_q(c.mdp, p); }, 1e-5);
    CHECK((gam - fdq).cwiseAbs().maxCoeff() < 1e-5);
  }
  Rng r(0, 0);
  const BenchEnv env = random_env(1, 0);
  const Vec fd = fd_gradient(
      env.init_policy, [&](const Policy& p) { return testsupport::iterate_j(env.mdp, p) / (1 - env.mdp.gamma); }, 1e-5);
  CHECK(testsupport::rel_err(true_policy_gradient(env.mdp, env.init_policy), fd) < 1e-5);
}

TEST_CASE("Gamma equals its unrolled series") {
  const Case c = random_case(8);
  const Mat k = loop_kernel(c.mdp, c.policy);
  const PolicyTables pt = policy_tables(c.mdp, c.policy);
  const Vec q = q_values(c.mdp, c.policy);
  Mat term = c.mdp.gamma * k * (pt.score.array().colwise() * q.array()).matrix();
  Mat sum = Mat::Zero(term.rows(), term.cols());
  for (double w = c.mdp.gamma; w > 1e-14; w *= c.mdp.gamma) {
    sum += term;
    term = c.mdp.gamma * k * term;
  }
  CHECK((sum - true_gamma(c.mdp, c.policy)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("start-state and n-step forms of the gradient") {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    const Case c = random_case(seed);
    const Vec g = true_policy_gradient(c.mdp, c.policy);
    const CriticTables exact{q_values(c.mdp, c.policy), true_gamma(c.mdp, c.policy)};
    CHECK((start_state_gradient_exact(c.mdp, exact, c.policy) - g).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((n_step_gradient(c.mdp, c.policy, 1) - start_state_gradient_exact(c.mdp, exact, c.policy))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    for (int n : {1, 2, 5}) CHECK((n_step_gradient(c.mdp, c.policy, n) - g).cwiseAbs().maxCoeff() < 1e-9);
    for (double l : {0.0, 0.3, 1.0}) CHECK((lambda_trace_gradient_exact(c.mdp, c.policy, l) - g).cwiseAbs().maxCoeff() < 1e-8);
  }
  Case z = random_case(20);
  z.mdp.gamma = 0;
  const PolicyTables pt = policy_tables(z.mdp, z.policy);
  Vec direct = Vec::Zero(z.policy.n_params());
  for (int k = 0; k < z.mdp.n_pairs(); ++k) direct += z.mdp.mu0(k / 2) * pt.pi(k) * z.mdp.reward(k) * pt.score.row(k).transpose();
  CHECK((n_step_gradient(z.mdp, z.policy, 3) - direct).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("Bellman residuals vanish at the oracle") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Case c = random_case(seed);
    const Vec q = q_values(c.mdp, c.policy);
    CHECK(bellman_residual(c.mdp, c.policy, q) < 1e-12);
    CHECK(gradient_bellman_residual(c.mdp, c.policy, q, true_gamma(c.mdp, c.policy)) < 1e-10);
    CHECK(gradient_bellman_residual(c.mdp, c.policy, q, Mat::Zero(10, 10)) > 1e-6);
  }
}

TEST_CASE("kappa") {
  const Case c = random_case(30);
  CHECK(kappa(c.mdp, c.policy, c.policy) == doctest::Approx(1.0));
  CHECK(kappa(c.mdp, c.policy, c.behavior) >= 1.0);

  // Action 0 leads to state 0, action 1 to state 1, from anywhere.
  FiniteMdp m = make_mdp(2, 2, 0.9);
  m.transition << 1, 0, 0, 1, 1, 0, 0, 1;
  m.mu0 << 0.5, 0.5;
  Policy beh = Policy::tabular(2, 2);
  beh.set_tabular_probs((Vec(2) << 0.8, 0.2).finished());
  // Target occupancy 0.25 everywhere; behaviour (0.64, 0.16, 0.16, 0.04).
  // h = (0.625, 1.25, 1.25, 2.5), so kappa = 4.
  CHECK(kappa(m, Policy::tabular(2, 2), beh) == doctest::Approx(4.0));
}

TEST_CASE("weighted projection") {
  const Case c = random_case(31);
  const Vec d = behavior_occupancy(c.mdp, c.behavior);
  const Mat target = true_gamma(c.mdp, c.policy);
  const Projection full = weighted_projection(one_hot_features(c.mdp), d, target);
  CHECK((full.projected - target).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(full.error < 1e-10);

  Rng r(31, 0);
  const FeatureMap f = random_features(c.mdp, 3, r);
  const Mat in_span = f.table * Mat::Random(3, 2);
  CHECK(weighted_projection(f, d, in_span).error < 1e-10);

  // 2 pairs, one feature: the projection is the d-weighted mean scaled by phi.
  FiniteMdp m2 = make_mdp(2, 1, 0.5);
  FeatureMap f1;
  f1.n_actions = 1;
  f1.table = (Mat(2, 1) << 1.0, 2.0).finished();
  const Vec dd = (Vec(2) << 0.3, 0.7).finished();
  const Mat y = (Mat(2, 1) << 1.0, -1.0).finished();
  const double w = (0.3 * 1 * 1 + 0.7 * 2 * -1) / (0.3 * 1 + 0.7 * 4);
  const Projection p1 = weighted_projection(f1, dd, y);
  CHECK(p1.projected(0, 0) == doctest::Approx(w));
  CHECK(p1.projected(1, 0) == doctest::Approx(2 * w));
  CHECK(p1.error == doctest::Approx(std::sqrt(0.3 * std::pow(w - 1, 2) + 0.7 * std::pow(2 * w + 1, 2))));
}

TEST_CASE("bound report") {
  const Case c = random_case(32);
  const BoundReport one_hot = bound_report(c.mdp, c.policy, c.policy, one_hot_features(c.mdp), one_hot_features(c.mdp));
  CHECK(one_hot.perfect_critic_lhs < 1e-9);
  CHECK(one_hot.td_critic_lhs < 1e-9);
  CHECK(one_hot.perfect_critic_holds);
  CHECK(one_hot.td_critic_holds);
  CHECK(one_hot.kappa == doctest::Approx(kappa(c.mdp, c.policy, c.policy)));
  CHECK(one_hot.b == score_infinity_bound(c.policy, c.mdp));

  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    const Case e = random_case(seed);
    Rng r(seed, 1);
    const FeatureMap f = random_features(e.mdp, 5, r);
    const BoundReport rep = bound_report(e.mdp, e.policy, e.policy, f, f);
    CHECK(rep.perfect_critic_lhs <= rep.perfect_critic_rhs);
    CHECK(rep.td_critic_lhs <= rep.td_critic_rhs);
  }
}
