#include <doctest.h>

#include <cmath>

#include "gradcritic/lstd.hpp"
#include "gradcritic/online_td.hpp"
#include "gradcritic/oracle.hpp"
#include "oracles.hpp"

using namespace gradcritic;

namespace {

struct Case {
  FiniteMdp mdp;
  Policy policy;
  Policy behavior;
};

Case random_case(std::uint64_t seed, int ns = 4) {
  Rng r(seed, 5);
  return {testsupport::small_mdp(seed, ns, 2, 0.9), testsupport::random_tabular(ns, 2, r),
          testsupport::random_tabular(ns, 2, r)};
}

// Exact expectation under zeta of one value step's change, starting from st.
Vec expected_value_update(const Case& c, const FeatureMap& f, const TdrcValueState& st) {
  const Vec d = behavior_occupancy(c.mdp, c.behavior);
  const auto pi = testsupport::pi_table(c.mdp, c.policy);
  const int na = 2;
  Vec acc = Vec::Zero(st.omega.size());
  for (int k = 0; k < c.mdp.n_pairs(); ++k)
    for (int s2 = 0; s2 < c.mdp.n_states; ++s2)
      for (int a2 = 0; a2 < na; ++a2) {
        const double w = d(k) * c.mdp.transition(k, s2) * pi[s2 * na + a2];
        if (w == 0.0) continue;
        TdrcValueState copy = st;
        tdrc_value_step(copy, f.table.row(k).transpose(), f.table.row(s2 * na + a2).transpose(), c.mdp.reward(k),
                        c.mdp.gamma);
        acc += w * (copy.omega - st.omega);
      }
  return acc;
}

Mat expected_gamma_update(const Case& c, const FeatureMap& f, const TdrcGammaState& st, const Vec& q_hat) {
  const Vec d = behavior_occupancy(c.mdp, c.behavior);
  const auto pi = testsupport::pi_table(c.mdp, c.policy);
  const PolicyTables pt = policy_tables(c.mdp, c.policy);
  const int na = 2;
  Mat acc = Mat::Zero(st.g_matrix.rows(), st.g_matrix.cols());
  for (int k = 0; k < c.mdp.n_pairs(); ++k)
    for (int s2 = 0; s2 < c.mdp.n_states; ++s2)
      for (int a2 = 0; a2 < na; ++a2) {
        const int k2 = s2 * na + a2;
        const double w = d(k) * c.mdp.transition(k, s2) * pi[k2];
        if (w == 0.0) continue;
        TdrcGammaState copy = st;
        tdrc_gamma_step(copy, f.table.row(k).transpose(), f.table.row(k2).transpose(), q_hat(k2),
                        pt.score.row(k2).transpose(), c.mdp.gamma);
        acc += w * (copy.g_matrix - st.g_matrix);
      }
  return acc;
}

}  // namespace

TEST_CASE("value step arithmetic with beta = 0") {
  TdrcValueState st = TdrcValueState::zeros(2, 0.5, 0.0);
  st.omega << 1, 2;
  st.chi << 0.5, -1;
  const Vec phi = (Vec(2) << 1, 0).finished();
  const Vec phin = (Vec(2) << 0, 1).finished();
  tdrc_value_step(st, phi, phin, 1.0, 0.5);
  // delta = 1 + 0.5*2 - 1 = 1; phi.chi = 0.5
  // chi = (0.5,-1) + 0.5*((1,0)*(1-0.5)) = (0.75,-1)
  // omega = (1,2) + 0.5*(1,0) - 0.5*0.5*0.5*(0,1) = (1.5, 1.875)
  CHECK(st.chi(0) == doctest::Approx(0.75));
  CHECK(st.chi(1) == doctest::Approx(-1.0));
  CHECK(st.omega(0) == doctest::Approx(1.5));
  CHECK(st.omega(1) == doctest::Approx(1.875));
}

TEST_CASE("value step converges on a single state") {
  TdrcValueState st = TdrcValueState::zeros(1, 0.1, 1.0);
  const Vec phi = Vec::Ones(1);
  for (int i = 0; i < 1000; ++i) tdrc_value_step(st, phi, phi, 1.0, 0.5);
  CHECK(std::abs(st.omega(0) - 2.0) < 1e-6);
}

TEST_CASE("expected value update vanishes at the true values") {
  const Case c = random_case(1);
  const FeatureMap f = one_hot_features(c.mdp);
  TdrcValueState st = TdrcValueState::zeros(f.n_features(), 0.1, 1.0);
  st.omega = q_values(c.mdp, c.policy);
  CHECK(expected_value_update(c, f, st).cwiseAbs().maxCoeff() < 1e-12);
  st.omega *= 0.5;
  CHECK(expected_value_update(c, f, st).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("expected gradient-critic update vanishes at G_TD") {
  const Case c = random_case(2);
  Rng fr(2, 0);
  const FeatureMap f = random_features(c.mdp, 5, fr);
  const LstdSolution pop = population_fixed_point(c.mdp, c.behavior, c.policy, f, f);
  TdrcGammaState st = TdrcGammaState::zeros(f.n_features(), c.policy.n_params(), 0.1, 1.0);
  st.g_matrix = pop.g_matrix;
  const Vec q_hat = f.table * pop.omega;
  CHECK(expected_gamma_update(c, f, st, q_hat).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gamma step without discounting contracts G") {
  TdrcGammaState st = TdrcGammaState::zeros(1, 2, 0.1, 1.0);
  st.g_matrix << 1.0, -2.0;
  const Vec phi = Vec::Ones(1);
  const Vec score = (Vec(2) << 0.3, -0.3).finished();
  for (int i = 0; i < 200; ++i) tdrc_gamma_step(st, phi, phi, 5.0, score, 0.0);
  CHECK(st.g_matrix.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("value iterates are scale consistent") {
  const Case c = random_case(3);
  Rng fr(3, 0);
  const FeatureMap f = random_features(c.mdp, 3, fr);
  Rng r(3, 1);
  const Dataset data = collect_dataset(c.mdp, c.behavior, 300, 50, r);
  const auto next = sample_next_actions(c.mdp, data, c.policy, r);
  const double scale = 3.0;
  for (double beta : {0.0, 1.0}) {
    TdrcValueState a = TdrcValueState::zeros(3, 0.05, beta);
    // Scaling features by c needs alpha / c^2 and, for the chi decay, beta c^2.
    TdrcValueState b = TdrcValueState::zeros(3, 0.05 / (scale * scale), beta * scale * scale);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& t = data.transitions[i];
      const Vec phi = f.row(t.s, t.a).transpose();
      const Vec phin = f.row(t.s_next, next[i]).transpose();
      tdrc_value_step(a, phi, phin, t.r, c.mdp.gamma);
      tdrc_value_step(b, scale * phi, scale * phin, t.r, c.mdp.gamma);
      REQUIRE((f.table * a.omega - scale * f.table * b.omega).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("trace factor law") {
  TraceFactor nu;
  for (int t = 1; t <= 10; ++t) {
    nu.advance(0.7, 0.9);
    CHECK(nu.nu == doctest::Approx(std::pow(0.63, t)).epsilon(1e-14));
  }
  nu.reset();
  CHECK(nu.nu == 1.0);
}

TEST_CASE("lambda = 1 actor ignores the gradient critic") {
  const BenchEnv env = testsupport::imani();
  TdrcTrainOptions o;
  o.lambda = 1.0;
  o.total_steps = 500;
  o.actor_lr = 0.01;
  o.record_theta = true;
  Rng r1(5, 0), r2(5, 0);
  const auto a = tdrc_gamma_train(env.mdp, env.behavior, env.init_policy, env.features, env.features, o, r1);
  o.use_gamma_term = false;
  const auto b = tdrc_gamma_train(env.mdp, env.behavior, env.init_policy, env.features, env.features, o, r2);
  REQUIRE(a.theta_trajectory.size() == b.theta_trajectory.size());
  for (std::size_t i = 0; i < a.theta_trajectory.size(); ++i) CHECK(a.theta_trajectory[i] == b.theta_trajectory[i]);
}

TEST_CASE("zero actor rate leaves the policy and the curve flat") {
  const BenchEnv env = testsupport::imani();
  TdrcTrainOptions o;
  o.actor_lr = 0.0;
  o.total_steps = 2000;
  o.eval_every = 500;
  Rng r(6, 0);
  const auto res = tdrc_gamma_train(env.mdp, env.behavior, env.init_policy, env.features, env.features, o, r);
  CHECK(res.policy.theta() == env.init_policy.theta());
  CHECK(res.curve.size() == 5);
  for (const auto& p : res.curve) CHECK(p.ret == res.curve.front().ret);
  CHECK((env.features.table * res.value.omega - q_values(env.mdp, env.init_policy)).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("divergence guard stops the loop") {
  const BenchEnv env = testsupport::imani();
  TdrcTrainOptions o;
  o.alpha = 50.0;
  o.total_steps = 10000;
  Rng r(7, 0);
  const auto res = tdrc_gamma_train(env.mdp, env.behavior, env.init_policy, env.features, env.features, o, r);
  CHECK(res.diverged);
  CHECK(res.diverged_step > 0);
  CHECK(std::isnan(res.curve.back().ret));
}

TEST_CASE("decoupled critics converge to the population solution") {
  const Case c = random_case(8, 3);
  const FeatureMap f = one_hot_features(c.mdp);
  const LstdSolution pop = population_fixed_point(c.mdp, c.behavior, c.policy, f, f);
  TdrcEvalOptions o;
  o.samples = 200000;
  o.decoupled_value_samples = 50000;
  o.average_from = 125000;
  Rng r(8, 0);
  const TdrcEvalResult res = tdrc_evaluate(c.mdp, c.behavior, c.policy, f, f, o, r);
  CHECK(!res.diverged);
  CHECK((res.g_avg - pop.g_matrix).norm() <= 0.05 * pop.g_matrix.norm());
}
