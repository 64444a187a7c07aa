#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gradcritic/policy.hpp"
#include "oracles.hpp"

using namespace gradcritic;

namespace {
Policy random_mlp(std::uint64_t seed, int n_obs = 7, int hidden = 5, int na = 3) {
  Policy p = Policy::mlp(n_obs, hidden, na);
  Rng r(seed, 0);
  Vec t(p.n_params());
  for (int i = 0; i < t.size(); ++i) t(i) = r.normal();
  p.set_theta(t);
  return p;
}

double log_prob(const Policy& p, int obs, int a) { return std::log(p.probs(obs)(a)); }
}  // namespace

TEST_CASE("zero parameters give uniform probabilities") {
  CHECK(Policy::tabular(3, 4).probs(1).isApprox(Vec::Constant(4, 0.25)));
  CHECK(Policy::mlp(3, 5, 2).probs(2).isApprox(Vec::Constant(2, 0.5)));
}

TEST_CASE("tabular softmax arithmetic") {
  Policy p = Policy::tabular(1, 2);
  p.set_theta((Vec(2) << std::log(9.0), 0.0).finished());
  CHECK(p.probs(0)(0) == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(p.probs(0)(1) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("probabilities form a simplex and scores average to zero") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Policy p = random_mlp(seed);
    for (int o = 0; o < p.n_obs(); ++o) {
      const Vec pr = p.probs(o);
      CHECK(pr.minCoeff() >= 0.0);
      CHECK(std::abs(pr.sum() - 1.0) < 1e-12);
      Vec avg = Vec::Zero(p.n_params());
      for (int a = 0; a < p.n_actions(); ++a) avg += pr(a) * p.score(o, a);
      CHECK(avg.cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("tabular uniform score") {
  const Policy p = Policy::tabular(3, 2);
  const Vec s = p.score(1, 0);
  Vec expected = Vec::Zero(6);
  expected(2) = 0.5;
  expected(3) = -0.5;
  CHECK(s.isApprox(expected));
}

TEST_CASE("score matches finite differences of log-probabilities") {
  Rng r(4, 0);
  std::vector<Policy> policies = {random_mlp(1), random_mlp(2, 4, 3, 2), testsupport::random_tabular(4, 3, r, 2.0)};
  for (const Policy& p : policies)
    for (int o = 0; o < p.n_obs(); ++o)
      for (int a = 0; a < p.n_actions(); ++a) {
        const Vec fd = testsupport::fd_gradient(p, [&](const Policy& q) { return log_prob(q, o, a); }, 1e-6);
        CHECK((fd - p.score(o, a)).cwiseAbs().maxCoeff() < 1e-6);
      }
}

TEST_CASE("probs_and_scores agrees with the single calls") {
  const Policy p = random_mlp(9);
  Vec pr;
  Mat sc;
  p.probs_and_scores(3, pr, sc);
  CHECK(pr.isApprox(p.probs(3)));
  for (int a = 0; a < p.n_actions(); ++a) CHECK(sc.row(a).transpose().isApprox(p.score(3, a)));
}

TEST_CASE("aliased states share scores") {
  const auto env = testsupport::imani();
  const PolicyTables t = policy_tables(env.mdp, env.init_policy);
  CHECK(t.score.row(sa_index(2, 0, 2)) == t.score.row(sa_index(1, 0, 2)));
  CHECK(t.score.row(sa_index(2, 1, 2)) == t.score.row(sa_index(1, 1, 2)));
}

TEST_CASE("sampling") {
  Policy p = Policy::tabular(1, 2);
  p.set_theta((Vec(2) << 50.0, 0.0).finished());
  Rng r(0, 0);
  int zero = 0;
  for (int i = 0; i < 10000; ++i) zero += p.sample(0, r) == 0;
  CHECK(zero == 10000);

  const Policy u = Policy::tabular(1, 2);
  Rng r2(1, 0);
  const int n = 100000;
  int c = 0;
  for (int i = 0; i < n; ++i) c += u.sample(0, r2) == 0;
  CHECK(std::abs(c / double(n) - 0.5) < 3 * std::sqrt(0.25 / n));

  Rng a(7, 3), b(7, 3);
  for (int i = 0; i < 100; ++i) CHECK(u.sample(0, a) == u.sample(0, b));
}

TEST_CASE("score infinity bound") {
  FiniteMdp m = make_mdp(2, 2, 0.5);
  CHECK(score_infinity_bound(Policy::tabular(2, 2), m) == doctest::Approx(0.5));
  Policy p = Policy::tabular(2, 2);
  p.set_tabular_probs((Vec(2) << 0.9, 0.1).finished());
  CHECK(score_infinity_bound(p, m) == doctest::Approx(0.9));
  Policy shifted = p;
  shifted.add_to_theta((Vec(4) << 3.0, 3.0, -1.0, -1.0).finished());
  CHECK(score_infinity_bound(shifted, m) == doctest::Approx(score_infinity_bound(p, m)).epsilon(1e-12));
}

TEST_CASE("mlp layout and last-layer mask") {
  const Policy p = Policy::mlp(30, 5, 2);
  CHECK(p.n_params() == 5 + 5 + 2 * 5 + 2);
  const auto last = p.last_layer_indices();
  CHECK(last.size() == 12);
  CHECK(last.front() == 10);
  Policy q = p;
  q.set_param_mask({3, 1, 3});
  CHECK(q.param_mask() == std::vector<int>{1, 3});
  const Vec mv = q.mask_vector();
  CHECK(mv.sum() == 2.0);
  CHECK(Policy::tabular(2, 2).mask_vector().isApprox(Vec::Ones(4)));
}
