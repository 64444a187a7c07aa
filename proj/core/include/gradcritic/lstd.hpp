#pragma once

#include <vector>

#include "gradcritic/io.hpp"
#include "gradcritic/linalg.hpp"
#include "gradcritic/mdp.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

// Which action-value table feeds the gradient-critic target: the TD value
// critic Phi omega, or the exact q of the oracle.
enum class QSource { Td, True };

struct LstdSolution {
  Vec omega;
  Mat g_matrix;
  // A and b of the value critic.
  Mat a_hat;
  Vec b_hat;
  // A and B of the gradient critic (A equals a_hat when features are shared).
  Mat a_grad;
  Mat b_matrix;
  double condition_a = 0.0;
  bool regularized = false;
};

Json to_json(const LstdSolution& s);

struct AbEstimate {
  Mat a_hat;
  Vec b_hat;
};

// One on-policy next action per transition, drawn at observe(s'_i).
std::vector<int> sample_next_actions(const FiniteMdp& mdp, const Dataset& data, const Policy& policy, Rng& rng);

// A = (1/N) sum phi_i (phi_i - gamma phi'_i)^T, b = (1/N) sum phi_i r_i.
// An empty next_actions vector selects the expected next feature
// sum_a' pi(a'|s') phi(s',a'). Terminal successors give phi' = 0.
AbEstimate estimate_a_b(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& features, const Policy& policy,
                        const std::vector<int>& next_actions);

Vec lstd_value(const Mat& a_hat, const Vec& b_hat, SingularPolicy policy = SingularPolicy::Ridge,
               SolveInfo* info = nullptr);

struct GammaEstimate {
  Mat g_matrix;
  Mat a_hat;
  Mat b_matrix;
  SolveInfo info;
};

// B = (gamma/N) sum phi_i q_hat(s'_i,a'_i) score(s'_i,a'_i)^T and G = A^-1 B,
// with q_hat given as a table over pairs.
GammaEstimate lstd_gamma(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& grad_features,
                         const Policy& policy, const Vec& q_hat, const std::vector<int>& next_actions,
                         SingularPolicy singular = SingularPolicy::Ridge);

struct LstdOptions {
  // Replace sampled next actions by their expectation under the policy.
  bool expected_next = false;
  SingularPolicy singular = SingularPolicy::Ridge;
  QSource q_source = QSource::Td;
};

// Value critic and gradient critic on a dataset, sharing one draw of next actions.
LstdSolution lstd_fit(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& value_features,
                      const FeatureMap& grad_features, const Policy& policy, Rng& rng,
                      const LstdOptions& options = {});

// Exact-expectation A, b, B under zeta: (s,a) ~ mu_beta beta, s' ~ p, a' ~ pi.
LstdSolution population_fixed_point(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                                    const FeatureMap& value_features, const FeatureMap& grad_features,
                                    QSource q_source = QSource::Td,
                                    SingularPolicy singular = SingularPolicy::Throw);

// Max |finite-difference d omega_TD / d theta - G_TD| over all entries,
// central differences with step h, shared features.
double td_jacobian_check(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                    const FeatureMap& shared_features, double h);

// H* = (Phi^T D (Phi - gamma P Phi))^-1 Phi^T D C on an abstract chain with
// kernel P (x_count x x_count), weights d and targets C (x_count x K).
Mat generalized_ls(int x_count, const Mat& transition, const Vec& d, const Mat& c_matrix, const Mat& features,
                   double gamma);

}  // namespace gradcritic
