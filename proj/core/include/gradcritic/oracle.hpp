#pragma once

#include <optional>

#include "gradcritic/io.hpp"
#include "gradcritic/linalg.hpp"
#include "gradcritic/mdp.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

// Pair-to-pair kernel P[(s,a),(s',a')] = p(s'|s,a) pi(a'|observe(s')).
// Terminal states self-loop, so their rows stay inside the terminal block.
Mat pair_kernel(const FiniteMdp& mdp, const Vec& pi);

// Same kernel with every column of a terminal next state zeroed. Used by TD
// quantities, where a terminal successor contributes phi' = 0.
Mat pair_kernel_nonterminal(const FiniteMdp& mdp, const Vec& pi);

// State kernel of the restart chain: follow the policy, and whenever the next
// state is terminal jump to a fresh start state drawn from mu0 instead.
// Without terminal states this is the ordinary state kernel.
Mat restart_kernel(const FiniteMdp& mdp, const Vec& pi);

// Stationary distribution of the restart chain. Sets *ergodic to false when
// the chain has no unique stationary distribution; the returned vector is then
// the Cesaro average of the chain started at mu0.
Vec stationary_distribution(const FiniteMdp& mdp, const Policy& policy, bool* ergodic = nullptr);

struct OccupancyBundle {
  Vec mu_t_limit;
  Vec mu_gamma;
  Vec d_sa;
  bool ergodic = true;
};

OccupancyBundle discounted_distributions(const FiniteMdp& mdp, const Policy& policy);

Vec q_values(const FiniteMdp& mdp, const Policy& policy);
double return_j(const FiniteMdp& mdp, const Policy& policy);

// Unnormalized gradient E_{S ~ mu_gamma / (1-gamma)}[q score]; pass
// normalized = true for grad J = (1-gamma) times that.
Vec true_policy_gradient(const FiniteMdp& mdp, const Policy& policy, bool normalized = false);

// Gamma = grad_theta Q, shape n_pairs x n_params.
Mat true_gamma(const FiniteMdp& mdp, const Policy& policy);

struct OracleGradients {
  Vec q;
  Mat gamma_matrix;
  Vec grad_j;
  double j = 0.0;
};

OracleGradients oracle_gradients(const FiniteMdp& mdp, const Policy& policy);
Json to_json(const OracleGradients& o);

// max_(s,a) |q - r - gamma P q|.
double bellman_residual(const FiniteMdp& mdp, const Policy& policy, const Vec& q);
// max |G - gamma P (S . q) - gamma P G|.
double gradient_bellman_residual(const FiniteMdp& mdp, const Policy& policy, const Vec& q, const Mat& g);

// Expected value of sum_{t<n} gamma^t g_t + gamma^(n-1) Gamma_(n-1) from mu0.
Vec n_step_gradient(const FiniteMdp& mdp, const Policy& policy, int n);
// Expected value of sum_n (lambda gamma)^n (y_n + (1-lambda) z_n), truncated
// once (lambda gamma)^n drops below 1e-12 (and at 1e-12 gamma^n for lambda = 1).
Vec lambda_trace_gradient_exact(const FiniteMdp& mdp, const Policy& policy, double lambda);

// Behaviour occupancy d(s,a) = mu_beta(s) beta(a|s) on the restart chain.
Vec behavior_occupancy(const FiniteMdp& mdp, const Policy& behavior);

// max h / min h with h = sqrt(mu(s) pi(a|s) / (mu_beta(s) beta(a|s))) over
// pairs where either occupancy is positive. Throws if the behaviour misses a
// pair the target visits; returns +inf if the target misses a behaviour pair.
double kappa(const FiniteMdp& mdp, const Policy& policy, const Policy& behavior);

// sqrt(sum_i d_i |M_i|^2).
double d_norm(const Mat& m, const Vec& d);

struct Projection {
  Mat projected;
  double error = 0.0;
};

// Psi_D target with Psi_D = Phi (Phi^T D Phi)^-1 Phi^T D. Features inactive on
// the support of d are dropped.
Projection weighted_projection(const FeatureMap& features, const Vec& d, const Mat& target);

struct BoundReport {
  double kappa = 0.0;
  double b = 0.0;
  int n_params = 0;
  double gamma = 0.0;
  double proj_err_value = 0.0;
  double proj_err_grad = 0.0;
  // |Phi G_TDQ - grad Q|_zeta and its bound.
  double perfect_critic_lhs = 0.0;
  double perfect_critic_rhs = 0.0;
  // Same left side against the (1 - gamma kappa)/(1 - gamma) constant.
  double perfect_critic_rhs_alt = 0.0;
  // |Phi G_TD - grad Q|_zeta with the TD value critic, and its bound.
  double td_critic_lhs = 0.0;
  double td_critic_rhs = 0.0;
  // Bound with the (1 + gamma kappa)/(1 - gamma)^2 value-term constant.
  double td_critic_rhs_alt = 0.0;
  bool perfect_critic_holds = false;
  bool perfect_critic_alt_holds = false;
  bool td_critic_holds = false;
  bool td_critic_alt_holds = false;
};

BoundReport bound_report(const FiniteMdp& mdp, const Policy& policy, const Policy& behavior,
                         const FeatureMap& value_features, const FeatureMap& grad_features);
Json to_json(const BoundReport& r);

}  // namespace gradcritic
