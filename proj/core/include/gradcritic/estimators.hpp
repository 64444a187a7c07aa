#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gradcritic/io.hpp"
#include "gradcritic/linalg.hpp"
#include "gradcritic/mdp.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

// Critic tables over pairs: q (n_pairs) and Gamma (n_pairs x n_params).
struct CriticTables {
  Vec q;
  Mat gamma;
};

struct EstimateReport {
  Vec grad;
  std::string estimator_id;
  std::optional<double> lambda;
  std::optional<int> n;
  bool corrected = false;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

Json to_json(const EstimateReport& r);

// (1 / ((1-gamma) N)) sum_i rho_i q(s_i,a_i) score(s_i,a_i) with the logged
// action and rho_i = pi/beta at that pair. The 1/(1-gamma) factor puts the
// estimate on the unnormalized scale of true_policy_gradient.
EstimateReport semi_gradient(const FiniteMdp& mdp, const Dataset& data, const Vec& q_hat, const Policy& policy,
                             const Policy& behavior);

// Per episode: sum_{t=0}^{n} gamma^t rho_t g_t + gamma^n rho_n Gamma(S_n, A_n^pi),
// averaged over episodes. g_t uses a fresh on-policy action. n = nullopt sums
// the whole episode without bootstrap; a finite n beyond the episode end
// bootstraps at the final next state.
EstimateReport pathwise_is_gradient(const FiniteMdp& mdp, const Dataset& data, const CriticTables& critic,
                                    const Policy& policy, const Policy& behavior, std::optional<int> n, Rng& rng);

// Average over start states of q(s0,a) score(s0,a) + Gamma(s0,a), a ~ pi.
// With exact_actions the action is integrated out.
EstimateReport start_state_gradient(const FiniteMdp& mdp, const std::vector<int>& start_states,
                                    const CriticTables& critic, const Policy& policy, Rng& rng,
                                    bool exact_actions = false);
// Same with s0 integrated over mu0 and a over pi.
Vec start_state_gradient_exact(const FiniteMdp& mdp, const CriticTables& critic, const Policy& policy);
// Episode-start states recorded in a dataset.
std::vector<int> dataset_start_states(const Dataset& data);

enum class TraceVariant { Blend, Alg4 };
std::string to_string(TraceVariant v);
TraceVariant trace_variant_from_string(const std::string& s);

// Per episode: sum_t (lambda gamma)^t [rho_t] (g_t + (1-lambda) Gamma(s_t, a_t^pi)) on
// tracked components and sum_t gamma^t [rho_t] g_t on the others; averaged
// over episodes. mask: 1 tracked, 0 untracked; empty means the policy mask.
// Alg4 drops the (1-lambda) factor on Gamma.
EstimateReport lambda_trace_gradient(const FiniteMdp& mdp, const Dataset& data, const CriticTables& critic,
                                     const Policy& policy, const Policy& behavior, double lambda, bool corrected,
                                     Rng& rng, const Vec& mask = Vec(), TraceVariant variant = TraceVariant::Blend);

// Exact expectation of lambda_trace_gradient for episodes started from mu0
// under the behaviour policy and cut after `horizon` steps (0: run until the
// weight falls below 1e-14). Independent of the oracle's on-policy route.
Vec expected_lambda_trace(const FiniteMdp& mdp, const CriticTables& critic, const Policy& policy,
                          const Policy& behavior, double lambda, bool corrected, int horizon = 0,
                          const Vec& mask = Vec());
// Exact expectation of pathwise_is_gradient for untruncated episodes.
Vec expected_pathwise_is(const FiniteMdp& mdp, const CriticTables& critic, const Policy& policy,
                         const Policy& behavior, std::optional<int> n);
// Exact expectation of semi_gradient when (s,a) ~ d.
Vec expected_semi_gradient(const FiniteMdp& mdp, const Vec& q_hat, const Policy& policy, const Policy& behavior,
                           const Vec& d);

struct AdamState {
  Vec m;
  Vec v;
  long t = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(int n, double lr);
};

// Ascent step: theta += lr mhat / (sqrt(vhat) + eps).
void adam_step(AdamState& state, const Vec& grad, Vec& theta);

struct ImproveOptions {
  double lambda = 0.0;
  TraceVariant variant = TraceVariant::Blend;
  long iters = 1000;
  // Return is recorded at iteration 0, every eval_every iterations and at the end.
  long eval_every = 10;
  SingularPolicy singular = SingularPolicy::Ridge;
};

struct ImproveCurvePoint {
  long iter = 0;
  double ret = 0.0;
};

struct ImproveResult {
  Policy policy;
  std::vector<ImproveCurvePoint> curve;
  bool regularized = false;
};

// Offline improvement on a fixed dataset. Each iteration refits the value
// and gradient critics with fresh next actions, samples one transition i and
// an on-policy action there, and takes an Adam step along
//   Blend: (lambda gamma)^t_i (g_i + (1-lambda) Gamma_i)
//   Alg4:  (lambda gamma)^t_i (g_i + Gamma_i)
// Untracked components use gamma^t_i g_i.
ImproveResult lstd_gamma_trace_improve(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& value_features,
                                       const FeatureMap& grad_features, const Policy& policy,
                                       const ImproveOptions& options, AdamState& adam, Rng& rng);

}  // namespace gradcritic
