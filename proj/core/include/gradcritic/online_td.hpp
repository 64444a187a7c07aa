#pragma once

#include <vector>

#include "gradcritic/linalg.hpp"
#include "gradcritic/mdp.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

struct TdrcValueState {
  Vec omega;
  Vec chi;
  double alpha = 0.1;
  double beta_reg = 1.0;

  static TdrcValueState zeros(int n_features, double alpha, double beta_reg);
};

struct TdrcGammaState {
  Mat g_matrix;
  Mat h_matrix;
  double alpha = 0.1;
  double beta_reg = 1.0;

  static TdrcGammaState zeros(int n_features, int n_params, double alpha, double beta_reg);
};

// delta = r + gamma phi'^T omega - phi^T omega
// chi   += alpha (phi (delta - phi^T chi) - beta chi)
// omega += alpha phi delta - alpha gamma phi' (phi^T chi)     (old chi)
// Returns false when an entry became non-finite.
bool tdrc_value_step(TdrcValueState& st, const Eigen::Ref<const Vec>& phi, const Eigen::Ref<const Vec>& phi_next,
                     double r, double gamma);

// eps = gamma q_next score_next + gamma G^T phi' - G^T phi
// H += alpha (phi (eps^T - phi^T H) - beta H)
// G += alpha phi eps^T - alpha gamma phi' (phi^T H)          (old H)
// Only rows where phi or phi' is nonzero are visited. touched_max receives
// the largest |entry| among those rows, or over all of G and H when
// |1 - alpha beta| > 1 lets untouched rows grow.
bool tdrc_gamma_step(TdrcGammaState& st, const Eigen::Ref<const Vec>& phi, const Eigen::Ref<const Vec>& phi_next,
                     double q_hat_next, const Eigen::Ref<const Vec>& score_next, double gamma,
                     double* touched_max = nullptr);

struct TraceFactor {
  double nu = 1.0;
  void reset() { nu = 1.0; }
  void advance(double lambda, double gamma) { nu *= lambda * gamma; }
};

struct TdrcTrainOptions {
  double lambda = 0.0;
  double alpha = 0.1;
  // Negative means "same as alpha".
  double alpha_gamma = -1.0;
  double beta_reg = 1.0;
  double actor_lr = 0.001;
  long total_steps = 5000;
  // Exact return is recorded at step 0, every eval_every steps and at the end.
  long eval_every = 100;
  // 0 disables truncation; otherwise episodes restart after this many steps.
  int episode_len = 0;
  // false drops the gradient-critic term from the actor step (semi-gradient loop).
  bool use_gamma_term = true;
  // Components outside the mask follow the lambda = 1 path. Empty means the
  // policy's own mask.
  std::vector<int> mask;
  bool record_theta = false;
  double divergence_bound = 1e8;
};

struct CurvePoint {
  long step = 0;
  double ret = 0.0;
};

struct TdrcTrainResult {
  Policy policy;
  TdrcValueState value;
  TdrcGammaState grad;
  std::vector<CurvePoint> curve;
  bool diverged = false;
  long diverged_step = -1;
  // theta after every step when record_theta is set.
  std::vector<Vec> theta_trajectory;
};

// Online actor loop on a live behaviour stream. Per step the generator is
// consumed in this order: behaviour action at s, environment step, on-policy
// action at s, on-policy action at s', and a start state on reset.
TdrcTrainResult tdrc_gamma_train(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                                 const FeatureMap& value_features, const FeatureMap& grad_features,
                                 const TdrcTrainOptions& options, Rng& rng);

enum class Sampling { Stream, Iid };

struct TdrcEvalOptions {
  double alpha = 0.1;
  double alpha_gamma = -1.0;
  double beta_reg = 1.0;
  long samples = 200000;
  // Iterates from this sample on are averaged; negative means samples / 2.
  long average_from = -1;
  Sampling sampling = Sampling::Iid;
  int episode_len = 0;
  // Run the value critic alone for this many samples, then freeze it at its
  // average over the second half of that phase and run the gradient critic
  // alone for the remainder.
  long decoupled_value_samples = 0;
};

struct TdrcEvalResult {
  TdrcValueState value;
  TdrcGammaState grad;
  Vec omega_avg;
  Mat g_avg;
  bool diverged = false;
};

// Critic-only learning for a frozen policy. Iid sampling draws
// (s,a) ~ mu_beta beta, s' ~ p, a' ~ pi independently each step.
TdrcEvalResult tdrc_evaluate(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                             const FeatureMap& value_features, const FeatureMap& grad_features,
                             const TdrcEvalOptions& options, Rng& rng);

}  // namespace gradcritic
