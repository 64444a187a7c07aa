#include "gradcritic/online_td.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradcritic/errors.hpp"
#include "gradcritic/oracle.hpp"

namespace gradcritic {

TdrcValueState TdrcValueState::zeros(int n_features, double alpha, double beta_reg) {
  return {Vec::Zero(n_features), Vec::Zero(n_features), alpha, beta_reg};
}

TdrcGammaState TdrcGammaState::zeros(int n_features, int n_params, double alpha, double beta_reg) {
  return {Mat::Zero(n_features, n_params), Mat::Zero(n_features, n_params), alpha, beta_reg};
}

bool tdrc_value_step(TdrcValueState& st, const Eigen::Ref<const Vec>& phi, const Eigen::Ref<const Vec>& phi_next,
                     double r, double gamma) {
  const double delta = r + gamma * phi_next.dot(st.omega) - phi.dot(st.omega);
  const double corr = phi.dot(st.chi);
  st.chi += st.alpha * (phi * (delta - corr) - st.beta_reg * st.chi);
  st.omega += st.alpha * delta * phi - (st.alpha * gamma * corr) * phi_next;
  return std::isfinite(delta) && st.omega.allFinite() && st.chi.allFinite();
}

namespace {

void nonzero_rows(const Eigen::Ref<const Vec>& v, std::vector<Eigen::Index>& out) {
  out.clear();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) out.push_back(i);
}

}  // namespace

bool tdrc_gamma_step(TdrcGammaState& st, const Eigen::Ref<const Vec>& phi, const Eigen::Ref<const Vec>& phi_next,
                     double q_hat_next, const Eigen::Ref<const Vec>& score_next, double gamma, double* touched_max) {
  thread_local std::vector<Eigen::Index> cur, nxt;
  nonzero_rows(phi, cur);
  nonzero_rows(phi_next, nxt);
  const Eigen::Index np = st.g_matrix.cols();
  Vec eps = gamma * q_hat_next * score_next;
  Vec corr = Vec::Zero(np);
  for (Eigen::Index j : nxt) eps += (gamma * phi_next(j)) * st.g_matrix.row(j).transpose();
  for (Eigen::Index i : cur) {
    eps -= phi(i) * st.g_matrix.row(i).transpose();
    corr += phi(i) * st.h_matrix.row(i).transpose();
  }
  const double decay = 1.0 - st.alpha * st.beta_reg;
  st.h_matrix *= decay;
  const Vec h_inc = st.alpha * (eps - corr);
  const Vec g_inc = st.alpha * eps;
  const Vec g_dec = (st.alpha * gamma) * corr;
  for (Eigen::Index i : cur) {
    st.h_matrix.row(i) += phi(i) * h_inc.transpose();
    st.g_matrix.row(i) += phi(i) * g_inc.transpose();
  }
  for (Eigen::Index j : nxt) st.g_matrix.row(j) -= phi_next(j) * g_dec.transpose();

  // Untouched rows of G are unchanged and those of H only shrink when
  // |decay| <= 1, so the touched rows decide finiteness and the new maximum.
  const bool local = std::abs(decay) <= 1.0;
  double hi = 0.0;
  auto scan = [&](Eigen::Index i) {
    hi = std::max({hi, st.g_matrix.row(i).cwiseAbs().maxCoeff(), st.h_matrix.row(i).cwiseAbs().maxCoeff()});
  };
  if (local && np > 0) {
    for (Eigen::Index i : cur) scan(i);
    for (Eigen::Index j : nxt) scan(j);
  } else if (st.g_matrix.size()) {
    hi = std::max(st.g_matrix.cwiseAbs().maxCoeff(), st.h_matrix.cwiseAbs().maxCoeff());
  }
  if (touched_max) *touched_max = hi;
  return eps.allFinite() && std::isfinite(hi);
}

namespace {

double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TdrcTrainResult tdrc_gamma_train(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                                 const FeatureMap& value_features, const FeatureMap& grad_features,
                                 const TdrcTrainOptions& opt, Rng& rng) {
  if (!(opt.lambda >= 0.0 && opt.lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  if (opt.total_steps < 0) throw ConfigError("total_steps must be nonnegative");
  if (value_features.n_rows() != mdp.n_pairs() || grad_features.n_rows() != mdp.n_pairs())
    throw ConfigError("feature table does not match the MDP");
  TdrcTrainResult res;
  res.policy = policy;
  Policy& pi = res.policy;
  if (!opt.mask.empty()) pi.set_param_mask(opt.mask);
  const Vec mask = pi.mask_vector();
  const int np = pi.n_params();
  const int na = mdp.n_actions;
  const double gamma = mdp.gamma;
  const double alpha_g = opt.alpha_gamma < 0.0 ? opt.alpha : opt.alpha_gamma;
  res.value = TdrcValueState::zeros(value_features.n_features(), opt.alpha, opt.beta_reg);
  res.grad = TdrcGammaState::zeros(grad_features.n_features(), np, alpha_g, opt.beta_reg);
  const Vec zero_v = Vec::Zero(value_features.n_features());
  const Vec zero_g = Vec::Zero(grad_features.n_features());
  const Vec zero_p = Vec::Zero(np);

  res.curve.push_back({0, return_j(mdp, pi)});
  TraceFactor nu_lambda;
  TraceFactor nu_one;
  int s = sample_start(mdp, rng);
  int t = 0;
  Vec beh_probs;
  Vec probs, probs_next;
  Mat scores, scores_next;
  Vec update(np);
  Vec gamma_t(np);
  for (long it = 0; it < opt.total_steps; ++it) {
    beh_probs = behavior.probs(observe(mdp, s));
    const int a = rng.categorical(beh_probs.data(), na);
    const StepResult env = step(mdp, s, a, rng);
    const int s2 = env.s_next;
    const bool terminal = mdp.is_terminal(s2);
    pi.probs_and_scores(observe(mdp, s), probs, scores);
    const int a_pi = rng.categorical(probs.data(), na);
    pi.probs_and_scores(observe(mdp, s2), probs_next, scores_next);
    const int a2_pi = rng.categorical(probs_next.data(), na);

    // Actor.
    const double q_t = value_features.row(s, a_pi).dot(res.value.omega);
    gamma_t.setZero();
    for (int f = 0; f < grad_features.n_features(); ++f)
      if (const double w = grad_features.table(sa_index(s, a_pi, na), f); w != 0.0)
        gamma_t += w * res.grad.g_matrix.row(f).transpose();
    const double step_lambda = opt.actor_lr * nu_lambda.nu;
    const double step_one = opt.actor_lr * nu_one.nu;
    const double blend = 1.0 - opt.lambda;
    for (int k = 0; k < np; ++k) {
      const double g = q_t * scores(a_pi, k);
      if (mask(k) != 0.0)
        update(k) = step_lambda * (opt.use_gamma_term ? g + blend * gamma_t(k) : g);
      else
        update(k) = step_one * g;
    }
    pi.add_to_theta(update);

    // Critics, both from time-t weights.
    const double q_next = terminal ? 0.0 : value_features.row(s2, a2_pi).dot(res.value.omega);
    bool ok = true;
    double grad_max = 0.0;
    if (terminal) {
      ok &= tdrc_value_step(res.value, value_features.row(s, a).transpose(), zero_v, env.r, gamma);
      ok &= tdrc_gamma_step(res.grad, grad_features.row(s, a).transpose(), zero_g, 0.0, zero_p, gamma, &grad_max);
    } else {
      ok &= tdrc_value_step(res.value, value_features.row(s, a).transpose(),
                            value_features.row(s2, a2_pi).transpose(), env.r, gamma);
      ok &= tdrc_gamma_step(res.grad, grad_features.row(s, a).transpose(), grad_features.row(s2, a2_pi).transpose(),
                            q_next, scores_next.row(a2_pi).transpose(), gamma, &grad_max);
    }
    if (opt.record_theta) res.theta_trajectory.push_back(pi.theta());

    const double bound = opt.divergence_bound;
    if (!ok || !pi.theta().allFinite() || max_abs(pi.theta()) > bound || max_abs(res.value.omega) > bound ||
        max_abs(res.value.chi) > bound || grad_max > bound) {
      res.diverged = true;
      res.diverged_step = it + 1;
      res.curve.push_back({it + 1, std::numeric_limits<double>::quiet_NaN()});
      return res;
    }

    if (terminal || (opt.episode_len > 0 && t + 1 >= opt.episode_len)) {
      s = sample_start(mdp, rng);
      t = 0;
      nu_lambda.reset();
      nu_one.reset();
    } else {
      s = s2;
      ++t;
      nu_lambda.advance(opt.lambda, gamma);
      nu_one.advance(1.0, gamma);
    }
    const long done = it + 1;
    if (done == opt.total_steps || (opt.eval_every > 0 && done % opt.eval_every == 0))
      res.curve.push_back({done, return_j(mdp, pi)});
  }
  return res;
}

TdrcEvalResult tdrc_evaluate(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                             const FeatureMap& value_features, const FeatureMap& grad_features,
                             const TdrcEvalOptions& opt, Rng& rng) {
  if (opt.samples <= 0) throw ConfigError("samples must be positive");
  const int np = policy.n_params();
  const int na = mdp.n_actions;
  const double gamma = mdp.gamma;
  const double alpha_g = opt.alpha_gamma < 0.0 ? opt.alpha : opt.alpha_gamma;
  TdrcEvalResult res;
  res.value = TdrcValueState::zeros(value_features.n_features(), opt.alpha, opt.beta_reg);
  res.grad = TdrcGammaState::zeros(grad_features.n_features(), np, alpha_g, opt.beta_reg);
  res.omega_avg = Vec::Zero(value_features.n_features());
  res.g_avg = Mat::Zero(grad_features.n_features(), np);
  const long avg_from = opt.average_from < 0 ? opt.samples / 2 : opt.average_from;
  long averaged = 0;

  const PolicyTables pt = policy_tables(mdp, policy);
  const Vec d = behavior_occupancy(mdp, behavior);
  const Vec zero_v = Vec::Zero(value_features.n_features());
  const Vec zero_g = Vec::Zero(grad_features.n_features());
  const Vec zero_p = Vec::Zero(np);

  Vec frozen_sum = Vec::Zero(value_features.n_features());
  long frozen_count = 0;

  int s = sample_start(mdp, rng);
  int t = 0;
  for (long i = 0; i < opt.samples; ++i) {
    if (opt.decoupled_value_samples > 0 && i == opt.decoupled_value_samples && frozen_count > 0)
      res.value.omega = frozen_sum / static_cast<double>(frozen_count);
    int a;
    if (opt.sampling == Sampling::Iid) {
      const int k = rng.categorical(d.data(), mdp.n_pairs());
      s = k / na;
      a = k % na;
    } else {
      a = behavior.sample(observe(mdp, s), rng);
    }
    const StepResult env = step(mdp, s, a, rng);
    const int s2 = env.s_next;
    const bool terminal = mdp.is_terminal(s2);
    const int a2 = rng.categorical(pt.pi.data() + static_cast<Eigen::Index>(s2) * na, na);

    const bool value_phase = opt.decoupled_value_samples <= 0 || i < opt.decoupled_value_samples;
    const bool grad_phase = opt.decoupled_value_samples <= 0 || i >= opt.decoupled_value_samples;
    const double q_next = terminal ? 0.0 : value_features.row(s2, a2).dot(res.value.omega);
    bool ok = true;
    if (value_phase)
      ok &= tdrc_value_step(res.value, value_features.row(s, a).transpose(),
                            terminal ? zero_v : Vec(value_features.row(s2, a2).transpose()), env.r, gamma);
    if (grad_phase) {
      if (terminal)
        ok &= tdrc_gamma_step(res.grad, grad_features.row(s, a).transpose(), zero_g, 0.0, zero_p, gamma);
      else
        ok &= tdrc_gamma_step(res.grad, grad_features.row(s, a).transpose(), grad_features.row(s2, a2).transpose(),
                              q_next, pt.score.row(sa_index(s2, a2, na)).transpose(), gamma);
    }
    if (!ok) {
      res.diverged = true;
      return res;
    }
    if (value_phase && opt.decoupled_value_samples > 0 && 2 * i >= opt.decoupled_value_samples) {
      frozen_sum += res.value.omega;
      ++frozen_count;
    }
    if (i >= avg_from) {
      ++averaged;
      res.omega_avg += (res.value.omega - res.omega_avg) / static_cast<double>(averaged);
      res.g_avg += (res.grad.g_matrix - res.g_avg) / static_cast<double>(averaged);
    }
    if (opt.sampling == Sampling::Stream) {
      if (terminal || (opt.episode_len > 0 && t + 1 >= opt.episode_len)) {
        s = sample_start(mdp, rng);
        t = 0;
      } else {
        s = s2;
        ++t;
      }
    }
  }
  return res;
}

}  // namespace gradcritic
