#include "gradcritic/estimators.hpp"

#include <cmath>

#include "gradcritic/errors.hpp"
#include "gradcritic/lstd.hpp"
#include "gradcritic/oracle.hpp"

namespace gradcritic {

Json to_json(const EstimateReport& r) {
  Json j{{"grad", to_json(r.grad)},
         {"estimator_id", r.estimator_id},
         {"corrected", r.corrected},
         {"n_samples", r.n_samples},
         {"seed", r.seed}};
  j["lambda"] = r.lambda ? Json(*r.lambda) : Json(nullptr);
  j["n"] = r.n ? Json(*r.n) : Json(nullptr);
  return j;
}

namespace {

void check_critic(const FiniteMdp& mdp, const CriticTables& c, const Policy& policy) {
  if (c.q.size() != mdp.n_pairs()) throw ConfigError("critic q table has the wrong size");
  if (c.gamma.rows() != mdp.n_pairs() || c.gamma.cols() != policy.n_params())
    throw ConfigError("critic Gamma table has the wrong shape");
}

double ratio(const PolicyTables& target, const PolicyTables& beh, int k) {
  const double b = beh.pi(k);
  if (b <= 0.0) {
    if (target.pi(k) == 0.0) return 0.0;
    throw NumericalError("behaviour probability is zero on a visited or target-supported pair");
  }
  return target.pi(k) / b;
}

int draw(const PolicyTables& pt, int s, int na, Rng& rng) {
  return rng.categorical(pt.pi.data() + static_cast<Eigen::Index>(s) * na, na);
}

Vec resolve_mask(const Vec& mask, const Policy& policy) {
  if (mask.size() == 0) return policy.mask_vector();
  if (mask.size() != policy.n_params()) throw ConfigError("mask length must equal the parameter count");
  return mask;
}

// One propagation step of state mass under the behaviour, optionally
// reweighted by pi/beta per action.
Vec propagate(const FiniteMdp& mdp, const PolicyTables& target, const PolicyTables& beh, const Vec& w,
              bool corrected) {
  const int na = mdp.n_actions;
  Vec out = Vec::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (w(s) == 0.0) continue;
    for (int a = 0; a < na; ++a) {
      const int k = sa_index(s, a, na);
      if (beh.pi(k) == 0.0) {
        if (corrected && target.pi(k) > 0.0) ratio(target, beh, k);
        continue;
      }
      const double mass = corrected ? beh.pi(k) * ratio(target, beh, k) : beh.pi(k);
      out += (w(s) * mass) * mdp.transition.row(k).transpose();
    }
  }
  return out;
}

// sum_s w(s) sum_a pi(a|s) M((s,a), :)
Vec state_average(const FiniteMdp& mdp, const PolicyTables& pt, const Vec& w, const Mat& m) {
  Vec out = Vec::Zero(m.cols());
  for (int s = 0; s < mdp.n_states; ++s) {
    if (w(s) == 0.0) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int k = sa_index(s, a, mdp.n_actions);
      out += (w(s) * pt.pi(k)) * m.row(k).transpose();
    }
  }
  return out;
}

}  // namespace

EstimateReport semi_gradient(const FiniteMdp& mdp, const Dataset& data, const Vec& q_hat, const Policy& policy,
                             const Policy& behavior) {
  if (data.size() == 0) throw ConfigError("semi_gradient needs a nonempty dataset");
  const PolicyTables pt = policy_tables(mdp, policy);
  const PolicyTables bt = policy_tables(mdp, behavior);
  Vec g = Vec::Zero(policy.n_params());
  for (const Transition& tr : data.transitions) {
    const int k = sa_index(tr.s, tr.a, mdp.n_actions);
    if (bt.pi(k) <= 0.0) throw NumericalError("behaviour probability is zero on a logged pair");
    g += (pt.pi(k) / bt.pi(k) * q_hat(k)) * pt.score.row(k).transpose();
  }
  EstimateReport r;
  r.grad = g / ((1.0 - mdp.gamma) * static_cast<double>(data.size()));
  r.estimator_id = "semi_gradient";
  r.corrected = true;
  r.n_samples = data.size();
  return r;
}

EstimateReport pathwise_is_gradient(const FiniteMdp& mdp, const Dataset& data, const CriticTables& critic,
                                    const Policy& policy, const Policy& behavior, std::optional<int> n, Rng& rng) {
  check_critic(mdp, critic, policy);
  if (n && *n < 0) throw ConfigError("n must be nonnegative");
  const PolicyTables pt = policy_tables(mdp, policy);
  const PolicyTables bt = policy_tables(mdp, behavior);
  const int na = mdp.n_actions;
  const auto episodes = data.episodes();
  if (episodes.empty()) throw ConfigError("pathwise_is_gradient needs at least one episode");
  Vec total = Vec::Zero(policy.n_params());
  for (const auto& ep : episodes) {
    const int len = static_cast<int>(ep.size());
    const int last = n ? std::min(*n, len) : len - 1;
    double rho = 1.0;
    double disc = 1.0;
    for (int t = 0; t <= last; ++t) {
      const int s = t < len ? ep[t].s : ep[len - 1].s_next;
      const int a = draw(pt, s, na, rng);
      const int k = sa_index(s, a, na);
      total += (disc * rho * critic.q(k)) * pt.score.row(k).transpose();
      if (n && t == last) total += (disc * rho) * critic.gamma.row(k).transpose();
      if (t < len) rho *= ratio(pt, bt, sa_index(ep[t].s, ep[t].a, na));
      disc *= mdp.gamma;
    }
  }
  EstimateReport r;
  r.grad = total / static_cast<double>(episodes.size());
  r.estimator_id = "pathwise_is";
  r.n = n;
  r.corrected = true;
  r.n_samples = data.size();
  return r;
}

EstimateReport start_state_gradient(const FiniteMdp& mdp, const std::vector<int>& start_states,
                                    const CriticTables& critic, const Policy& policy, Rng& rng, bool exact_actions) {
  check_critic(mdp, critic, policy);
  if (start_states.empty()) throw ConfigError("start_state_gradient needs at least one start state");
  const PolicyTables pt = policy_tables(mdp, policy);
  const int na = mdp.n_actions;
  Vec total = Vec::Zero(policy.n_params());
  for (int s : start_states) {
    if (exact_actions) {
      for (int a = 0; a < na; ++a) {
        const int k = sa_index(s, a, na);
        total += pt.pi(k) * (critic.q(k) * pt.score.row(k) + critic.gamma.row(k)).transpose();
      }
    } else {
      const int k = sa_index(s, draw(pt, s, na, rng), na);
      total += (critic.q(k) * pt.score.row(k) + critic.gamma.row(k)).transpose();
    }
  }
  EstimateReport r;
  r.grad = total / static_cast<double>(start_states.size());
  r.estimator_id = "start_state";
  r.lambda = 0.0;
  r.n_samples = start_states.size();
  return r;
}

Vec start_state_gradient_exact(const FiniteMdp& mdp, const CriticTables& critic, const Policy& policy) {
  check_critic(mdp, critic, policy);
  const PolicyTables pt = policy_tables(mdp, policy);
  const Mat g = (pt.score.array().colwise() * critic.q.array()).matrix() + critic.gamma;
  return state_average(mdp, pt, mdp.mu0, g);
}

std::vector<int> dataset_start_states(const Dataset& data) {
  std::vector<int> out;
  for (const Transition& tr : data.transitions)
    if (tr.episode_start) out.push_back(tr.s);
  return out;
}

EstimateReport lambda_trace_gradient(const FiniteMdp& mdp, const Dataset& data, const CriticTables& critic,
                                     const Policy& policy, const Policy& behavior, double lambda, bool corrected,
                                     Rng& rng, const Vec& mask_in, TraceVariant variant) {
  check_critic(mdp, critic, policy);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  const Vec mask = resolve_mask(mask_in, policy);
  const PolicyTables pt = policy_tables(mdp, policy);
  const PolicyTables bt = corrected ? policy_tables(mdp, behavior) : PolicyTables{};
  const int na = mdp.n_actions;
  const int np = policy.n_params();
  const auto episodes = data.episodes();
  if (episodes.empty()) throw ConfigError("lambda_trace_gradient needs at least one episode");
  Vec total = Vec::Zero(np);
  const double blend = variant == TraceVariant::Blend ? 1.0 - lambda : 1.0;
  for (const auto& ep : episodes) {
    double rho = 1.0;
    double nu = 1.0;
    double nu_one = 1.0;
    for (const Transition& tr : ep) {
      const int k = sa_index(tr.s, draw(pt, tr.s, na, rng), na);
      const double q = critic.q(k);
      for (int c = 0; c < np; ++c) {
        const double g = q * pt.score(k, c);
        total(c) += mask(c) != 0.0 ? rho * nu * (g + blend * critic.gamma(k, c)) : rho * nu_one * g;
      }
      if (corrected) rho *= ratio(pt, bt, sa_index(tr.s, tr.a, na));
      nu *= lambda * mdp.gamma;
      nu_one *= mdp.gamma;
    }
  }
  EstimateReport r;
  r.grad = total / static_cast<double>(episodes.size());
  r.estimator_id = "lambda_trace";
  r.lambda = lambda;
  r.corrected = corrected;
  r.n_samples = data.size();
  return r;
}

Vec expected_lambda_trace(const FiniteMdp& mdp, const CriticTables& critic, const Policy& policy,
                          const Policy& behavior, double lambda, bool corrected, int horizon, const Vec& mask_in) {
  check_critic(mdp, critic, policy);
  const Vec mask = resolve_mask(mask_in, policy);
  const PolicyTables pt = policy_tables(mdp, policy);
  const PolicyTables bt = policy_tables(mdp, behavior);
  const Mat g = pt.score.array().colwise() * critic.q.array();
  const Mat tracked = g + (1.0 - lambda) * critic.gamma;
  const bool any_untracked = (mask.array() == 0.0).any();
  Vec w = mdp.mu0;
  Vec out = Vec::Zero(policy.n_params());
  double nu = 1.0;
  double nu_one = 1.0;
  for (int t = 0; horizon <= 0 || t < horizon; ++t) {
    const Vec lam = state_average(mdp, pt, w, tracked);
    const Vec one = state_average(mdp, pt, w, g);
    out += (nu * lam).cwiseProduct(mask) + (nu_one * one).cwiseProduct(Vec::Ones(mask.size()) - mask);
    nu *= lambda * mdp.gamma;
    nu_one *= mdp.gamma;
    if (horizon <= 0 && nu < 1e-14 && (!any_untracked || nu_one < 1e-14)) break;
    w = propagate(mdp, pt, bt, w, corrected);
  }
  return out;
}

Vec expected_pathwise_is(const FiniteMdp& mdp, const CriticTables& critic, const Policy& policy,
                         const Policy& behavior, std::optional<int> n) {
  check_critic(mdp, critic, policy);
  const PolicyTables pt = policy_tables(mdp, policy);
  const PolicyTables bt = policy_tables(mdp, behavior);
  const Mat g = pt.score.array().colwise() * critic.q.array();
  Vec w = mdp.mu0;
  Vec out = Vec::Zero(policy.n_params());
  double disc = 1.0;
  for (int t = 0;; ++t) {
    out += disc * state_average(mdp, pt, w, g);
    if (n && t == *n) {
      out += disc * state_average(mdp, pt, w, critic.gamma);
      break;
    }
    disc *= mdp.gamma;
    if (!n && disc < 1e-14) break;
    w = propagate(mdp, pt, bt, w, true);
  }
  return out;
}

Vec expected_semi_gradient(const FiniteMdp& mdp, const Vec& q_hat, const Policy& policy, const Policy& behavior,
                           const Vec& d) {
  const PolicyTables pt = policy_tables(mdp, policy);
  const PolicyTables bt = policy_tables(mdp, behavior);
  Vec out = Vec::Zero(policy.n_params());
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    if (d(k) == 0.0) continue;
    out += (d(k) * ratio(pt, bt, k) * q_hat(k)) * pt.score.row(k).transpose();
  }
  return out / (1.0 - mdp.gamma);
}

AdamState AdamState::zeros(int n, double lr) {
  AdamState s;
  s.m = Vec::Zero(n);
  s.v = Vec::Zero(n);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& st, const Vec& grad, Vec& theta) {
  if (grad.size() != theta.size() || st.m.size() != theta.size()) throw ConfigError("adam_step: shape mismatch");
  ++st.t;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  theta.array() += st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

std::string to_string(TraceVariant v) { return v == TraceVariant::Blend ? "blend" : "alg4"; }

TraceVariant trace_variant_from_string(const std::string& s) {
  if (s == "blend") return TraceVariant::Blend;
  if (s == "alg4") return TraceVariant::Alg4;
  throw ConfigError("unknown trace variant '" + s + "' (expected blend or alg4)");
}

ImproveResult lstd_gamma_trace_improve(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& value_features,
                                       const FeatureMap& grad_features, const Policy& policy,
                                       const ImproveOptions& opt, AdamState& adam, Rng& rng) {
  if (!(opt.lambda >= 0.0 && opt.lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  if (data.size() == 0) throw ConfigError("improvement needs a nonempty dataset");
  ImproveResult res;
  res.policy = policy;
  Policy& pi = res.policy;
  const Vec mask = pi.mask_vector();
  const int np = pi.n_params();
  const int na = mdp.n_actions;
  const double blend = opt.variant == TraceVariant::Blend ? 1.0 - opt.lambda : 1.0;
  res.curve.push_back({0, return_j(mdp, pi)});
  LstdOptions lopt;
  lopt.singular = opt.singular;
  Vec theta = pi.theta();
  Vec grad(np);
  Vec probs;
  Mat scores;
  for (long it = 0; it < opt.iters; ++it) {
    const LstdSolution sol = lstd_fit(mdp, data, value_features, grad_features, pi, rng, lopt);
    res.regularized |= sol.regularized;
    const Transition& tr = data.transitions[rng.uniform_int(static_cast<int>(data.size()))];
    pi.probs_and_scores(observe(mdp, tr.s), probs, scores);
    const int a = rng.categorical(probs.data(), na);
    const double q = value_features.row(tr.s, a).dot(sol.omega);
    const Vec gam = sol.g_matrix.transpose() * grad_features.row(tr.s, a).transpose();
    const double w = std::pow(opt.lambda * mdp.gamma, tr.t);
    const double w_one = std::pow(mdp.gamma, tr.t);
    for (int c = 0; c < np; ++c) {
      const double g = q * scores(a, c);
      grad(c) = mask(c) != 0.0 ? w * (g + blend * gam(c)) : w_one * g;
    }
    adam_step(adam, grad, theta);
    pi.set_theta(theta);
    const long done = it + 1;
    if (done == opt.iters || (opt.eval_every > 0 && done % opt.eval_every == 0))
      res.curve.push_back({done, return_j(mdp, pi)});
  }
  return res;
}

}  // namespace gradcritic
