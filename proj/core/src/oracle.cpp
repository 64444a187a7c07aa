#include "gradcritic/oracle.hpp"

#include <cmath>
#include <limits>

#include "gradcritic/errors.hpp"
#include "gradcritic/lstd.hpp"

namespace gradcritic {

Mat pair_kernel(const FiniteMdp& mdp, const Vec& pi) {
  const int na = mdp.n_actions;
  Mat p = Mat::Zero(mdp.n_pairs(), mdp.n_pairs());
  for (int i = 0; i < mdp.n_pairs(); ++i)
    for (int s2 = 0; s2 < mdp.n_states; ++s2) {
      const double ps = mdp.transition(i, s2);
      if (ps == 0.0) continue;
      for (int a2 = 0; a2 < na; ++a2) p(i, sa_index(s2, a2, na)) = ps * pi(sa_index(s2, a2, na));
    }
  return p;
}

Mat pair_kernel_nonterminal(const FiniteMdp& mdp, const Vec& pi) {
  Mat p = pair_kernel(mdp, pi);
  for (int s = 0; s < mdp.n_states; ++s)
    if (mdp.is_terminal(s)) p.middleCols(static_cast<Eigen::Index>(s) * mdp.n_actions, mdp.n_actions).setZero();
  return p;
}

Mat restart_kernel(const FiniteMdp& mdp, const Vec& pi) {
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  Mat k = Mat::Zero(ns, ns);
  for (int s = 0; s < ns; ++s) {
    if (mdp.is_terminal(s)) {
      k.row(s) = mdp.mu0.transpose();
      continue;
    }
    for (int a = 0; a < na; ++a) k.row(s) += pi(sa_index(s, a, na)) * mdp.transition.row(sa_index(s, a, na));
  }
  for (int s2 = 0; s2 < ns; ++s2) {
    if (!mdp.is_terminal(s2)) continue;
    // Mass entering a terminal state restarts from mu0.
    k += k.col(s2) * mdp.mu0.transpose();
    k.col(s2).setZero();
  }
  return k;
}

Vec stationary_distribution(const FiniteMdp& mdp, const Policy& policy, bool* ergodic) {
  const PolicyTables pt = policy_tables(mdp, policy);
  const Mat k = restart_kernel(mdp, pt.pi);
  const int n = mdp.n_states;
  Mat a = Mat::Identity(n, n) - k.transpose();
  a.row(n - 1).setOnes();
  Vec rhs = Vec::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::PartialPivLU<Mat> lu(a);
  Vec mu = lu.solve(rhs);
  bool ok = lu.rcond() > 1e-12 && mu.allFinite() && mu.minCoeff() > -1e-10 &&
            relative_residual(a, mu, rhs) < 1e-9;
  if (ergodic) *ergodic = ok;
  if (ok) {
    mu = mu.cwiseMax(0.0);
    // States without inflow (terminal states of the restart chain) hold no mass.
    for (int s = 0; s < n; ++s)
      if (k.col(s).cwiseAbs().maxCoeff() == 0.0) mu(s) = 0.0;
    return mu / mu.sum();
  }
  // Cesaro average from mu0 until successive averages agree to 1e-12.
  Vec cur = mdp.mu0;
  Vec avg = cur;
  for (int t = 1; t < 1000000; ++t) {
    cur = k.transpose() * cur;
    Vec next = avg + (cur - avg) / (t + 1.0);
    const double diff = (next - avg).cwiseAbs().sum();
    avg = next;
    if (diff < 1e-12 && t > 100) break;
  }
  return avg / avg.sum();
}

namespace {

Mat state_kernel(const FiniteMdp& mdp, const Vec& pi) {
  const int na = mdp.n_actions;
  Mat k = Mat::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < na; ++a) k.row(s) += pi(sa_index(s, a, na)) * mdp.transition.row(sa_index(s, a, na));
  return k;
}

Vec start_pairs(const FiniteMdp& mdp, const Vec& pi) {
  Vec d(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) d(sa_index(s, a, mdp.n_actions)) = mdp.mu0(s) * pi(sa_index(s, a, mdp.n_actions));
  return d;
}

void require_discount(const FiniteMdp& mdp) {
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0)) throw ConfigError("oracle requires gamma in [0,1)");
}

// Rows (q(s,a) score(s,a)).
Mat immediate_gradients(const Vec& q, const Mat& score) { return score.array().colwise() * q.array(); }

}  // namespace

OccupancyBundle discounted_distributions(const FiniteMdp& mdp, const Policy& policy) {
  require_discount(mdp);
  const PolicyTables pt = policy_tables(mdp, policy);
  OccupancyBundle b;
  b.mu_t_limit = stationary_distribution(mdp, policy, &b.ergodic);
  const Mat k = state_kernel(mdp, pt.pi);
  const Mat sys = (Mat::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * k).transpose();
  b.mu_gamma = (1.0 - mdp.gamma) * solve_checked(sys, mdp.mu0);
  b.d_sa.resize(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      b.d_sa(sa_index(s, a, mdp.n_actions)) = b.mu_t_limit(s) * pt.pi(sa_index(s, a, mdp.n_actions));
  return b;
}

Vec q_values(const FiniteMdp& mdp, const Policy& policy) {
  require_discount(mdp);
  const PolicyTables pt = policy_tables(mdp, policy);
  const Mat p = pair_kernel(mdp, pt.pi);
  return solve_checked(Mat::Identity(mdp.n_pairs(), mdp.n_pairs()) - mdp.gamma * p, mdp.reward);
}

double return_j(const FiniteMdp& mdp, const Policy& policy) {
  const PolicyTables pt = policy_tables(mdp, policy);
  const Vec q = q_values(mdp, policy);
  return (1.0 - mdp.gamma) * start_pairs(mdp, pt.pi).dot(q);
}

Vec true_policy_gradient(const FiniteMdp& mdp, const Policy& policy, bool normalized) {
  const PolicyTables pt = policy_tables(mdp, policy);
  const Vec q = q_values(mdp, policy);
  const OccupancyBundle occ = discounted_distributions(mdp, policy);
  Vec weight(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      weight(sa_index(s, a, mdp.n_actions)) = occ.mu_gamma(s) * pt.pi(sa_index(s, a, mdp.n_actions));
  Vec g = immediate_gradients(q, pt.score).transpose() * weight;
  return normalized ? g : Vec(g / (1.0 - mdp.gamma));
}

Mat true_gamma(const FiniteMdp& mdp, const Policy& policy) {
  require_discount(mdp);
  const PolicyTables pt = policy_tables(mdp, policy);
  const Mat p = pair_kernel(mdp, pt.pi);
  const Mat sys = Mat::Identity(mdp.n_pairs(), mdp.n_pairs()) - mdp.gamma * p;
  const Vec q = solve_checked(sys, mdp.reward);
  return solve_checked(sys, mdp.gamma * p * immediate_gradients(q, pt.score));
}

OracleGradients oracle_gradients(const FiniteMdp& mdp, const Policy& policy) {
  OracleGradients o;
  o.q = q_values(mdp, policy);
  o.gamma_matrix = true_gamma(mdp, policy);
  o.grad_j = true_policy_gradient(mdp, policy);
  o.j = return_j(mdp, policy);
  return o;
}

Json to_json(const OracleGradients& o) {
  Json j;
  j["q"] = to_json(o.q);
  j["gamma_matrix"] = to_json(o.gamma_matrix);
  j["grad_j"] = to_json(o.grad_j);
  j["j"] = o.j;
  return j;
}

double bellman_residual(const FiniteMdp& mdp, const Policy& policy, const Vec& q) {
  const PolicyTables pt = policy_tables(mdp, policy);
  return (q - mdp.reward - mdp.gamma * pair_kernel(mdp, pt.pi) * q).cwiseAbs().maxCoeff();
}

double gradient_bellman_residual(const FiniteMdp& mdp, const Policy& policy, const Vec& q, const Mat& g) {
  const PolicyTables pt = policy_tables(mdp, policy);
  const Mat p = pair_kernel(mdp, pt.pi);
  return (g - mdp.gamma * p * immediate_gradients(q, pt.score) - mdp.gamma * p * g).cwiseAbs().maxCoeff();
}

Vec n_step_gradient(const FiniteMdp& mdp, const Policy& policy, int n) {
  if (n < 1) throw ConfigError("n_step_gradient needs n >= 1");
  const PolicyTables pt = policy_tables(mdp, policy);
  const OracleGradients o = oracle_gradients(mdp, policy);
  const Mat p = pair_kernel(mdp, pt.pi);
  const Mat g = immediate_gradients(o.q, pt.score);
  Vec d = start_pairs(mdp, pt.pi);
  Vec out = Vec::Zero(policy.n_params());
  double w = 1.0;
  for (int t = 0; t < n; ++t) {
    out += w * (g.transpose() * d);
    if (t == n - 1) out += w * (o.gamma_matrix.transpose() * d);
    d = p.transpose() * d;
    w *= mdp.gamma;
  }
  return out;
}

Vec lambda_trace_gradient_exact(const FiniteMdp& mdp, const Policy& policy, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  const PolicyTables pt = policy_tables(mdp, policy);
  const OracleGradients o = oracle_gradients(mdp, policy);
  const Mat p = pair_kernel(mdp, pt.pi);
  const Mat g = immediate_gradients(o.q, pt.score);
  Vec d = start_pairs(mdp, pt.pi);
  Vec out = Vec::Zero(policy.n_params());
  double w = 1.0;
  while (true) {
    out += w * (g.transpose() * d + (1.0 - lambda) * (o.gamma_matrix.transpose() * d));
    w *= lambda * mdp.gamma;
    if (w < 1e-12 * (lambda < 1.0 ? 1.0 : 1e-4)) break;
    d = p.transpose() * d;
  }
  return out;
}

Vec behavior_occupancy(const FiniteMdp& mdp, const Policy& behavior) {
  const PolicyTables bt = policy_tables(mdp, behavior);
  const Vec mu = stationary_distribution(mdp, behavior);
  Vec d(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) d(sa_index(s, a, mdp.n_actions)) = mu(s) * bt.pi(sa_index(s, a, mdp.n_actions));
  return d;
}

double kappa(const FiniteMdp& mdp, const Policy& policy, const Policy& behavior) {
  const Vec target = behavior_occupancy(mdp, policy);
  const Vec beh = behavior_occupancy(mdp, behavior);
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < mdp.n_pairs(); ++i) {
    if (target(i) == 0.0 && beh(i) == 0.0) continue;
    if (beh(i) == 0.0) throw ConfigError("kappa: behaviour occupancy is zero on a pair the target visits");
    const double h = std::sqrt(target(i) / beh(i));
    hi = std::max(hi, h);
    lo = std::min(lo, h);
  }
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

double d_norm(const Mat& m, const Vec& d) {
  return std::sqrt((m.rowwise().squaredNorm().array() * d.array()).sum());
}

Projection weighted_projection(const FeatureMap& features, const Vec& d, const Mat& target) {
  const Mat& phi = features.table;
  if (phi.rows() != d.size() || target.rows() != d.size()) throw ConfigError("weighted_projection: shape mismatch");
  const Mat gram = phi.transpose() * d.asDiagonal() * phi;
  const Mat rhs = phi.transpose() * d.asDiagonal() * target;
  SolveInfo info;
  const Mat w = solve_td(gram, rhs, SingularPolicy::Throw, &info, 1e-10);
  Projection out;
  out.projected = phi * w;
  out.error = d_norm(out.projected - target, d);
  return out;
}

BoundReport bound_report(const FiniteMdp& mdp, const Policy& policy, const Policy& behavior,
                         const FeatureMap& value_features, const FeatureMap& grad_features) {
  BoundReport r;
  r.kappa = kappa(mdp, policy, behavior);
  r.b = score_infinity_bound(policy, mdp);
  r.n_params = policy.n_params();
  r.gamma = mdp.gamma;
  const Vec d = behavior_occupancy(mdp, behavior);
  const OracleGradients o = oracle_gradients(mdp, policy);
  r.proj_err_value = weighted_projection(value_features, d, o.q).error;
  r.proj_err_grad = weighted_projection(grad_features, d, o.gamma_matrix).error;

  const LstdSolution with_q =
      population_fixed_point(mdp, behavior, policy, value_features, grad_features, QSource::True);
  const LstdSolution with_td =
      population_fixed_point(mdp, behavior, policy, value_features, grad_features, QSource::Td);
  r.perfect_critic_lhs = d_norm(grad_features.table * with_q.g_matrix - o.gamma_matrix, d);
  r.td_critic_lhs = d_norm(grad_features.table * with_td.g_matrix - o.gamma_matrix, d);

  const double g = mdp.gamma;
  const double k = r.kappa;
  r.perfect_critic_rhs = (1.0 + k * g) / (1.0 - g) * r.proj_err_grad;
  r.perfect_critic_rhs_alt = (1.0 - g * k) / (1.0 - g) * r.proj_err_grad;
  const double value_term = g * r.n_params * r.b * k * r.proj_err_value;
  r.td_critic_rhs = (1.0 + g * k) / (1.0 - g) * r.proj_err_grad +
                   value_term * (1.0 + g * k) * (1.0 + g * k) / ((1.0 - g) * (1.0 - g));
  r.td_critic_rhs_alt = (1.0 + g * k) / (1.0 - g) * r.proj_err_grad + value_term * (1.0 + g * k) / ((1.0 - g) * (1.0 - g));
  // Equality holds at zero projection error; allow rounding there.
  const double slack = 1e-10 * (1.0 + o.gamma_matrix.cwiseAbs().maxCoeff());
  r.perfect_critic_holds = r.perfect_critic_lhs <= r.perfect_critic_rhs + slack;
  r.perfect_critic_alt_holds = r.perfect_critic_lhs <= r.perfect_critic_rhs_alt + slack;
  r.td_critic_holds = r.td_critic_lhs <= r.td_critic_rhs + slack;
  r.td_critic_alt_holds = r.td_critic_lhs <= r.td_critic_rhs_alt + slack;
  return r;
}

Json to_json(const BoundReport& r) {
  return Json{{"kappa", r.kappa},
              {"b", r.b},
              {"n_params", r.n_params},
              {"gamma", r.gamma},
              {"proj_err_value", r.proj_err_value},
              {"proj_err_grad", r.proj_err_grad},
              {"perfect_critic_lhs", r.perfect_critic_lhs},
              {"perfect_critic_rhs", r.perfect_critic_rhs},
              {"perfect_critic_rhs_alt", r.perfect_critic_rhs_alt},
              {"td_critic_lhs", r.td_critic_lhs},
              {"td_critic_rhs", r.td_critic_rhs},
              {"td_critic_rhs_alt", r.td_critic_rhs_alt},
              {"perfect_critic_holds", r.perfect_critic_holds},
              {"perfect_critic_alt_holds", r.perfect_critic_alt_holds},
              {"td_critic_holds", r.td_critic_holds},
              {"td_critic_alt_holds", r.td_critic_alt_holds}};
}

}  // namespace gradcritic
