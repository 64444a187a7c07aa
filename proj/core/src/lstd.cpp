#include "gradcritic/lstd.hpp"

#include "gradcritic/errors.hpp"
#include "gradcritic/oracle.hpp"

namespace gradcritic {

Json to_json(const LstdSolution& s) {
  return Json{{"omega", to_json(s.omega)},
              {"g_matrix", to_json(s.g_matrix)},
              {"condition", s.condition_a},
              {"regularized", s.regularized}};
}

std::vector<int> sample_next_actions(const FiniteMdp& mdp, const Dataset& data, const Policy& policy, Rng& rng) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const Transition& tr : data.transitions) out.push_back(policy.sample(observe(mdp, tr.s_next), rng));
  return out;
}

namespace {

void check_inputs(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& f, const std::vector<int>& next) {
  if (data.size() == 0) throw ConfigError("LSTD needs a nonempty dataset");
  if (f.n_rows() != mdp.n_pairs()) throw ConfigError("feature table does not match the MDP");
  if (!next.empty() && next.size() != data.size()) throw ConfigError("next_actions must match the dataset size");
}

// Current features X and next-state action weights W (N x n_actions, zero
// rows for terminal successors).
void design(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& f, const Vec& pi,
            const std::vector<int>& next, Mat& x, Mat& w) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  const int na = mdp.n_actions;
  x.resize(n, f.n_features());
  w.setZero(n, na);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& tr = data.transitions[i];
    x.row(i) = f.row(tr.s, tr.a);
    if (mdp.is_terminal(tr.s_next)) continue;
    if (next.empty())
      w.row(i) = pi.segment(static_cast<Eigen::Index>(tr.s_next) * na, na).transpose();
    else
      w(i, next[i]) = 1.0;
  }
}

Mat next_features(const Dataset& data, const FeatureMap& f, const Mat& w) {
  Mat y = Mat::Zero(w.rows(), f.n_features());
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (int a = 0; a < w.cols(); ++a)
      if (w(i, a) != 0.0) y.row(i) += w(i, a) * f.row(data.transitions[i].s_next, a);
  return y;
}

}  // namespace

AbEstimate estimate_a_b(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& features, const Policy& policy,
                        const std::vector<int>& next_actions) {
  check_inputs(mdp, data, features, next_actions);
  const PolicyTables pt = policy_tables(mdp, policy);
  Mat x, w;
  design(mdp, data, features, pt.pi, next_actions, x, w);
  const Mat y = next_features(data, features, w);
  Vec r(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) r(i) = data.transitions[i].r;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  return {inv_n * x.transpose() * (x - mdp.gamma * y), inv_n * x.transpose() * r};
}

Vec lstd_value(const Mat& a_hat, const Vec& b_hat, SingularPolicy policy, SolveInfo* info) {
  return solve_td(a_hat, b_hat, policy, info);
}

GammaEstimate lstd_gamma(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& grad_features,
                         const Policy& policy, const Vec& q_hat, const std::vector<int>& next_actions,
                         SingularPolicy singular) {
  check_inputs(mdp, data, grad_features, next_actions);
  if (q_hat.size() != mdp.n_pairs()) throw ConfigError("q_hat must have one entry per state-action pair");
  const PolicyTables pt = policy_tables(mdp, policy);
  Mat x, w;
  design(mdp, data, grad_features, pt.pi, next_actions, x, w);
  const Mat y = next_features(data, grad_features, w);
  const int na = mdp.n_actions;
  Mat z = Mat::Zero(x.rows(), policy.n_params());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int s2 = data.transitions[i].s_next;
    for (int a = 0; a < na; ++a) {
      if (w(i, a) == 0.0) continue;
      const int k = sa_index(s2, a, na);
      z.row(i) += w(i, a) * q_hat(k) * pt.score.row(k);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  GammaEstimate out;
  out.a_hat = inv_n * x.transpose() * (x - mdp.gamma * y);
  out.b_matrix = (mdp.gamma * inv_n) * x.transpose() * z;
  out.g_matrix = solve_td(out.a_hat, out.b_matrix, singular, &out.info);
  return out;
}

LstdSolution lstd_fit(const FiniteMdp& mdp, const Dataset& data, const FeatureMap& value_features,
                      const FeatureMap& grad_features, const Policy& policy, Rng& rng, const LstdOptions& options) {
  std::vector<int> next;
  if (!options.expected_next) next = sample_next_actions(mdp, data, policy, rng);
  LstdSolution sol;
  AbEstimate ab = estimate_a_b(mdp, data, value_features, policy, next);
  SolveInfo vinfo;
  sol.omega = lstd_value(ab.a_hat, ab.b_hat, options.singular, &vinfo);
  sol.a_hat = std::move(ab.a_hat);
  sol.b_hat = std::move(ab.b_hat);
  const Vec q_hat = options.q_source == QSource::Td ? Vec(value_features.table * sol.omega) : q_values(mdp, policy);
  GammaEstimate ge = lstd_gamma(mdp, data, grad_features, policy, q_hat, next, options.singular);
  sol.g_matrix = std::move(ge.g_matrix);
  sol.a_grad = std::move(ge.a_hat);
  sol.b_matrix = std::move(ge.b_matrix);
  sol.condition_a = vinfo.rcond;
  sol.regularized = vinfo.regularized || ge.info.regularized;
  return sol;
}

LstdSolution population_fixed_point(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                                    const FeatureMap& value_features, const FeatureMap& grad_features,
                                    QSource q_source, SingularPolicy singular) {
  if (value_features.n_rows() != mdp.n_pairs() || grad_features.n_rows() != mdp.n_pairs())
    throw ConfigError("feature table does not match the MDP");
  const PolicyTables pt = policy_tables(mdp, policy);
  const Vec d = behavior_occupancy(mdp, behavior);
  const Mat pn = pair_kernel_nonterminal(mdp, pt.pi);
  const Mat& phi_v = value_features.table;
  const Mat& phi_g = grad_features.table;

  LstdSolution sol;
  const Mat dv = phi_v.transpose() * d.asDiagonal();
  sol.a_hat = dv * (phi_v - mdp.gamma * pn * phi_v);
  sol.b_hat = dv * mdp.reward;
  SolveInfo vinfo;
  sol.omega = solve_td(sol.a_hat, sol.b_hat, singular, &vinfo);

  const Vec q_hat = q_source == QSource::Td ? Vec(phi_v * sol.omega) : q_values(mdp, policy);
  const Mat dg = phi_g.transpose() * d.asDiagonal();
  sol.a_grad = dg * (phi_g - mdp.gamma * pn * phi_g);
  const Mat target = pt.score.array().colwise() * q_hat.array();
  sol.b_matrix = mdp.gamma * dg * (pn * target);
  SolveInfo ginfo;
  sol.g_matrix = solve_td(sol.a_grad, sol.b_matrix, singular, &ginfo);
  sol.condition_a = vinfo.rcond;
  sol.regularized = vinfo.regularized || ginfo.regularized;
  return sol;
}

double td_jacobian_check(const FiniteMdp& mdp, const Policy& behavior, const Policy& policy,
                    const FeatureMap& shared_features, double h) {
  const LstdSolution base = population_fixed_point(mdp, behavior, policy, shared_features, shared_features);
  double worst = 0.0;
  Policy pert = policy;
  for (int k = 0; k < policy.n_params(); ++k) {
    Vec th = policy.theta();
    th(k) += h;
    pert.set_theta(th);
    const Vec up = population_fixed_point(mdp, behavior, pert, shared_features, shared_features).omega;
    th(k) -= 2.0 * h;
    pert.set_theta(th);
    const Vec down = population_fixed_point(mdp, behavior, pert, shared_features, shared_features).omega;
    const Vec fd = (up - down) / (2.0 * h);
    worst = std::max(worst, (fd - base.g_matrix.col(k)).cwiseAbs().maxCoeff());
  }
  return worst;
}

Mat generalized_ls(int x_count, const Mat& transition, const Vec& d, const Mat& c_matrix, const Mat& features,
                   double gamma) {
  if (transition.rows() != x_count || transition.cols() != x_count || d.size() != x_count ||
      c_matrix.rows() != x_count || features.rows() != x_count)
    throw ConfigError("generalized_ls: shape mismatch");
  const Mat dphi = features.transpose() * d.asDiagonal();
  const Mat a = dphi * (features - gamma * transition * features);
  return solve_td(a, dphi * c_matrix, SingularPolicy::Throw);
}

}  // namespace gradcritic
