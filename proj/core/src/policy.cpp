#include "gradcritic/policy.hpp"

#include <algorithm>
#include <cmath>

#include "gradcritic/errors.hpp"
#include "gradcritic/mdp.hpp"

namespace gradcritic {

std::string to_string(PolicyKind kind) {
  return kind == PolicyKind::TabularSoftmax ? "tabular-softmax" : "mlp-softmax";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "tabular-softmax" || s == "tabular") return PolicyKind::TabularSoftmax;
  if (s == "mlp-softmax" || s == "mlp") return PolicyKind::MlpSoftmax;
  throw ConfigError("unknown policy kind '" + s + "' (expected tabular-softmax or mlp-softmax)");
}

Policy Policy::tabular(int n_obs, int n_actions) {
  if (n_obs < 1 || n_actions < 1) throw ConfigError("tabular policy needs n_obs, n_actions >= 1");
  Policy p;
  p.kind_ = PolicyKind::TabularSoftmax;
  p.n_obs_ = n_obs;
  p.n_actions_ = n_actions;
  p.theta_ = Vec::Zero(static_cast<Eigen::Index>(n_obs) * n_actions);
  return p;
}

Policy Policy::mlp(int n_obs, int hidden, int n_actions) {
  if (n_obs < 1 || n_actions < 1 || hidden < 1)
    throw ConfigError("mlp policy needs n_obs, hidden, n_actions >= 1");
  Policy p;
  p.kind_ = PolicyKind::MlpSoftmax;
  p.n_obs_ = n_obs;
  p.n_actions_ = n_actions;
  p.hidden_ = hidden;
  p.theta_ = Vec::Zero(2 * hidden + n_actions * hidden + n_actions);
  return p;
}

void Policy::set_theta(const Vec& theta) {
  if (theta.size() != theta_.size()) throw ConfigError("set_theta: wrong parameter count");
  theta_ = theta;
}

void Policy::add_to_theta(const Vec& delta) {
  if (delta.size() != theta_.size()) throw ConfigError("add_to_theta: wrong parameter count");
  theta_ += delta;
}

void Policy::set_param_mask(std::vector<int> mask) {
  std::sort(mask.begin(), mask.end());
  mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
  for (int i : mask)
    if (i < 0 || i >= n_params()) throw ConfigError("param_mask index out of range");
  mask_ = std::move(mask);
}

Vec Policy::mask_vector() const {
  if (mask_.empty()) return Vec::Ones(n_params());
  Vec m = Vec::Zero(n_params());
  for (int i : mask_) m(i) = 1.0;
  return m;
}

std::vector<int> Policy::last_layer_indices() const {
  int first = kind_ == PolicyKind::MlpSoftmax ? 2 * hidden_ : 0;
  std::vector<int> idx;
  for (int i = first; i < n_params(); ++i) idx.push_back(i);
  return idx;
}

double Policy::input(int obs) const {
  return n_obs_ > 1 ? static_cast<double>(obs) / (n_obs_ - 1) : 0.0;
}

Vec Policy::logits(int obs) const {
  if (obs < 0 || obs >= n_obs_) throw ConfigError("observation out of range");
  if (kind_ == PolicyKind::TabularSoftmax)
    return theta_.segment(static_cast<Eigen::Index>(obs) * n_actions_, n_actions_);
  const int h = hidden_;
  const double x = input(obs);
  Vec z = (theta_.segment(0, h) * x + theta_.segment(h, h)).array().tanh().matrix();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w2(
      theta_.data() + 2 * h, n_actions_, h);
  return w2 * z + theta_.segment(2 * h + n_actions_ * h, n_actions_);
}

namespace {
Vec softmax(const Vec& l) {
  Vec e = (l.array() - l.maxCoeff()).exp().matrix();
  return e / e.sum();
}
}  // namespace

Vec Policy::probs(int obs) const { return softmax(logits(obs)); }

void Policy::probs_and_scores(int obs, Vec& pr, Mat& scores) const {
  if (kind_ == PolicyKind::TabularSoftmax) {
    pr = probs(obs);
    scores.setZero(n_actions_, n_params());
    const Eigen::Index base = static_cast<Eigen::Index>(obs) * n_actions_;
    for (int a = 0; a < n_actions_; ++a) {
      scores.block(a, base, 1, n_actions_) = -pr.transpose();
      scores(a, base + a) += 1.0;
    }
    return;
  }
  if (obs < 0 || obs >= n_obs_) throw ConfigError("observation out of range");
  const int h = hidden_;
  const int na = n_actions_;
  const double x = input(obs);
  thread_local Vec z, l, e, dpre;
  z = (theta_.segment(0, h) * x + theta_.segment(h, h)).array().tanh().matrix();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w2(
      theta_.data() + 2 * h, na, h);
  l.noalias() = w2 * z;
  l += theta_.segment(2 * h + na * h, na);
  pr = (l.array() - l.maxCoeff()).exp().matrix();
  pr /= pr.sum();
  scores.resize(na, n_params());
  for (int a = 0; a < na; ++a) {
    // d log pi_a / d logits = e_a - pi
    e = -pr;
    e(a) += 1.0;
    auto row = scores.row(a);
    for (int k = 0; k < na; ++k) {
      row.segment(2 * h + k * h, h) = e(k) * z.transpose();
      row(2 * h + na * h + k) = e(k);
    }
    dpre.noalias() = w2.transpose() * e;
    dpre.array() *= 1.0 - z.array().square();
    row.segment(0, h) = dpre.transpose() * x;
    row.segment(h, h) = dpre.transpose();
  }
}

Vec Policy::score(int obs, int a) const {
  Vec pr;
  Mat sc;
  probs_and_scores(obs, pr, sc);
  return sc.row(a).transpose();
}

int Policy::sample(int obs, Rng& rng) const {
  Vec pr = probs(obs);
  return rng.categorical(pr.data(), n_actions_);
}

void Policy::set_tabular_probs(const Vec& pr) {
  if (kind_ != PolicyKind::TabularSoftmax) throw ConfigError("set_tabular_probs needs a tabular policy");
  if (pr.size() != n_actions_) throw ConfigError("set_tabular_probs: wrong action count");
  for (int o = 0; o < n_obs_; ++o)
    theta_.segment(static_cast<Eigen::Index>(o) * n_actions_, n_actions_) = pr.array().log().matrix();
}

PolicyTables policy_tables(const FiniteMdp& mdp, const Policy& policy) {
  if (policy.n_actions() != mdp.n_actions) throw ConfigError("policy action count does not match MDP");
  if (policy.n_obs() < n_observations(mdp)) throw ConfigError("policy observation count too small for MDP");
  PolicyTables t;
  t.pi.resize(mdp.n_pairs());
  t.score.resize(mdp.n_pairs(), policy.n_params());
  Vec pr;
  Mat sc;
  for (int s = 0; s < mdp.n_states; ++s) {
    policy.probs_and_scores(observe(mdp, s), pr, sc);
    t.pi.segment(static_cast<Eigen::Index>(s) * mdp.n_actions, mdp.n_actions) = pr;
    t.score.middleRows(static_cast<Eigen::Index>(s) * mdp.n_actions, mdp.n_actions) = sc;
  }
  return t;
}

double score_infinity_bound(const Policy& policy, const FiniteMdp& mdp) {
  return policy_tables(mdp, policy).score.cwiseAbs().maxCoeff();
}

}  // namespace gradcritic
