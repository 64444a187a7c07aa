#include "gradcritic/mdp.hpp"

#include <cmath>
#include <algorithm>
#include <sstream>

#include "gradcritic/errors.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

bool FiniteMdp::has_terminal() const {
  for (bool t : terminal)
    if (t) return true;
  return false;
}

FiniteMdp make_mdp(int n_states, int n_actions, double gamma) {
  if (n_states < 1 || n_actions < 1) throw ConfigError("MDP needs at least one state and one action");
  FiniteMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.mu0 = Vec::Zero(n_states);
  m.transition = Mat::Zero(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
  m.reward = Vec::Zero(static_cast<Eigen::Index>(n_states) * n_actions);
  return m;
}

std::vector<std::string> validate(const FiniteMdp& m) {
  std::vector<std::string> out;
  auto fail = [&out](auto&&... parts) {
    std::ostringstream s;
    (s << ... << parts);
    out.push_back(s.str());
  };
  if (m.n_states < 1 || m.n_actions < 1) {
    fail("n_states and n_actions must be positive");
    return out;
  }
  const Eigen::Index np = static_cast<Eigen::Index>(m.n_states) * m.n_actions;
  if (m.transition.rows() != np || m.transition.cols() != m.n_states) {
    fail("transition has shape ", m.transition.rows(), "x", m.transition.cols(), ", expected ", np, "x",
         m.n_states);
    return out;
  }
  if (m.reward.size() != np) fail("reward has ", m.reward.size(), " entries, expected ", np);
  if (m.mu0.size() != m.n_states) fail("mu0 has ", m.mu0.size(), " entries, expected ", m.n_states);
  if (!(m.gamma >= 0.0 && m.gamma < 1.0)) fail("gamma ", m.gamma, " outside [0,1)");
  if (!m.terminal.empty() && static_cast<int>(m.terminal.size()) != m.n_states)
    fail("terminal has ", m.terminal.size(), " entries, expected ", m.n_states);
  if (!m.aliasing.empty()) {
    if (static_cast<int>(m.aliasing.size()) != m.n_states)
      fail("aliasing has ", m.aliasing.size(), " entries, expected ", m.n_states);
    for (std::size_t s = 0; s < m.aliasing.size(); ++s)
      if (m.aliasing[s] < 0 || m.aliasing[s] >= m.n_states)
        fail("aliasing of state ", s, " maps to invalid state ", m.aliasing[s]);
  }
  if (!(m.reward_noise_std >= 0.0)) fail("reward_noise_std must be nonnegative");

  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      const auto row = m.transition.row(sa_index(s, a, m.n_actions));
      if (!row.allFinite() || row.minCoeff() < 0.0) fail("row (s=", s, ",a=", a, ") has a negative or non-finite entry");
      const double sum = row.sum();
      if (std::abs(sum - 1.0) > 1e-12) fail("row (s=", s, ",a=", a, ") sums to ", sum);
    }
  if (m.mu0.size() == m.n_states) {
    if (!m.mu0.allFinite() || m.mu0.minCoeff() < 0.0) fail("mu0 has a negative or non-finite entry");
    if (std::abs(m.mu0.sum() - 1.0) > 1e-12) fail("mu0 sums to ", m.mu0.sum());
  }
  if (m.reward.size() == np && !m.reward.allFinite()) fail("reward has a non-finite entry");
  if (static_cast<int>(m.terminal.size()) == m.n_states && m.reward.size() == np)
    for (int s = 0; s < m.n_states; ++s) {
      if (!m.terminal[s]) continue;
      for (int a = 0; a < m.n_actions; ++a) {
        if (m.p(s, a, s) != 1.0) fail("terminal state ", s, " is not absorbing under action ", a);
        if (m.r(s, a) != 0.0) fail("terminal reward nonzero at (s=", s, ",a=", a, ")");
      }
    }
  return out;
}

void require_valid(const FiniteMdp& mdp) {
  auto v = validate(mdp);
  if (v.empty()) return;
  std::string msg = "invalid MDP:";
  for (auto& line : v) msg += "\n  " + line;
  throw ConfigError(msg);
}

int observe(const FiniteMdp& mdp, int s) { return mdp.aliasing.empty() ? s : mdp.aliasing[s]; }

int n_observations(const FiniteMdp& mdp) {
  if (mdp.aliasing.empty()) return mdp.n_states;
  int hi = 0;
  for (int o : mdp.aliasing) hi = std::max(hi, o);
  return hi + 1;
}

StepResult step(const FiniteMdp& mdp, int s, int a, Rng& rng) {
  if (mdp.is_terminal(s)) return {s, 0.0};
  const Vec row = mdp.transition.row(sa_index(s, a, mdp.n_actions)).transpose();
  int s_next = rng.categorical(row.data(), mdp.n_states);
  double r = mdp.r(s, a);
  if (mdp.reward_noise_std > 0.0) r += mdp.reward_noise_std * rng.normal();
  return {s_next, r};
}

int sample_start(const FiniteMdp& mdp, Rng& rng) { return rng.categorical(mdp.mu0.data(), mdp.n_states); }

std::vector<std::span<const Transition>> Dataset::episodes() const {
  std::vector<std::span<const Transition>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= transitions.size(); ++i) {
    if (i == transitions.size() || transitions[i].episode_start) {
      if (i > begin) out.emplace_back(transitions.data() + begin, i - begin);
      begin = i;
    }
  }
  return out;
}

Dataset collect_dataset(const FiniteMdp& mdp, const Policy& behavior, std::size_t n_transitions,
                        int episode_len, Rng& rng) {
  if (episode_len <= 0) throw ConfigError("episode_len must be positive");
  if (behavior.n_actions() != mdp.n_actions || behavior.n_obs() < n_observations(mdp))
    throw ConfigError("behavior policy incompatible with MDP");
  Dataset d;
  d.transitions.reserve(n_transitions);
  int s = sample_start(mdp, rng);
  int t = 0;
  while (d.transitions.size() < n_transitions) {
    const int a = behavior.sample(observe(mdp, s), rng);
    const StepResult res = step(mdp, s, a, rng);
    d.transitions.push_back({s, a, res.r, res.s_next, t, t == 0});
    if (mdp.is_terminal(res.s_next) || mdp.is_terminal(s) || t + 1 >= episode_len) {
      s = sample_start(mdp, rng);
      t = 0;
    } else {
      s = res.s_next;
      ++t;
    }
  }
  return d;
}

FeatureMap one_hot_features(const FiniteMdp& mdp) {
  FeatureMap f;
  f.table = Mat::Identity(mdp.n_pairs(), mdp.n_pairs());
  f.n_actions = mdp.n_actions;
  return f;
}

FeatureMap random_features(const FiniteMdp& mdp, int n_features, Rng& rng) {
  if (n_features < 1) throw ConfigError("n_features must be positive");
  FeatureMap f;
  f.n_actions = mdp.n_actions;
  f.table.resize(mdp.n_pairs(), n_features);
  for (Eigen::Index j = 0; j < f.table.cols(); ++j)
    for (Eigen::Index i = 0; i < f.table.rows(); ++i) f.table(i, j) = rng.normal();
  return f;
}

}  // namespace gradcritic
