#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradcritic/linalg.hpp"
#include "gradcritic/rng.hpp"

namespace gradcritic {

class Policy;

// Flattened index of a state-action pair, used by every matrix in the library.
inline int sa_index(int s, int a, int n_actions) { return s * n_actions + a; }

struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  Vec mu0;
  // Row s*n_actions + a holds p(.|s,a).
  Mat transition;
  // Entry s*n_actions + a holds r(s,a).
  Vec reward;
  std::vector<bool> terminal;
  // Observation fed to the policy; empty means identity.
  std::vector<int> aliasing;
  double reward_noise_std = 0.0;

  int n_pairs() const { return n_states * n_actions; }
  double p(int s, int a, int s_next) const { return transition(sa_index(s, a, n_actions), s_next); }
  double r(int s, int a) const { return reward(sa_index(s, a, n_actions)); }
  bool is_terminal(int s) const { return !terminal.empty() && terminal[s]; }
  bool has_terminal() const;
};

// Sized, zeroed MDP with no terminal states and no aliasing.
FiniteMdp make_mdp(int n_states, int n_actions, double gamma);

// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validate(const FiniteMdp& mdp);
// Throws ConfigError listing the violations.
void require_valid(const FiniteMdp& mdp);

int observe(const FiniteMdp& mdp, int s);
// Number of distinct observation ids the policy must accept.
int n_observations(const FiniteMdp& mdp);

struct StepResult {
  int s_next;
  double r;
};

StepResult step(const FiniteMdp& mdp, int s, int a, Rng& rng);
int sample_start(const FiniteMdp& mdp, Rng& rng);

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  int t = 0;
  bool episode_start = false;
};

struct Dataset {
  std::vector<Transition> transitions;
  std::string behavior_id;

  std::size_t size() const { return transitions.size(); }
  // Contiguous runs starting at each episode_start transition.
  std::vector<std::span<const Transition>> episodes() const;
};

Dataset collect_dataset(const FiniteMdp& mdp, const Policy& behavior, std::size_t n_transitions,
                        int episode_len, Rng& rng);

struct FeatureMap {
  // Row s*n_actions + a holds phi(s,a).
  Mat table;
  int n_actions = 1;

  int n_features() const { return static_cast<int>(table.cols()); }
  int n_rows() const { return static_cast<int>(table.rows()); }
  auto row(int s, int a) const { return table.row(sa_index(s, a, n_actions)); }
  int rank(double tol = 1e-10) const { return numerical_rank(table, tol); }
};

FeatureMap one_hot_features(const FiniteMdp& mdp);
// Standard-normal table of shape (n_pairs x n_features).
FeatureMap random_features(const FiniteMdp& mdp, int n_features, Rng& rng);

}  // namespace gradcritic
